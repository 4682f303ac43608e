#include "eeb/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "eeb/errors.hpp"
#include "eeb/hash.hpp"
#include "eeb/windowing.hpp"

namespace eeb {

std::vector<Fold> loso_folds(std::span<const int> subject_ids) {
  std::vector<int> ids(subject_ids.begin(), subject_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ProtocolError("duplicate subject id " + std::to_string(*std::adjacent_find(ids.begin(), ids.end())));
  }
  if (ids.size() < 2) throw ProtocolError("leave-one-subject-out needs at least 2 subjects");
  std::vector<Fold> folds;
  for (int test : ids) {
    Fold f{test, {}};
    std::copy_if(ids.begin(), ids.end(), std::back_inserter(f.train_subjects), [test](int s) { return s != test; });
    folds.push_back(std::move(f));
  }
  return folds;
}

std::size_t MetricsReport::failed_folds() const {
  return static_cast<std::size_t>(std::count_if(folds.begin(), folds.end(), [](const auto& f) { return f.failed; }));
}

std::vector<double> MetricsReport::fold_rmses() const {
  std::vector<double> r;
  for (const auto& f : folds) {
    if (!f.failed) r.push_back(f.rmse);
  }
  return r;
}

std::uint64_t fold_seed(std::uint64_t seed, int test_subject) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(static_cast<std::int64_t>(test_subject))));
}

namespace {

FoldResult run_fold(const std::vector<SubjectRecording>& dataset, const Fold& fold,
                    const SignalSelection& selection, const ModelSpec& spec, const TrainConfig& config,
                    const ExperimentOptions& options) {
  FoldResult result;
  result.test_subject = fold.test_subject;
  result.train_subjects = fold.train_subjects;
  try {
    const std::uint64_t seed = fold_seed(config.seed, fold.test_subject);
    const SubjectRecording* test = nullptr;
    std::optional<WindowedDataset> pool;
    for (const auto& rec : dataset) {
      if (rec.subject_id == fold.test_subject) {
        test = &rec;
        continue;
      }
      auto w = window_recording(rec, selection, spec.window_len, options.stride);
      if (!pool) pool = std::move(w);
      else append(*pool, w);
    }
    if (!test) throw ProtocolError("test subject " + std::to_string(fold.test_subject) + " missing");
    if (!pool || pool->empty()) throw ConfigError("no training windows (recordings shorter than the window)");

    const auto split = split_train_validation(*pool, config.validation_fraction, seed);
    result.n_train_windows = split.train.size();
    result.n_val_windows = split.val.size();
    result.n_purged_windows = split.purged.size();
    const auto raw_train = pool->subset(split.train);
    const Scaler scaler = fit_scaler(raw_train);
    const auto train_set = apply_scaler(scaler, raw_train);
    const auto val_set = apply_scaler(scaler, pool->subset(split.val));
    const auto test_set = apply_scaler(scaler, window_recording(*test, selection, spec.window_len, 1));
    if (test_set.empty()) throw ConfigError("test recording is shorter than the window");

    auto model = build_model(spec, train_set.n_channels(), spec.window_len, seed);
    TrainConfig fold_config = config;
    fold_config.seed = seed;
    result.train_report = train(model, train_set, val_set, fold_config);

    result.predictions = predict(model, test_set);
    for (const auto& w : test_set.windows) {
      result.targets.push_back(w.target);
      result.activity.push_back(w.activity);
      result.condition.push_back(w.condition);
      result.transition.push_back(w.spans_transition ? 1 : 0);
      result.sample_start.push_back(w.sample_start);
    }
    result.rmse = rmse(result.predictions, result.targets);
    if (!std::isfinite(result.rmse)) throw TrainingError("non-finite test predictions");
  } catch (const std::exception& e) {
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace

MetricsReport run_loso_experiment(const std::vector<SubjectRecording>& dataset, const SignalSelection& selection,
                                  const ModelSpec& spec, const TrainConfig& config,
                                  const ExperimentOptions& options) {
  std::vector<int> ids;
  for (const auto& r : dataset) {
    if (!r.has_target()) throw ContractError("subject " + std::to_string(r.subject_id) + " has no EE target");
    ids.push_back(r.subject_id);
  }
  const auto folds = loso_folds(ids);
  if (options.stride == 0) throw ConfigError("stride must be positive");

  MetricsReport report;
  report.folds.resize(folds.size());
  parallel_for(folds.size(), options.jobs, [&](std::size_t i) {
    report.folds[i] = run_fold(dataset, folds[i], selection, spec, config, options);
  });

  const auto ok = report.fold_rmses();
  report.overall_rmse = ok.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
  report.per_activity = per_activity_eval(report.folds);
  report.per_subject = per_subject_stats(report.folds);
  const nlohmann::json cfg = {{"signals", selection.channel_names()},
                              {"model", spec.to_json()},
                              {"train", config.to_json()},
                              {"stride", options.stride}};
  report.fingerprint = hex64(fnv1a(cfg.dump()));
  return report;
}

std::vector<ActivityRow> per_activity_eval(std::span<const FoldResult> folds) {
  struct Key {
    bool transition;
    Activity activity;
    std::string condition;
    auto operator<=>(const Key&) const = default;
  };
  struct Acc {
    std::size_t n = 0;
    double target_sum = 0.0;
    std::vector<double> fold_rmse, fold_nrmse;
    bool flagged = false;
  };
  std::map<Key, Acc> acc;
  for (const auto& f : folds) {
    if (f.failed) continue;
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < f.predictions.size(); ++i) {
      const Key k = f.transition[i] ? Key{true, Activity::stand, "all"} : Key{false, f.activity[i], f.condition[i]};
      groups[k].first.push_back(f.predictions[i]);
      groups[k].second.push_back(f.targets[i]);
    }
    for (const auto& [k, pt] : groups) {
      auto& a = acc[k];
      const double r = rmse(pt.first, pt.second);
      const double mean = std::accumulate(pt.second.begin(), pt.second.end(), 0.0) / static_cast<double>(pt.second.size());
      a.n += pt.second.size();
      a.target_sum += mean * static_cast<double>(pt.second.size());
      a.fold_rmse.push_back(r);
      if (mean > 0.0) a.fold_nrmse.push_back(nrmse(r, mean));
      else a.flagged = true;
    }
  }
  auto mean_of = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  std::vector<ActivityRow> rows;
  for (const auto& [k, a] : acc) {
    ActivityRow row;
    row.activity = k.activity;
    row.condition = k.condition;
    row.transition = k.transition;
    row.n_samples = a.n;
    row.n_folds = a.fold_rmse.size();
    row.rmse = mean_of(a.fold_rmse);
    row.mean_ee = a.target_sum / static_cast<double>(a.n);
    row.nrmse_flagged = a.flagged;
    row.nrmse = a.flagged ? std::numeric_limits<double>::quiet_NaN() : mean_of(a.fold_nrmse);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<BoxplotStats> per_subject_stats(std::span<const FoldResult> folds) {
  std::vector<double> r;
  for (const auto& f : folds) {
    if (!f.failed) r.push_back(f.rmse);
  }
  if (r.empty()) return std::nullopt;
  return boxplot(r);
}

std::vector<BestPartnerRow> SweepResult::best_partners(std::optional<ChannelId> excluded_partner) const {
  std::vector<BestPartnerRow> rows;
  for (ChannelId s : universe) {
    const SweepCell* best = nullptr;
    for (const auto& c : cells) {
      if (c.failed || (c.a != s && c.b != s)) continue;
      const ChannelId partner = c.a == s ? c.b : c.a;
      if (excluded_partner && partner == *excluded_partner) continue;
      if (!best || c.rmse < best->rmse) best = &c;
    }
    if (best) rows.push_back({s, best->a == s ? best->b : best->a, best->model, best->rmse});
  }
  return rows;
}

std::vector<SweepCell> SweepResult::worst_pairs(std::size_t count) const {
  std::vector<SweepCell> ok;
  std::copy_if(cells.begin(), cells.end(), std::back_inserter(ok), [](const auto& c) { return !c.failed; });
  std::stable_sort(ok.begin(), ok.end(), [](const auto& x, const auto& y) { return x.rmse > y.rmse; });
  if (ok.size() > count) ok.resize(count);
  return ok;
}

std::size_t SweepResult::failed_cells() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.failed; }));
}

SweepResult pairwise_sweep(const std::vector<SubjectRecording>& dataset, std::span<const ChannelId> universe,
                           std::span<const ModelSpec> specs, const TrainConfig& config,
                           const ExperimentOptions& options) {
  SweepResult result;
  std::set<ChannelId> seen;
  for (ChannelId c : universe) {
    if (seen.insert(c).second) result.universe.push_back(c);
  }
  for (std::size_t i = 0; i < result.universe.size(); ++i) {
    for (std::size_t j = i + 1; j < result.universe.size(); ++j) {
      const auto selection = make_selection({result.universe[i], result.universe[j]});
      for (const auto& spec : specs) {
        SweepCell cell{result.universe[i], result.universe[j], spec.family, 0.0, false, {}};
        try {
          const auto report = run_loso_experiment(dataset, selection, spec, config, options);
          cell.rmse = report.overall_rmse;
          if (report.partial()) {
            cell.failed = true;
            cell.error = std::to_string(report.failed_folds()) + " fold(s) failed: " +
                         std::find_if(report.folds.begin(), report.folds.end(), [](const auto& f) {
                           return f.failed;
                         })->error;
          }
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

}  // namespace eeb
