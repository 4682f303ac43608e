#include "eeb/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "eeb/csv.hpp"
#include "eeb/errors.hpp"
#include "eeb/linreg.hpp"

namespace eeb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json nan_as_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

// ---------------------------------------------------------------------------
// Config and report records
// ---------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"early_stop_patience", early_stop_patience},
          {"seed", seed},
          {"validation_fraction", validation_fraction},
          {"per_step_loss", per_step_loss},
          {"linreg_closed_form", linreg_closed_form},
          {"population_batch_norm", population_batch_norm},
          {"standardize_targets", standardize_targets},
          {"population_stats_windows", population_stats_windows}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "early_stop_patience") c.early_stop_patience = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
      else if (key == "per_step_loss") c.per_step_loss = value.get<bool>();
      else if (key == "linreg_closed_form") c.linreg_closed_form = value.get<bool>();
      else if (key == "population_batch_norm") c.population_batch_norm = value.get<bool>();
      else if (key == "standardize_targets") c.standardize_targets = value.get<bool>();
      else if (key == "population_stats_windows") c.population_stats_windows = value.get<std::size_t>();
      else throw ConfigError("train." + key + ": unknown field");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train." + key + ": " + e.what());
    }
  }
  if (c.validation_fraction < 0.0 || c.validation_fraction >= 1.0) {
    throw ConfigError("train.validation_fraction: must lie in [0, 1)");
  }
  if (warnings && c.validation_fraction != kDefaultValidationFraction) {
    std::ostringstream os;
    os << "validation fraction overridden to " << c.validation_fraction << " (default "
       << kDefaultValidationFraction << ")";
    warnings->push_back(os.str());
  }
  return c;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : epochs) {
    curve.push_back({{"epoch", e.epoch}, {"train_loss", nan_as_null(e.train_loss)},
                     {"val_loss", nan_as_null(e.val_loss)}});
  }
  return {{"method", method},
          {"epochs", curve},
          {"best_epoch", best_epoch},
          {"best_val_loss", nan_as_null(best_val_loss)},
          {"selected_on_train_loss", selected_on_train_loss},
          {"rank_deficient", rank_deficient},
          {"n_train", n_train},
          {"n_val", n_val},
          {"wall_seconds", wall_seconds},
          {"checksum", checksum}};
}

void TrainReport::write_loss_curve(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << csv::format(e.train_loss) << ',' << csv::format(e.val_loss) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Validation split
// ---------------------------------------------------------------------------

ValidationSplit split_train_validation(const WindowedDataset& windows, double fraction,
                                       std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ConfigError("validation fraction must lie in [0, 1)");
  const std::size_t n = windows.size();
  ValidationSplit split;
  if (fraction == 0.0) {
    split.train.resize(n);
    std::iota(split.train.begin(), split.train.end(), 0);
    return split;
  }
  if (n == 0) throw ConfigError("cannot split an empty window set");
  const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  std::vector<std::pair<std::size_t, std::size_t>> blocks;  // [begin, end) in window order
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = windows.windows[i];
    if (i == 0 || w.subject_id != windows.windows[i - 1].subject_id ||
        w.segment_index != windows.windows[i - 1].segment_index) {
      blocks.emplace_back(i, i + 1);
    } else {
      blocks.back().second = i + 1;
    }
  }
  if (wanted == 0 || blocks.size() < 2) {
    throw ConfigError("dataset of " + std::to_string(n) + " windows in " + std::to_string(blocks.size()) +
                      " blocks is too small for a non-empty validation split");
  }

  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> is_val(n, false);
  std::size_t taken = 0;
  for (std::size_t k = 0; k + 1 < order.size() && taken < wanted; ++k) {
    const auto [b, e] = blocks[order[k]];
    for (std::size_t i = b; i < e; ++i) is_val[i] = true;
    taken += e - b;
  }

  std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> val_ranges;
  const std::size_t len = windows.window_len;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_val[i]) continue;
    split.val.push_back(i);
    const auto& w = windows.windows[i];
    val_ranges[w.subject_id].emplace_back(w.sample_start, w.sample_start + len);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (is_val[i]) continue;
    const auto& w = windows.windows[i];
    bool overlaps = false;
    if (auto it = val_ranges.find(w.subject_id); it != val_ranges.end()) {
      const std::size_t lo = w.sample_start, hi = w.sample_start + len;
      overlaps = std::any_of(it->second.begin(), it->second.end(),
                             [&](const auto& r) { return lo < r.second && r.first < hi; });
    }
    (overlaps ? split.purged : split.train).push_back(i);
  }
  return split;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ContractError("mse: length mismatch");
  if (pred.empty()) throw DomainError("mse of empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

ag::Tensor gather_batch(const WindowedDataset& data, std::span<const std::size_t> indices) {
  const std::size_t t = data.window_len, c = data.n_channels();
  std::vector<double> values(indices.size() * t * c);
  double* dst = values.data();
  for (std::size_t idx : indices) {
    const auto f = data.features(idx);
    std::copy(f.data(), f.data() + t * c, dst);
    dst += t * c;
  }
  return ag::Tensor::constant({indices.size(), t, c}, std::move(values));
}

std::vector<double> predict(ModelInstance& model, const WindowedDataset& data, std::size_t batch_size) {
  ag::NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(data.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto r = model.forward(gather_batch(data, idx), {});
    out.insert(out.end(), r.output.data().begin(), r.output.data().end());
  }
  return out;
}

void recalibrate_batch_norm(ModelInstance& model, const WindowedDataset& data, std::size_t max_windows,
                            std::uint64_t seed) {
  auto& buffers = model.buffers();
  if (buffers.empty() || data.empty()) return;
  std::vector<std::size_t> pick(data.size());
  std::iota(pick.begin(), pick.end(), 0);
  if (max_windows > 0 && pick.size() > max_windows) {
    std::mt19937_64 rng(seed);
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(max_windows);
    std::sort(pick.begin(), pick.end());
  }
  const auto subset = data.subset(pick);

  // Layer k's input depends only on shallower layers, so after k sweeps the first
  // k layers in depth order hold exact moments.
  ag::NoGradGuard no_grad;
  for (std::size_t sweep = 0; sweep < buffers.size(); ++sweep) {
    for (auto& [name, st] : buffers) {
      st->accumulate = true;
      st->acc_sum.assign(st->running_mean.size(), 0.0);
      st->acc_sumsq.assign(st->running_mean.size(), 0.0);
      st->acc_count = 0.0;
    }
    predict(model, subset, 512);
    bool changed = false;
    for (auto& [name, st] : buffers) {
      st->accumulate = false;
      const double n = st->acc_count;
      for (std::size_t c = 0; c < st->running_mean.size(); ++c) {
        const double d = st->acc_sum[c] / n;
        const double mean = st->running_mean[c] + d;
        const double var = std::max(0.0, st->acc_sumsq[c] / n - d * d) * (n > 1.0 ? n / (n - 1.0) : 1.0);
        changed = changed || mean != st->running_mean[c] || var != st->running_var[c];
        st->running_mean[c] = mean;
        st->running_var[c] = var;
      }
      st->acc_sum.clear();
      st->acc_sumsq.clear();
      st->acc_count = 0.0;
    }
    if (!changed) break;
  }
}

namespace {

class Adam {
 public:
  Adam(std::vector<NamedTensor>& params, double lr) : params_(params), lr_(lr) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto g = params_[k].tensor.grad();
      if (g.empty()) continue;
      auto w = params_[k].tensor.mutable_data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<NamedTensor>& params_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double evaluate_loss(ModelInstance& model, const WindowedDataset& data) {
  if (data.empty()) return kNaN;
  const auto pred = predict(model, data);
  std::vector<double> y(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) y[i] = data.windows[i].target;
  return mse_loss(pred, y);
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + batch_size)));
  }
  // Batch-norm needs more than one sample; fold a trailing singleton into its predecessor.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

[[noreturn]] void abort_non_finite(std::size_t epoch, std::size_t batch, const ag::Tensor& pred,
                                   std::span<const double> target) {
  const auto p = pred.data();
  const auto [mn, mx] = std::minmax_element(p.begin(), p.end());
  const double tmean = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << ", batch " << batch << " (size " << target.size()
     << "): prediction range [" << *mn << ", " << *mx << "], target mean " << tmean;
  throw TrainingError(os.str());
}

}  // namespace

TrainReport train(ModelInstance& model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                  const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  if (train_set.empty()) throw ConfigError("no training windows");
  if (train_set.window_len != model.window_len() || train_set.n_channels() != model.n_channels()) {
    throw ContractError("training windows do not match the model arity");
  }
  TrainReport report;
  report.n_train = train_set.size();
  report.n_val = val_set.size();
  const auto& spec = model.spec();

  if (spec.family == ModelFamily::linreg && config.linreg_closed_form) {
    report.method = "closed_form";
    model.set_output_affine(0.0, 1.0);
    const auto fit = fit_linreg_model(model, train_set);
    report.rank_deficient = fit.rank_deficient;
    report.epochs.push_back({0, evaluate_loss(model, train_set), evaluate_loss(model, val_set)});
    report.best_epoch = 0;
    report.selected_on_train_loss = val_set.empty();
    report.best_val_loss = report.epochs[0].val_loss;
  } else {
    report.method = "adam";
    std::size_t batch_size = config.batch_size ? config.batch_size : spec.batch_size;
    if (batch_size == 0) batch_size = 32;
    const double lr = config.learning_rate > 0.0 ? config.learning_rate
                      : spec.learning_rate > 0.0 ? spec.learning_rate
                                                 : 1e-3;
    const bool per_step = config.per_step_loss && spec.family == ModelFamily::transformer;
    report.selected_on_train_loss = val_set.empty();
    if (config.standardize_targets) {
      double mean = 0.0, sq = 0.0;
      for (const auto& w : train_set.windows) mean += w.target;
      mean /= static_cast<double>(train_set.size());
      for (const auto& w : train_set.windows) sq += (w.target - mean) * (w.target - mean);
      const double sd = std::sqrt(sq / static_cast<double>(train_set.size()));
      model.set_output_affine(mean, sd > 1e-8 ? sd : 1.0);
    }

    Adam adam(model.parameters(), lr);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    auto best_state = model.snapshot();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0.0;
      std::size_t batch_no = 0;
      for (const auto& batch : make_batches(order, batch_size)) {
        const auto x = gather_batch(train_set, batch);
        std::vector<double> target;
        if (per_step) {
          for (std::size_t i : batch) {
            const auto s = train_set.step_targets(i);
            target.insert(target.end(), s.begin(), s.end());
          }
        } else {
          for (std::size_t i : batch) target.push_back(train_set.windows[i].target);
        }
        model.zero_grad();
        const auto r = model.forward(x, {true, &rng});
        const auto& pred = per_step ? r.per_step : r.output;
        const auto loss = ag::mse_loss(pred, target);
        if (!std::isfinite(loss.item())) abort_non_finite(epoch, batch_no, pred, target);
        ag::backward(loss);
        adam.step();
        loss_sum += loss.item() * static_cast<double>(batch.size());
        ++batch_no;
      }
      if (config.population_batch_norm) {
        recalibrate_batch_norm(model, train_set, config.population_stats_windows, config.seed + epoch);
      }
      const double train_loss = loss_sum / static_cast<double>(train_set.size());
      const double val_loss = evaluate_loss(model, val_set);
      report.epochs.push_back({epoch, train_loss, val_loss});
      const double score = val_set.empty() ? train_loss : val_loss;
      if (!std::isfinite(score)) {
        throw TrainingError("non-finite " + std::string(val_set.empty() ? "training" : "validation") +
                            " loss after epoch " + std::to_string(epoch));
      }
      if (score < best) {
        best = score;
        report.best_epoch = epoch;
        best_state = model.snapshot();
        stale = 0;
      } else if (++stale >= std::max<std::size_t>(config.early_stop_patience, 1)) {
        break;
      }
    }
    if (!report.epochs.empty()) model.restore(best_state);
    report.best_val_loss = report.epochs.empty() ? kNaN : report.epochs[report.best_epoch].val_loss;
  }

  report.checksum = model.checksum();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradcheckResult finite_difference_gradcheck(ModelInstance& model, const ag::Tensor& batch,
                                            std::span<const double> targets, const GradcheckOptions& options) {
  const ForwardContext eval{};
  auto loss_and_signature = [&]() {
    ag::NoGradGuard no_grad;
    ag::KinkRecorder rec;
    const auto r = model.forward(batch, eval);
    const double loss = ag::mse_loss(r.output, targets).item();
    return std::pair{loss, rec.signature()};
  };

  model.zero_grad();
  std::uint64_t base_signature = 0;
  {
    ag::KinkRecorder rec;
    const auto r = model.forward(batch, eval);
    ag::backward(ag::mse_loss(r.output, targets));
    base_signature = rec.signature();
  }

  GradcheckResult result;
  std::mt19937_64 rng(options.seed);
  for (auto& p : model.parameters()) {
    const std::size_t n = p.tensor.numel();
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    analytic.resize(n, 0.0);

    std::vector<std::size_t> picks(n);
    std::iota(picks.begin(), picks.end(), 0);
    if (options.samples_per_tensor > 0 && n > options.samples_per_tensor) {
      std::shuffle(picks.begin(), picks.end(), rng);
      picks.resize(options.samples_per_tensor);
    }
    auto w = p.tensor.mutable_data();
    for (std::size_t i : picks) {
      const double saved = w[i];
      w[i] = saved + options.eps;
      const auto [fp, sp] = loss_and_signature();
      w[i] = saved - options.eps;
      const auto [fm, sm] = loss_and_signature();
      w[i] = saved;
      if (sp != base_signature || sm != base_signature) {
        ++result.skipped_kinks;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(numeric), 1e-8);
      ++result.checked;
      if (rel > result.max_relative_error || result.checked == 1) {
        if (rel >= result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst_parameter = p.name;
          result.worst_index = i;
          result.worst_analytic = analytic[i];
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace eeb
