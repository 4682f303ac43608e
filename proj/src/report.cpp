#include "eeb/report.hpp"

#include <fstream>
#include <sstream>

#include "eeb/csv.hpp"
#include "eeb/errors.hpp"
#include "eeb/hash.hpp"

namespace eeb {

namespace {

using nlohmann::json;

std::string num(double v) { return csv::format(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "1" : "0"; }

std::string join_values(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += csv::format(values[i]);
  }
  return out;
}

json boxplot_json(const BoxplotStats& b) {
  return {{"n", b.n},           {"median", b.median},         {"q25", b.q25},
          {"q75", b.q75},       {"whisker_lo", b.whisker_lo}, {"whisker_hi", b.whisker_hi},
          {"outliers", b.outliers}};
}

}  // namespace

ReportTable::ReportTable(std::vector<std::string> header, std::string fingerprint, std::uint64_t seed)
    : fingerprint_(std::move(fingerprint)), seed_(std::to_string(seed)) {
  header.insert(header.begin(), {"fingerprint", "seed"});
  out_ << csv::join(header) << '\n';
}

void ReportTable::row(std::vector<std::string> cells) {
  cells.insert(cells.begin(), {fingerprint_, seed_});
  out_ << csv::join(cells) << '\n';
}

void ReportTable::save(const std::filesystem::path& path) const { write_text_file(path, out_.str()); }

std::string sanitize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (char c : label) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '+' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

std::string run_directory_name(const RunInfo& info) {
  return sanitize_label(info.signals) + "__" + sanitize_label(info.model) + "__seed" + std::to_string(info.seed);
}

std::string config_fingerprint(const nlohmann::json& config) { return hex64(fnv1a(config.dump())); }

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

void write_run_report(const std::filesystem::path& dir, const RunInfo& info, const MetricsReport& report) {
  std::filesystem::create_directories(dir);
  const auto& fp = info.fingerprint;
  const auto seed = info.seed;

  ReportTable overall({"signals", "model", "n_folds", "failed_folds", "overall_rmse"}, fp, seed);
  overall.row({info.signals, info.model, num(report.folds.size()), num(report.failed_folds()),
               num(report.overall_rmse)});
  overall.save(dir / "overall.csv");

  ReportTable folds({"test_subject", "rmse", "failed", "error", "n_train_windows", "n_val_windows",
                   "n_purged_windows", "method", "epochs", "best_epoch", "best_val_loss", "model_checksum"},
                  fp, seed);
  for (const auto& f : report.folds) {
    const auto& tr = f.train_report;
    folds.row({std::to_string(f.test_subject), f.failed ? "nan" : num(f.rmse), flag(f.failed), f.error,
               num(f.n_train_windows), num(f.n_val_windows), num(f.n_purged_windows), tr.method,
               num(tr.epochs.size()), num(tr.best_epoch), num(tr.best_val_loss), hex64(tr.checksum)});
  }
  folds.save(dir / "folds.csv");

  ReportTable per_subject({"test_subject", "rmse"}, fp, seed);
  for (const auto& f : report.folds)
    if (!f.failed) per_subject.row({std::to_string(f.test_subject), num(f.rmse)});
  per_subject.save(dir / "per_subject.csv");

  ReportTable box({"signals", "model", "n", "median", "q25", "q75", "whisker_lo", "whisker_hi", "outliers"}, fp,
                seed);
  if (report.per_subject) {
    const auto& b = *report.per_subject;
    box.row({info.signals, info.model, num(b.n), num(b.median), num(b.q25), num(b.q75), num(b.whisker_lo),
             num(b.whisker_hi), join_values(b.outliers)});
  }
  box.save(dir / "boxplot.csv");

  ReportTable activity({"signals", "model", "activity", "condition", "transition", "n_samples", "n_folds", "rmse",
                      "mean_ee", "nrmse", "nrmse_flagged"},
                     fp, seed);
  for (const auto& r : report.per_activity) {
    activity.row({info.signals, info.model, std::string(activity_name(r.activity)), r.condition,
                  flag(r.transition), num(r.n_samples), num(r.n_folds), num(r.rmse), num(r.mean_ee), num(r.nrmse),
                  flag(r.nrmse_flagged)});
  }
  activity.save(dir / "per_activity.csv");

  ReportTable preds({"test_subject", "sample_start", "activity", "condition", "transition", "target", "prediction"},
                  fp, seed);
  for (const auto& f : report.folds) {
    for (std::size_t i = 0; i < f.predictions.size(); ++i) {
      preds.row({std::to_string(f.test_subject), num(f.sample_start[i]), std::string(activity_name(f.activity[i])),
                 f.condition[i], flag(f.transition[i] != 0), num(f.targets[i]), num(f.predictions[i])});
    }
  }
  preds.save(dir / "predictions.csv");

  json summary = {{"fingerprint", fp},
                  {"seed", seed},
                  {"signals", info.signals},
                  {"model", info.model},
                  {"overall_rmse", report.overall_rmse},
                  {"fold_rmses", report.fold_rmses()},
                  {"failed_folds", report.failed_folds()},
                  {"partial", report.partial()},
                  {"config", info.config}};
  if (report.per_subject) summary["per_subject"] = boxplot_json(*report.per_subject);
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");

  json reports = json::array();
  for (const auto& f : report.folds) {
    json entry = f.train_report.to_json();
    entry["test_subject"] = f.test_subject;
    reports.push_back(std::move(entry));
  }
  write_text_file(dir / "train_reports.json", reports.dump(2) + "\n");
}

void write_sweep_report(const std::filesystem::path& dir, const SweepInfo& info, const SweepResult& sweep) {
  std::filesystem::create_directories(dir);
  const auto& fp = info.fingerprint;

  ReportTable matrix({"signal_a", "signal_b", "model", "rmse", "failed", "error"}, fp, info.seed);
  for (const auto& c : sweep.cells) {
    matrix.row({std::string(channel_info(c.a).name), std::string(channel_info(c.b).name),
                std::string(family_name(c.model)), c.failed ? "nan" : num(c.rmse), flag(c.failed), c.error});
  }
  matrix.save(dir / "sweep_matrix.csv");

  const auto partners = [&](const std::vector<BestPartnerRow>& rows, const char* file) {
    ReportTable out({"signal", "partner", "model", "rmse"}, fp, info.seed);
    for (const auto& r : rows) {
      out.row({std::string(channel_info(r.signal).name), std::string(channel_info(r.partner).name),
               std::string(family_name(r.model)), num(r.rmse)});
    }
    out.save(dir / file);
  };
  partners(sweep.best_partners(), "best_partners.csv");
  partners(sweep.best_partners(ChannelId::minute_ventilation), "best_partners_no_mv.csv");

  ReportTable worst({"signal_a", "signal_b", "model", "rmse"}, fp, info.seed);
  for (const auto& c : sweep.worst_pairs()) {
    worst.row({std::string(channel_info(c.a).name), std::string(channel_info(c.b).name),
               std::string(family_name(c.model)), num(c.rmse)});
  }
  worst.save(dir / "worst_pairs.csv");

  json summary = {{"fingerprint", fp},
                  {"seed", info.seed},
                  {"cells", sweep.cells.size()},
                  {"failed_cells", sweep.failed_cells()},
                  {"config", info.config}};
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace eeb
