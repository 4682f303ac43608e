#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "eeb/evaluation.hpp"

namespace eeb {

// Identity of one run. Every emitted CSV row carries fingerprint and seed.
struct RunInfo {
  std::string signals;  // selection label
  std::string model;    // family name
  std::uint64_t seed = 0;
  std::string fingerprint;
  nlohmann::json config;  // resolved configuration the fingerprint was taken over
};

// CSV table whose rows are prefixed with the fingerprint and seed columns.
class ReportTable {
 public:
  ReportTable(std::vector<std::string> header, std::string fingerprint, std::uint64_t seed);
  void row(std::vector<std::string> cells);
  void save(const std::filesystem::path& path) const;

 private:
  std::string fingerprint_;
  std::string seed_;
  std::ostringstream out_;
};

// Replaces characters unsafe in file names with '_'.
std::string sanitize_label(std::string_view label);

// <signals>__<model>__seed<k>
std::string run_directory_name(const RunInfo& info);

// hex64(fnv1a(config.dump()))
std::string config_fingerprint(const nlohmann::json& config);

// Writes overall.csv, folds.csv, per_activity.csv, per_subject.csv, boxplot.csv,
// predictions.csv, summary.json and train_reports.json into `dir`. Only
// train_reports.json holds wall-clock data; the other files are deterministic.
void write_run_report(const std::filesystem::path& dir, const RunInfo& info, const MetricsReport& report);

struct SweepInfo {
  std::uint64_t seed = 0;
  std::string fingerprint;
  nlohmann::json config;
};

// Writes sweep_matrix.csv (one row per pair and model), best_partners.csv,
// best_partners_no_mv.csv, worst_pairs.csv and summary.json into `dir`.
void write_sweep_report(const std::filesystem::path& dir, const SweepInfo& info, const SweepResult& sweep);

// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace eeb
