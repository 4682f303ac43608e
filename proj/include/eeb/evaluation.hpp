#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "eeb/channels.hpp"
#include "eeb/dataset.hpp"
#include "eeb/metrics.hpp"
#include "eeb/model.hpp"
#include "eeb/training.hpp"

namespace eeb {

struct Fold {
  int test_subject = 0;
  std::vector<int> train_subjects;
};

// One fold per subject, ordered by id. Throws ProtocolError on duplicates or < 2 subjects.
std::vector<Fold> loso_folds(std::span<const int> subject_ids);

struct FoldResult {
  int test_subject = 0;
  std::vector<int> train_subjects;
  std::vector<double> predictions;
  std::vector<double> targets;
  std::vector<Activity> activity;
  std::vector<std::string> condition;
  std::vector<char> transition;
  std::vector<std::size_t> sample_start;  // window start inside the test recording
  double rmse = 0.0;
  bool failed = false;
  std::string error;
  TrainReport train_report;
  std::size_t n_train_windows = 0;
  std::size_t n_val_windows = 0;
  std::size_t n_purged_windows = 0;
};

struct ActivityRow {
  Activity activity = Activity::stand;
  std::string condition;
  bool transition = false;  // aggregate of every window spanning a segment boundary
  std::size_t n_samples = 0;
  std::size_t n_folds = 0;
  double rmse = 0.0;     // mean of per-fold RMSEs
  double mean_ee = 0.0;  // mean test target over every fold
  double nrmse = 0.0;    // mean of per-fold NRMSEs; NaN when flagged
  bool nrmse_flagged = false;  // some fold had a non-positive mean EE
};

struct MetricsReport {
  std::vector<FoldResult> folds;
  double overall_rmse = 0.0;  // mean of successful fold RMSEs
  std::vector<ActivityRow> per_activity;
  std::optional<BoxplotStats> per_subject;
  std::string fingerprint;

  [[nodiscard]] std::size_t failed_folds() const;
  [[nodiscard]] bool partial() const { return failed_folds() > 0; }
  [[nodiscard]] std::vector<double> fold_rmses() const;  // successful folds only
};

struct ExperimentOptions {
  std::size_t stride = 1;
  std::size_t jobs = 1;  // worker threads over folds
};

// Trains one model per held-out subject: window the other subjects, hold out a
// validation split, fit the scaler on the training windows, train, predict the
// test subject. Fold failures are recorded and the remaining folds continue.
MetricsReport run_loso_experiment(const std::vector<SubjectRecording>& dataset,
                                  const SignalSelection& selection, const ModelSpec& spec,
                                  const TrainConfig& config, const ExperimentOptions& options = {});

// Per-(activity, condition) rows over non-transition windows plus one transition row.
std::vector<ActivityRow> per_activity_eval(std::span<const FoldResult> folds);

// Boxplot of fold RMSEs across subjects; nullopt when no fold succeeded.
std::optional<BoxplotStats> per_subject_stats(std::span<const FoldResult> folds);

struct SweepCell {
  ChannelId a{};
  ChannelId b{};
  ModelFamily model = ModelFamily::linreg;
  double rmse = 0.0;
  bool failed = false;
  std::string error;
};

struct BestPartnerRow {
  ChannelId signal{};
  ChannelId partner{};
  ModelFamily model = ModelFamily::linreg;
  double rmse = 0.0;
};

struct SweepResult {
  std::vector<ChannelId> universe;
  std::vector<SweepCell> cells;  // pair-major, then model order

  // Lowest-RMSE partner (over every model) for each universe signal. An excluded
  // partner is skipped for every other signal but keeps its own row.
  [[nodiscard]] std::vector<BestPartnerRow> best_partners(std::optional<ChannelId> excluded_partner = {}) const;
  // Highest-RMSE cells, descending.
  [[nodiscard]] std::vector<SweepCell> worst_pairs(std::size_t count = 16) const;
  [[nodiscard]] std::size_t failed_cells() const;
};

SweepResult pairwise_sweep(const std::vector<SubjectRecording>& dataset, std::span<const ChannelId> universe,
                           std::span<const ModelSpec> specs, const TrainConfig& config,
                           const ExperimentOptions& options = {});

// Fold seed derived from the experiment seed and the held-out subject.
std::uint64_t fold_seed(std::uint64_t seed, int test_subject);

}  // namespace eeb
