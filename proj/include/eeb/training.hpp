#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "eeb/model.hpp"
#include "eeb/windowing.hpp"

namespace eeb {

inline constexpr double kDefaultValidationFraction = 0.15;

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 0;     // 0: take the model spec's value
  double learning_rate = 0.0;     // 0: take the model spec's value
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;
  double validation_fraction = kDefaultValidationFraction;
  bool per_step_loss = false;     // Transformer: MSE over every time step
  bool linreg_closed_form = true; // LinReg: least squares instead of Adam
  // After every epoch, replace batch-norm running estimates by population moments
  // of the training windows (at most `population_stats_windows` of them).
  bool population_batch_norm = true;
  // Gradient-trained models predict (y - mean) / std of the training targets internally.
  bool standardize_targets = true;
  std::size_t population_stats_windows = 4096;

  [[nodiscard]] nlohmann::json to_json() const;
  // Unknown keys are rejected; a non-default validation fraction is reported in `warnings`.
  static TrainConfig from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation set
};

struct TrainReport {
  std::string method;  // "adam" or "closed_form"
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool selected_on_train_loss = false;
  bool rank_deficient = false;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double wall_seconds = 0.0;
  std::uint64_t checksum = 0;

  [[nodiscard]] nlohmann::json to_json() const;
  // Columns epoch,train_loss,val_loss.
  void write_loss_curve(const std::filesystem::path& path) const;
};

struct ValidationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> purged;  // train windows dropped for overlapping a val window
};

// Holds out whole blocks of consecutive windows sharing (subject, segment) until
// |val| reaches round(fraction * N). Train windows whose sample range intersects
// any validation window are purged.
ValidationSplit split_train_validation(const WindowedDataset& windows, double fraction,
                                       std::uint64_t seed);

double mse_loss(std::span<const double> pred, std::span<const double> target);

TrainReport train(ModelInstance& model, const WindowedDataset& train_set,
                  const WindowedDataset& val_set, const TrainConfig& config);

// Re-estimates every batch-norm layer's mean and variance over `data` in evaluation
// flow, one sweep per layer depth, until the estimates are exact for the stack.
void recalibrate_batch_norm(ModelInstance& model, const WindowedDataset& data, std::size_t max_windows = 4096,
                            std::uint64_t seed = 0);

// Evaluation-mode scalar predictions, one per window.
std::vector<double> predict(ModelInstance& model, const WindowedDataset& data,
                            std::size_t batch_size = 256);

// Packs windows `indices` of `data` into a [B, T, C] tensor.
ag::Tensor gather_batch(const WindowedDataset& data, std::span<const std::size_t> indices);

struct GradcheckOptions {
  double eps = 1e-4;
  std::size_t samples_per_tensor = 16;  // 0: every element
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences of the evaluation-mode MSE against `targets` for sampled
// parameter entries. Samples whose perturbation changes the active ReLU/max-pool
// pattern are skipped.
GradcheckResult finite_difference_gradcheck(ModelInstance& model, const ag::Tensor& batch,
                                            std::span<const double> targets,
                                            const GradcheckOptions& options = {});

}  // namespace eeb
