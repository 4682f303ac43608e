#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "eeb/dataset.hpp"
#include "eeb/evaluation.hpp"
#include "eeb/model.hpp"
#include "eeb/report.hpp"
#include "eeb/synthgen.hpp"
#include "eeb/training.hpp"

namespace eeb {

struct SyntheticSource {
  std::uint64_t seed = 0;
  std::size_t n_subjects = 10;
};

// "synthetic:<seed>" or "synthetic:<seed>:<subjects>"; nullopt for anything else.
// Throws ConfigError for a malformed synthetic source.
std::optional<SyntheticSource> parse_synthetic_source(std::string_view data);

struct ExperimentConfig {
  std::string data;  // dataset root or synthetic:<seed>[:<subjects>]; empty: none given
  TargetMode target_mode = TargetMode::steady_state;
  SynthProfileKind synthetic_kind = SynthProfileKind::standard;
  double synthetic_noise_sd = 0.2;
  double synthetic_segment_s = 360.0;
  std::vector<std::string> signals{"minute_ventilation"};
  std::vector<std::string> models{"linreg"};
  // Per-family ModelSpec field overrides; key "*" applies to every family.
  nlohmann::json model_overrides = nlohmann::json::object();
  double width_scale = 1.0;
  std::size_t stride = 1;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out = "results";
  std::string universe = "all";
  bool plots = true;
  std::vector<std::string> warnings;  // filled by from_json, not serialized

  [[nodiscard]] nlohmann::json to_json() const;
  // Unknown or mistyped fields raise ConfigError naming the field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::filesystem::path& path);
};

std::string_view target_mode_name(TargetMode mode);
TargetMode parse_target_mode(std::string_view name);

// Default spec for the family, scaled by width_scale, then the overrides applied.
ModelSpec resolve_model_spec(const ExperimentConfig& config, ModelFamily family);

// Loads the configured dataset. Throws ConfigError when none was configured.
std::vector<SubjectRecording> load_experiment_dataset(const ExperimentConfig& config);

SynthDatasetOptions synthetic_options(const ExperimentConfig& config, const SyntheticSource& source);

struct RunOutcome {
  RunInfo info;
  MetricsReport report;
  std::filesystem::path dir;
};

// Every configured signal selection crossed with every model. Each run lands in
// <out>/<signals>__<model>__seed<k>/; <out>/overall.csv collects one row per run.
std::vector<RunOutcome> run_experiments(const ExperimentConfig& config,
                                        const std::vector<SubjectRecording>& dataset);

struct SweepOutcome {
  SweepInfo info;
  SweepResult result;
  std::filesystem::path dir;
};

// Pairwise sweep over config.universe for every configured model, written to <out>/sweep/.
SweepOutcome run_sweep_experiment(const ExperimentConfig& config, const std::vector<SubjectRecording>& dataset);

// Channels named by a universe expression ("all", a group or a comma list).
std::vector<ChannelId> parse_universe(std::string_view expr);

struct ReproduceOptions {
  std::string target;  // table1 | table2 | fig2 | fig3 | fig4 | tableS1
  bool demo = false;
  std::vector<std::string> models;  // empty: every family, or linreg + cnn under --demo
  std::size_t epochs = 0;           // 0: the config value, or the demo default
  std::filesystem::path published_results;  // checked-in published values
};

struct ReproduceOutcome {
  std::vector<std::filesystem::path> files;
  bool partial = false;
};

// Scaled-down synthetic settings used by --demo.
ExperimentConfig demo_config(const ExperimentConfig& base);

// Runs the experiments behind one table or figure and writes <out>/<target>.csv
// (plus an SVG for figures) with published values side by side where they exist.
// Without --demo a dataset root is required; otherwise ConfigError explains why.
ReproduceOutcome reproduce(const ReproduceOptions& options, const ExperimentConfig& config);

std::vector<std::string> reproduce_targets();

}  // namespace eeb
