#include <CLI11.hpp>
#include <iostream>
#include <random>

#include "eeb/errors.hpp"
#include "eeb/experiment.hpp"
#include "eeb/synthgen.hpp"
#include "eeb/training.hpp"

#ifndef EEB_PUBLISHED_RESULTS
#define EEB_PUBLISHED_RESULTS "data/published_results.json"
#endif

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kUsage = 2;

struct Globals {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string config;
};

struct RunFlags {
  std::vector<std::string> signals;
  std::vector<std::string> models;
  std::size_t stride = 1;
  std::size_t epochs = 0;
  double width_scale = 1.0;
  std::string target_mode;
  std::string universe;
  bool no_plots = false;
};

// Config file first, then any flag given on the command line.
eeb::ExperimentConfig resolve_config(const CLI::App& app, const CLI::App& sub, const Globals& g, const RunFlags& f) {
  eeb::ExperimentConfig c = g.config.empty() ? eeb::ExperimentConfig{} : eeb::ExperimentConfig::from_file(g.config);
  for (const auto& w : c.warnings) std::cerr << "warning: " << w << '\n';
  if (app.count("--data")) c.data = g.data;
  if (app.count("--out")) c.out = g.out;
  if (app.count("--seed")) c.seed = g.seed;
  if (app.count("--jobs")) c.jobs = std::max<std::size_t>(1, g.jobs);
  const auto given = [&sub](const char* name) { return sub.get_option_no_throw(name) && sub.count(name) > 0; };
  if (given("--signals")) c.signals = f.signals;
  if (given("--model")) c.models = f.models;
  if (given("--stride")) {
    if (f.stride == 0) throw eeb::ConfigError("--stride: must be >= 1");
    c.stride = f.stride;
  }
  if (given("--epochs")) c.train.epochs = f.epochs;
  if (given("--width-scale")) {
    if (!(f.width_scale > 0.0)) throw eeb::ConfigError("--width-scale: must be > 0");
    c.width_scale = f.width_scale;
  }
  if (given("--target-mode")) c.target_mode = eeb::parse_target_mode(f.target_mode);
  if (given("--universe")) c.universe = f.universe;
  if (given("--no-plots")) c.plots = false;
  // Flag values go through the same field checks as a config file.
  return eeb::ExperimentConfig::from_json(c.to_json());
}

void add_run_flags(CLI::App* sub, RunFlags& f, bool sweep) {
  if (sweep) {
    sub->add_option("--universe", f.universe, "Signal universe: all, a group, or a comma list");
  } else {
    sub->add_option("--signals", f.signals, "Signal selection (repeatable): channel, group, group-channel, a,b");
  }
  sub->add_option("--model,--models", f.models, "Model family (repeatable)");
  sub->add_option("--stride", f.stride, "Training window stride");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--width-scale", f.width_scale, "Multiply layer widths");
  sub->add_option("--target-mode", f.target_mode, "steady_state or per_sample");
  sub->add_flag("--no-plots", f.no_plots, "Skip SVG figures");
}

int gradcheck(const std::vector<std::string>& models, std::uint64_t seed) {
  std::vector<eeb::ModelFamily> families;
  if (models.empty()) {
    families = eeb::all_families();
  } else {
    for (const auto& m : models) families.push_back(eeb::parse_family(m));
  }
  bool ok = true;
  for (auto family : families) {
    const auto spec = eeb::ModelSpec::defaults(family).toy();
    const std::size_t t = spec.window_len;
    const std::size_t c = 3;
    const std::size_t b = 4;
    auto model = eeb::build_model(spec, c, t, seed);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> normal;
    std::vector<double> x(b * t * c);
    std::vector<double> y(b);
    for (auto& v : x) v = normal(rng);
    for (auto& v : y) v = normal(rng);
    eeb::GradcheckOptions opts;
    opts.samples_per_tensor = 0;
    opts.seed = seed;
    const auto r = eeb::finite_difference_gradcheck(model, eeb::make_batch(x, b, t, c), y, opts);
    const double limit = family == eeb::ModelFamily::linreg ? 1e-8 : 1e-3;
    const bool pass = r.max_relative_error < limit;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << eeb::family_name(family) << " max_rel_error=" << r.max_relative_error
              << " limit=" << limit << " checked=" << r.checked << " skipped_kinks=" << r.skipped_kinks
              << " worst=" << r.worst_parameter << '[' << r.worst_index << "]\n";
  }
  return ok ? kOk : kPartial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-expenditure regression benchmark"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data", g.data, "Dataset root or synthetic:<seed>[:<subjects>]");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--seed", g.seed, "Experiment seed");
  app.add_option("--jobs", g.jobs, "Worker threads over folds");
  app.add_option("--config", g.config, "Experiment config (JSON)");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Leave-one-subject-out runs for every selection x model");
  add_run_flags(run, run_flags, false);

  RunFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Pairwise signal sweep");
  add_run_flags(sweep, sweep_flags, true);

  RunFlags repro_flags;
  std::string target;
  bool demo = false;
  std::string published = EEB_PUBLISHED_RESULTS;
  auto* repro = app.add_subcommand("reproduce", "Regenerate a table or figure");
  repro->add_option("target", target, "table1 | table2 | fig2 | fig3 | fig4 | tableS1")->required();
  repro->add_flag("--demo", demo, "Scaled-down synthetic run");
  repro->add_option("--model,--models", repro_flags.models, "Restrict model families");
  repro->add_option("--epochs", repro_flags.epochs, "Training epochs");
  repro->add_flag("--no-plots", repro_flags.no_plots, "Skip SVG figures");
  repro->add_option("--published", published, "Published values file");

  std::string kind = "standard";
  double noise = 0.2;
  double segment_s = 360.0;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset tree (requires --data synthetic:...)");
  gen->add_option("--kind", kind, "standard | noiseless | learnability");
  gen->add_option("--noise", noise, "EE noise sd, W/kg");
  gen->add_option("--segment-s", segment_s, "Segment duration, s");

  std::vector<std::string> gc_models;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check at toy width");
  gc->add_option("--model,--models", gc_models, "Model family (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*run || *sweep) {
      const auto* sub = *run ? run : sweep;
      const auto config = resolve_config(app, *sub, g, *run ? run_flags : sweep_flags);
      const auto dataset = eeb::load_experiment_dataset(config);
      if (*run) {
        bool partial = false;
        for (const auto& o : eeb::run_experiments(config, dataset)) {
          std::cout << o.info.signals << " / " << o.info.model << ": overall RMSE " << o.report.overall_rmse
                    << " W/kg, failed folds " << o.report.failed_folds() << " -> " << o.dir.string() << '\n';
          for (const auto& f : o.report.folds)
            if (f.failed) std::cerr << "fold " << f.test_subject << " failed: " << f.error << '\n';
          partial = partial || o.report.partial();
        }
        return partial ? kPartial : kOk;
      }
      const auto o = eeb::run_sweep_experiment(config, dataset);
      std::cout << o.result.cells.size() << " cells, " << o.result.failed_cells() << " failed -> " << o.dir.string()
                << '\n';
      return o.result.failed_cells() ? kPartial : kOk;
    }
    if (*repro) {
      auto config = resolve_config(app, *repro, g, repro_flags);
      eeb::ReproduceOptions opts;
      opts.target = target;
      opts.demo = demo;
      opts.models = repro_flags.models;
      opts.published_results = published;
      if (repro->count("--epochs")) opts.epochs = repro_flags.epochs;
      auto outcome = eeb::reproduce(opts, config);
      for (const auto& f : outcome.files) std::cout << f.string() << '\n';
      return outcome.partial ? kPartial : kOk;
    }
    if (*gen) {
      auto config = resolve_config(app, *gen, g, {});
      const auto src = eeb::parse_synthetic_source(config.data);
      if (!src) throw eeb::ConfigError("gen-synth: --data must be synthetic:<seed>[:<subjects>]");
      if (!app.count("--out")) throw eeb::ConfigError("gen-synth: --out <dataset root> is required");
      auto j = config.to_json();
      j["synthetic"] = {{"kind", kind}, {"noise_sd", noise}, {"segment_s", segment_s}};
      config = eeb::ExperimentConfig::from_json(j);
      for (const auto& subject : eeb::generate_raw_dataset(eeb::synthetic_options(config, *src)))
        eeb::write_raw_subject(config.out, subject);
      std::cout << "wrote " << src->n_subjects << " subjects to " << config.out << '\n';
      return kOk;
    }
    return gradcheck(gc_models, app.count("--seed") ? g.seed : 1);
  } catch (const eeb::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const eeb::SelectionError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartial;
  }
}
