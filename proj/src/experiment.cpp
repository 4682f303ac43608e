#include "eeb/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "eeb/csv.hpp"
#include "eeb/errors.hpp"
#include "eeb/plots.hpp"

namespace eeb {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) { return csv::format(v); }

template <typename T>
T field(const json& j, const std::string& key, const std::string& path = "config.") {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + key + ": " + e.what());
  }
}

std::string_view kind_name(SynthProfileKind k) {
  switch (k) {
    case SynthProfileKind::standard: return "standard";
    case SynthProfileKind::noiseless: return "noiseless";
    case SynthProfileKind::learnability: return "learnability";
  }
  return "?";
}

SynthProfileKind parse_kind(std::string_view s) {
  if (s == "standard") return SynthProfileKind::standard;
  if (s == "noiseless") return SynthProfileKind::noiseless;
  if (s == "learnability") return SynthProfileKind::learnability;
  throw ConfigError("config.synthetic.kind: unknown profile kind '" + std::string(s) + "'");
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// Resolved configuration of one (selection, model) run; the fingerprint is taken over it.
json run_config(const ExperimentConfig& config, const SignalSelection& sel, const ModelSpec& spec,
                const TrainConfig& train) {
  json j = {{"data", config.data},
            {"target_mode", target_mode_name(config.target_mode)},
            {"signals", sel.label},
            {"channels", sel.channel_names()},
            {"model", spec.to_json()},
            {"train", train.to_json()},
            {"stride", config.stride}};
  if (parse_synthetic_source(config.data)) {
    j["synthetic"] = {{"kind", kind_name(config.synthetic_kind)},
                      {"noise_sd", config.synthetic_noise_sd},
                      {"segment_s", config.synthetic_segment_s}};
  }
  return j;
}

// Everything that can change a result; output location and parallelism cannot.
json fingerprint_json(const ExperimentConfig& config) {
  json j = config.to_json();
  j.erase("out");
  j.erase("jobs");
  j.erase("plots");
  return j;
}

TrainConfig seeded_train(const ExperimentConfig& config) {
  TrainConfig t = config.train;
  t.seed = config.seed;
  return t;
}

}  // namespace

std::optional<SyntheticSource> parse_synthetic_source(std::string_view data) {
  constexpr std::string_view prefix = "synthetic:";
  if (data.substr(0, prefix.size()) != prefix) return std::nullopt;
  std::string_view rest = data.substr(prefix.size());
  SyntheticSource src;
  const auto colon = rest.find(':');
  std::uint64_t n = src.n_subjects;
  if (!parse_u64(rest.substr(0, colon), src.seed) ||
      (colon != std::string_view::npos && (!parse_u64(rest.substr(colon + 1), n) || n < 2))) {
    throw ConfigError("config.data: expected synthetic:<seed>[:<subjects >= 2>], got '" + std::string(data) + "'");
  }
  src.n_subjects = static_cast<std::size_t>(n);
  return src;
}

std::string_view target_mode_name(TargetMode mode) {
  return mode == TargetMode::steady_state ? "steady_state" : "per_sample";
}

TargetMode parse_target_mode(std::string_view name) {
  if (name == "steady_state") return TargetMode::steady_state;
  if (name == "per_sample") return TargetMode::per_sample;
  throw ConfigError("config.target_mode: expected steady_state or per_sample, got '" + std::string(name) + "'");
}

json ExperimentConfig::to_json() const {
  return {{"data", data},
          {"target_mode", target_mode_name(target_mode)},
          {"synthetic",
           {{"kind", kind_name(synthetic_kind)}, {"noise_sd", synthetic_noise_sd}, {"segment_s", synthetic_segment_s}}},
          {"signals", signals},
          {"models", models},
          {"model_overrides", model_overrides},
          {"width_scale", width_scale},
          {"stride", stride},
          {"train", train.to_json()},
          {"seed", seed},
          {"jobs", jobs},
          {"out", out},
          {"universe", universe},
          {"plots", plots}};
}

namespace {

// A string or an array of strings; element errors name the index.
std::vector<std::string> string_list(const json& value, const std::string& path) {
  if (value.is_string()) return {value.get<std::string>()};
  if (!value.is_array()) throw ConfigError(path + ": expected a string or an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_string()) throw ConfigError(path + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(value[i].get<std::string>());
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "data") {
      c.data = field<std::string>(j, key);
    } else if (key == "target_mode") {
      c.target_mode = parse_target_mode(field<std::string>(j, key));
    } else if (key == "synthetic") {
      if (!value.is_object()) throw ConfigError("config.synthetic: expected an object");
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "kind") {
          c.synthetic_kind = parse_kind(field<std::string>(value, sk, "config.synthetic."));
        } else if (sk == "noise_sd") {
          c.synthetic_noise_sd = field<double>(value, sk, "config.synthetic.");
          if (!(c.synthetic_noise_sd >= 0.0)) throw ConfigError("config.synthetic.noise_sd: must be >= 0");
        } else if (sk == "segment_s") {
          c.synthetic_segment_s = field<double>(value, sk, "config.synthetic.");
          if (!(c.synthetic_segment_s >= 180.0)) throw ConfigError("config.synthetic.segment_s: must be >= 180");
        } else {
          throw ConfigError("config.synthetic." + sk + ": unknown field");
        }
      }
    } else if (key == "signals") {
      c.signals = string_list(value, "config.signals");
      for (std::size_t i = 0; i < c.signals.size(); ++i) {
        try {
          (void)parse_selection(c.signals[i]);
        } catch (const SelectionError& e) {
          throw ConfigError("config.signals[" + std::to_string(i) + "]: " + e.what());
        }
      }
    } else if (key == "models") {
      c.models = string_list(value, "config.models");
      for (std::size_t i = 0; i < c.models.size(); ++i) {
        try {
          (void)parse_family(c.models[i]);
        } catch (const Error& e) {
          throw ConfigError("config.models[" + std::to_string(i) + "]: " + e.what());
        }
      }
    } else if (key == "model_overrides") {
      if (!value.is_object()) throw ConfigError("config.model_overrides: expected an object");
      c.model_overrides = value;
    } else if (key == "width_scale") {
      c.width_scale = field<double>(j, key);
      if (!(c.width_scale > 0.0)) throw ConfigError("config.width_scale: must be > 0");
    } else if (key == "stride") {
      c.stride = field<std::size_t>(j, key);
      if (c.stride == 0) throw ConfigError("config.stride: must be >= 1");
    } else if (key == "train") {
      c.train = TrainConfig::from_json(value, &c.warnings);
    } else if (key == "seed") {
      c.seed = field<std::uint64_t>(j, key);
    } else if (key == "jobs") {
      c.jobs = std::max<std::size_t>(1, field<std::size_t>(j, key));
    } else if (key == "out") {
      c.out = field<std::string>(j, key);
    } else if (key == "universe") {
      c.universe = field<std::string>(j, key);
      try {
        (void)parse_universe(c.universe);
      } catch (const SelectionError& e) {
        throw ConfigError(std::string("config.universe: ") + e.what());
      }
    } else if (key == "plots") {
      c.plots = field<bool>(j, key);
    } else {
      throw ConfigError("config." + key + ": unknown field");
    }
  }
  if (!c.data.empty()) (void)parse_synthetic_source(c.data);
  // Overrides are checked against every family, not only the selected ones.
  for (auto family : all_families()) (void)resolve_model_spec(c, family);
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path.string() + "' cannot be opened");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

ModelSpec resolve_model_spec(const ExperimentConfig& config, ModelFamily family) {
  ModelSpec spec = ModelSpec::defaults(family);
  if (config.width_scale != 1.0) spec = spec.scaled(config.width_scale);
  json merged = spec.to_json();
  for (const std::string& key : std::vector<std::string>{"*", std::string(family_name(family))}) {
    if (!config.model_overrides.contains(key)) continue;
    const auto& ov = config.model_overrides.at(key);
    if (!ov.is_object()) throw ConfigError("config.model_overrides." + key + ": expected an object");
    for (const auto& [k, v] : ov.items()) {
      if (k == "family" || !merged.contains(k))
        throw ConfigError("config.model_overrides." + key + "." + k + ": unknown model field");
      merged[k] = v;
    }
  }
  for (const auto& [key, value] : config.model_overrides.items()) {
    if (key == "*") continue;
    try {
      (void)parse_family(key);
    } catch (const Error&) {
      throw ConfigError("config.model_overrides." + key + ": unknown model family");
    }
  }
  try {
    return ModelSpec::from_json(merged);
  } catch (const ConfigError& e) {
    throw ConfigError("config.model_overrides: " + std::string(e.what()));
  }
}

SynthDatasetOptions synthetic_options(const ExperimentConfig& config, const SyntheticSource& source) {
  SynthDatasetOptions o;
  o.seed = source.seed;
  o.n_subjects = source.n_subjects;
  o.kind = config.synthetic_kind;
  o.ee_noise_sd = config.synthetic_noise_sd;
  o.segment_s = config.synthetic_segment_s;
  return o;
}

std::vector<SubjectRecording> load_experiment_dataset(const ExperimentConfig& config) {
  if (config.data.empty()) {
    throw ConfigError("config.data: no dataset given; pass --data <dataset root> or --data synthetic:<seed>");
  }
  IngestOptions ingest;
  ingest.target_mode = config.target_mode;
  if (auto src = parse_synthetic_source(config.data)) {
    std::vector<SubjectRecording> out;
    for (const auto& raw : generate_raw_dataset(synthetic_options(config, *src)))
      out.push_back(ingest_subject(raw, ingest));
    return out;
  }
  if (!std::filesystem::is_directory(config.data))
    throw ConfigError("config.data: '" + config.data + "' is not a dataset directory");
  return load_dataset(config.data, ingest);
}

std::vector<RunOutcome> run_experiments(const ExperimentConfig& config,
                                        const std::vector<SubjectRecording>& dataset) {
  const std::filesystem::path root = config.out;
  const TrainConfig train = seeded_train(config);
  const ExperimentOptions opts{config.stride, config.jobs};

  std::vector<RunOutcome> outcomes;
  ReportTable overall({"signals", "model", "n_folds", "failed_folds", "overall_rmse", "run_fingerprint"},
                      config_fingerprint(fingerprint_json(config)), config.seed);
  for (const auto& expr : config.signals) {
    const SignalSelection sel = parse_selection(expr);
    for (const auto& m : config.models) {
      const ModelFamily family = parse_family(m);
      const ModelSpec spec = resolve_model_spec(config, family);
      RunOutcome o;
      o.info.signals = sel.label;
      o.info.model = std::string(family_name(family));
      o.info.seed = config.seed;
      o.info.config = run_config(config, sel, spec, train);
      o.info.fingerprint = config_fingerprint(o.info.config);
      o.report = run_loso_experiment(dataset, sel, spec, train, opts);
      o.report.fingerprint = o.info.fingerprint;
      o.dir = root / run_directory_name(o.info);
      write_run_report(o.dir, o.info, o.report);
      if (config.plots) {
        const std::string title = o.info.signals + " / " + o.info.model;
        plots::boxplots_from_csv(o.dir / "boxplot.csv", "Per-subject RMSE, " + title, o.dir / "boxplot.svg");
        plots::per_activity_scatter(o.dir / "per_activity.csv", "Per-activity RMSE, " + title,
                                    o.dir / "per_activity.svg");
      }
      overall.row({o.info.signals, o.info.model, std::to_string(o.report.folds.size()),
                   std::to_string(o.report.failed_folds()), num(o.report.overall_rmse), o.info.fingerprint});
      outcomes.push_back(std::move(o));
    }
  }
  overall.save(root / "overall.csv");
  return outcomes;
}

std::vector<ChannelId> parse_universe(std::string_view expr) { return parse_selection(expr).channels; }

SweepOutcome run_sweep_experiment(const ExperimentConfig& config, const std::vector<SubjectRecording>& dataset) {
  const auto universe = parse_universe(config.universe);
  const TrainConfig train = seeded_train(config);
  std::vector<ModelSpec> specs;
  json spec_json = json::array();
  for (const auto& m : config.models) {
    specs.push_back(resolve_model_spec(config, parse_family(m)));
    spec_json.push_back(specs.back().to_json());
  }
  SweepOutcome o;
  o.info.seed = config.seed;
  o.info.config = {{"data", config.data},
                   {"target_mode", target_mode_name(config.target_mode)},
                   {"universe", parse_selection(config.universe).channel_names()},
                   {"models", spec_json},
                   {"train", train.to_json()},
                   {"stride", config.stride}};
  o.info.fingerprint = config_fingerprint(o.info.config);
  o.result = pairwise_sweep(dataset, universe, specs, train, {config.stride, config.jobs});
  o.dir = std::filesystem::path(config.out) / "sweep";
  write_sweep_report(o.dir, o.info, o.result);
  if (config.plots) plots::sweep_heatmaps(o.dir / "sweep_matrix.csv", o.dir);
  return o;
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

std::vector<std::string> reproduce_targets() { return {"table1", "table2", "fig2", "fig3", "fig4", "tableS1"}; }

ExperimentConfig demo_config(const ExperimentConfig& base) {
  ExperimentConfig c = base;
  c.data = "synthetic:" + std::to_string(base.seed) + ":3";
  c.synthetic_kind = SynthProfileKind::standard;
  c.width_scale = 0.25;
  c.stride = 4;
  c.train.epochs = 3;
  return c;
}

namespace {

json load_published(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("published results file '" + path.string() + "' cannot be opened");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("published results file '" + path.string() + "': " + e.what());
  }
}

std::string published_cell(const json& obj, const std::string& key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return "";
  return num(obj.at(key).get<double>());
}

struct Context {
  const ReproduceOptions& options;
  ExperimentConfig config;
  std::vector<SubjectRecording> dataset;
  std::filesystem::path dir;
  std::string fingerprint;
  ReproduceOutcome outcome;

  std::vector<RunOutcome> run(const std::vector<std::string>& signals, const std::string& sub) {
    ExperimentConfig c = config;
    c.signals = signals;
    c.out = (dir / sub).string();
    auto runs = run_experiments(c, dataset);
    for (const auto& r : runs) outcome.partial = outcome.partial || r.report.partial();
    return runs;
  }

  ReportTable table(std::vector<std::string> header) const { return {std::move(header), fingerprint, config.seed}; }

  void save(const ReportTable& t, const std::string& file) {
    t.save(dir / file);
    outcome.files.push_back(dir / file);
  }
};

void reproduce_table1(Context& ctx, const json& published) {
  const auto& rows = published.at("table1").at("rows");
  std::vector<std::string> signals;
  for (const auto& r : rows) signals.push_back(r.at("signals").get<std::string>());
  const auto runs = ctx.run(signals, "runs");

  std::vector<std::string> header{"signals", "label", "linreg_reference_paper"};
  for (const auto& m : ctx.config.models) {
    const std::string name(family_name(parse_family(m)));
    header.push_back(name);
    header.push_back(name + "_paper");
  }
  auto t = ctx.table(header);
  for (const auto& r : rows) {
    const auto sig = r.at("signals").get<std::string>();
    const auto& values = r.at("values");
    std::vector<std::string> cells{sig, r.at("label").get<std::string>(), published_cell(values, "linreg_reference")};
    for (const auto& m : ctx.config.models) {
      const std::string name(family_name(parse_family(m)));
      auto it = std::find_if(runs.begin(), runs.end(),
                             [&](const RunOutcome& o) { return o.info.signals == sig && o.info.model == name; });
      cells.push_back(it != runs.end() ? num(it->report.overall_rmse) : "nan");
      cells.push_back(published_cell(values, name));
    }
    t.row(std::move(cells));
  }
  ctx.save(t, "table1.csv");
}

struct BestCell {
  double nrmse = kNaN;
  std::string signals;
  std::string model;
};

void reproduce_table2(Context& ctx, const json& published) {
  std::vector<std::string> singles;
  if (ctx.options.demo) {
    singles = {"minute_ventilation", "heart_rate", "right_ankle_acc", "chest_acc", "spo2", "left_wrist_eda"};
  } else {
    for (auto id : all_channels()) singles.emplace_back(channel_info(id).name);
  }
  const std::vector<std::string> groups{"local", "global", "local+global", "hexoskin"};
  const auto single_runs = ctx.run(singles, "single");
  const auto group_runs = ctx.run(groups, "group");

  const auto best_of = [](const std::vector<RunOutcome>& runs) {
    std::map<ConditionKey, BestCell> best;
    for (const auto& o : runs) {
      for (const auto& row : o.report.per_activity) {
        if (row.transition || row.nrmse_flagged || !std::isfinite(row.nrmse)) continue;
        auto& b = best[{row.activity, row.condition}];
        if (!std::isfinite(b.nrmse) || row.nrmse < b.nrmse) b = {row.nrmse, o.info.signals, o.info.model};
      }
    }
    return best;
  };
  const auto best_single = best_of(single_runs);
  const auto best_group = best_of(group_runs);

  auto t = ctx.table({"activity", "condition", "nrmse_single", "signal", "model_single", "nrmse_group", "group",
                      "model_group", "nrmse_single_paper", "signal_paper", "nrmse_group_paper", "group_paper"});
  const auto& reference = published.at("table2");
  for (const auto& key : exercise_conditions()) {
    const std::string act(activity_name(key.activity));
    std::vector<std::string> cells{act, key.condition};
    for (const auto* best : {&best_single, &best_group}) {
      auto it = best->find(key);
      if (it == best->end()) {
        cells.insert(cells.end(), {"nan", "", ""});
      } else {
        cells.insert(cells.end(), {num(it->second.nrmse), it->second.signals, it->second.model});
      }
    }
    auto p = std::find_if(reference.begin(), reference.end(), [&](const json& r) {
      return r.at("activity").get<std::string>() == act && r.at("condition").get<std::string>() == key.condition;
    });
    if (p != reference.end()) {
      cells.insert(cells.end(), {published_cell(*p, "nrmse_single"), p->at("signal").get<std::string>(),
                                 published_cell(*p, "nrmse_group"), p->at("group").get<std::string>()});
    } else {
      cells.insert(cells.end(), {"", "", "", ""});
    }
    t.row(std::move(cells));
  }
  ctx.save(t, "table2.csv");
}

void reproduce_fig2(Context& ctx) {
  std::vector<std::string> partners;
  if (ctx.options.demo) {
    partners = {"heart_rate", "emg_left", "right_ankle_acc", "spo2"};
  } else {
    for (auto id : all_channels())
      if (id != ChannelId::minute_ventilation) partners.emplace_back(channel_info(id).name);
  }
  std::vector<std::string> signals{"minute_ventilation"};
  for (const auto& p : partners) signals.push_back("minute_ventilation," + p);
  const auto runs = ctx.run(signals, "runs");

  auto t = ctx.table({"signals", "partner", "model", "rmse"});
  for (const auto& o : runs) {
    const auto comma = o.info.signals.find(',');
    const std::string partner = comma == std::string::npos ? "none" : o.info.signals.substr(comma + 1);
    t.row({o.info.signals, partner, o.info.model, num(o.report.overall_rmse)});
  }
  ctx.save(t, "fig2.csv");
  if (ctx.config.plots) {
    plots::heatmap_from_csv(ctx.dir / "fig2.csv", "partner", "model", "rmse",
                            "RMSE (W/kg), minute ventilation + partner", ctx.dir / "fig2.svg");
    ctx.outcome.files.push_back(ctx.dir / "fig2.svg");
  }
}

void reproduce_fig3(Context& ctx) {
  const auto runs = ctx.run({"minute_ventilation", "local+global"}, "runs");
  auto t = ctx.table({"signals", "model", "activity", "condition", "transition", "n_samples", "rmse", "mean_ee",
                      "nrmse"});
  for (const auto& o : runs) {
    for (const auto& r : o.report.per_activity) {
      t.row({o.info.signals, o.info.model, std::string(activity_name(r.activity)), r.condition,
             r.transition ? "1" : "0", std::to_string(r.n_samples), num(r.rmse), num(r.mean_ee), num(r.nrmse)});
    }
  }
  ctx.save(t, "fig3.csv");
  if (ctx.config.plots) {
    plots::per_activity_scatter(ctx.dir / "fig3.csv", "Per-activity RMSE (W/kg)", ctx.dir / "fig3.svg");
    ctx.outcome.files.push_back(ctx.dir / "fig3.svg");
  }
}

void reproduce_fig4(Context& ctx) {
  std::vector<std::string> signals;
  if (ctx.options.demo) {
    signals = {"minute_ventilation", "heart_rate", "chest_acc", "left_wrist_temp"};
  } else {
    for (auto id : all_channels()) signals.emplace_back(channel_info(id).name);
  }
  const auto runs = ctx.run(signals, "runs");
  auto t = ctx.table({"signals", "model", "n", "median", "q25", "q75", "whisker_lo", "whisker_hi", "outliers"});
  for (const auto& o : runs) {
    if (!o.report.per_subject) continue;
    const auto& b = *o.report.per_subject;
    std::string outliers;
    for (std::size_t i = 0; i < b.outliers.size(); ++i) outliers += (i ? " " : "") + num(b.outliers[i]);
    t.row({o.info.signals, o.info.model, std::to_string(b.n), num(b.median), num(b.q25), num(b.q75),
           num(b.whisker_lo), num(b.whisker_hi), outliers});
  }
  ctx.save(t, "fig4.csv");
  if (ctx.config.plots) {
    plots::boxplots_from_csv(ctx.dir / "fig4.csv", "Per-subject RMSE (W/kg)", ctx.dir / "fig4.svg");
    ctx.outcome.files.push_back(ctx.dir / "fig4.svg");
  }
}

void reproduce_tableS1(Context& ctx, const json& published) {
  ExperimentConfig c = ctx.config;
  c.universe = ctx.options.demo ? "minute_ventilation,emg_left,heart_rate,right_ankle_acc,left_wrist_eda" : "all";
  c.out = ctx.dir.string();
  const auto sweep = run_sweep_experiment(c, ctx.dataset);
  ctx.outcome.partial = ctx.outcome.partial || sweep.result.failed_cells() > 0;

  const auto name = [](ChannelId id) { return std::string(channel_info(id).name); };
  const auto& worst_paper = published.at("tableS1_worst");
  auto worst = ctx.table({"rank", "signal_a", "signal_b", "model", "rmse", "signal_a_paper", "signal_b_paper",
                          "model_paper", "rmse_paper"});
  const auto cells = sweep.result.worst_pairs(16);
  for (std::size_t i = 0; i < std::max(cells.size(), worst_paper.size()); ++i) {
    std::vector<std::string> row{std::to_string(i + 1)};
    if (i < cells.size()) {
      row.insert(row.end(), {name(cells[i].a), name(cells[i].b), std::string(family_name(cells[i].model)),
                             num(cells[i].rmse)});
    } else {
      row.insert(row.end(), {"", "", "", ""});
    }
    if (i < worst_paper.size()) {
      const auto& p = worst_paper[i];
      row.insert(row.end(), {p.at("a").get<std::string>(), p.at("b").get<std::string>(),
                             p.at("model").get<std::string>(), published_cell(p, "rmse")});
    } else {
      row.insert(row.end(), {"", "", "", ""});
    }
    worst.row(std::move(row));
  }
  ctx.save(worst, "tableS1_worst.csv");

  const auto& best_paper = published.at("tableS1_best");
  auto best = ctx.table({"signal", "partner", "model", "rmse", "partner_paper", "model_paper", "rmse_paper"});
  for (const auto& r : sweep.result.best_partners(ChannelId::minute_ventilation)) {
    std::vector<std::string> row{name(r.signal), name(r.partner), std::string(family_name(r.model)), num(r.rmse)};
    auto p = std::find_if(best_paper.begin(), best_paper.end(),
                          [&](const json& e) { return e.at("signal").get<std::string>() == name(r.signal); });
    if (p != best_paper.end()) {
      row.insert(row.end(), {p->at("partner").get<std::string>(), p->at("model").get<std::string>(),
                             published_cell(*p, "rmse")});
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    best.row(std::move(row));
  }
  ctx.save(best, "tableS1_best.csv");
}

}  // namespace

ReproduceOutcome reproduce(const ReproduceOptions& options, const ExperimentConfig& config) {
  const auto targets = reproduce_targets();
  if (std::find(targets.begin(), targets.end(), options.target) == targets.end()) {
    throw ConfigError("reproduce: unknown target '" + options.target +
                      "'; expected one of table1, table2, fig2, fig3, fig4, tableS1");
  }
  ExperimentConfig cfg = options.demo ? demo_config(config) : config;
  if (options.epochs > 0) cfg.train.epochs = options.epochs;
  if (!options.demo && (cfg.data.empty() || parse_synthetic_source(cfg.data))) {
    throw ConfigError("reproduce " + options.target +
                      " needs the public wearable EE dataset: pass --data <dataset root> (subject_<k>/session_<s>/"
                      "signals.csv, metabolic.csv, segments.csv), or run with --demo for a scaled-down synthetic "
                      "version");
  }
  if (!options.models.empty()) {
    cfg.models = options.models;
  } else if (options.demo) {
    cfg.models = {"linreg", "cnn"};
  } else {
    cfg.models.clear();
    for (auto f : all_families()) cfg.models.emplace_back(family_name(f));
  }
  for (auto& m : cfg.models) m = std::string(family_name(parse_family(m)));

  const json published = load_published(options.published_results);

  Context ctx{options, cfg, load_experiment_dataset(cfg), std::filesystem::path(cfg.out) / options.target, {}, {}};
  json fp = fingerprint_json(cfg);
  fp["target"] = options.target;
  fp["demo"] = options.demo;
  ctx.fingerprint = config_fingerprint(fp);
  std::filesystem::create_directories(ctx.dir);

  if (options.target == "table1") reproduce_table1(ctx, published);
  else if (options.target == "table2") reproduce_table2(ctx, published);
  else if (options.target == "fig2") reproduce_fig2(ctx);
  else if (options.target == "fig3") reproduce_fig3(ctx);
  else if (options.target == "fig4") reproduce_fig4(ctx);
  else reproduce_tableS1(ctx, published);
  return ctx.outcome;
}

}  // namespace eeb
