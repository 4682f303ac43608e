#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "eeb/csv.hpp"
#include "eeb/errors.hpp"
#include "eeb/experiment.hpp"
#include "fixtures.hpp"

using namespace eeb;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + EEBENCH_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string config_error(const nlohmann::json& j) {
  try {
    (void)ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("config errors name the field path") {
  CHECK(config_error({{"signals", {"minute_ventilation", 3}}}).find("config.signals[1]") != std::string::npos);
  CHECK(config_error({{"stride", 0}}).find("config.stride") != std::string::npos);
  CHECK(config_error({{"train", {{"epochz", 2}}}}).find("epochz") != std::string::npos);
  CHECK(config_error({{"model_overrides", {{"cnn", {{"filters", 3}}}}}}).find("filters") != std::string::npos);
  CHECK(config_error({{"colour", "red"}}).find("colour") != std::string::npos);
  CHECK(config_error({{"data", "synthetic:x"}}) .empty() == false);
  CHECK(config_error({{"signals", {"local-minute_ventilation"}}}).find("config.signals[0]") != std::string::npos);
}

TEST_CASE("config round trip and fingerprint") {
  ExperimentConfig c;
  c.data = "synthetic:3";
  c.signals = {"hexoskin", "global-minute_ventilation"};
  c.models = {"cnn", "lstm"};
  c.model_overrides = {{"*", {{"dropout", 0.0}}}, {"cnn", {{"window_len", 24}}}};
  c.train.epochs = 5;
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  const auto spec = resolve_model_spec(back, ModelFamily::cnn);
  CHECK(spec.window_len == 24);
  CHECK(spec.dropout == 0.0);
  CHECK(resolve_model_spec(back, ModelFamily::lstm).window_len == 20);

  const auto src = parse_synthetic_source("synthetic:7:4");
  REQUIRE(src.has_value());
  CHECK(src->seed == 7);
  CHECK(src->n_subjects == 4);
  CHECK_FALSE(parse_synthetic_source("/data/ee").has_value());
  CHECK_THROWS_AS(parse_synthetic_source("synthetic:7:1"), ConfigError);
}

TEST_CASE("published values file") {
  const auto j = nlohmann::json::parse(slurp(EEB_PUBLISHED_RESULTS));
  CHECK(j.at("table1").at("rows").size() == 22);
  CHECK(j.at("table2").size() == 21);
  CHECK(j.at("tableS1_worst").size() == 16);
  CHECK(j.at("tableS1_best").size() == 16);
  for (const auto& row : j.at("table1").at("rows")) CHECK_NOTHROW(parse_selection(row.at("signals").get<std::string>()));
}

TEST_CASE("cli smoke run") {
  fixtures::TempDir dir("cli_run");
  const auto out = dir.path() / "out";
  const int code = cli("--data synthetic:7 --out \"" + out.string() + "\" run --signals minute_ventilation --model linreg",
                       dir.path() / "log.txt");
  INFO(slurp(dir.path() / "log.txt"));
  REQUIRE(code == 0);
  const auto overall = csv::read(out / "overall.csv");
  CHECK(overall.rows.size() == 1);
  CHECK(overall.column("fingerprint") == 0);
  CHECK(overall.column("seed") == 1);
  const auto run_dir = out / "minute_ventilation__linreg__seed0";
  for (const char* f : {"overall.csv", "folds.csv", "per_subject.csv", "boxplot.csv", "per_activity.csv",
                        "predictions.csv", "summary.json", "boxplot.svg", "per_activity.svg"})
    CHECK_MESSAGE(fs::exists(run_dir / f), f);
  CHECK(csv::read(run_dir / "folds.csv").rows.size() == 10);
}

TEST_CASE("cli usage errors") {
  fixtures::TempDir dir("cli_usage");
  const auto log = dir.path() / "log.txt";
  CHECK(cli("--out \"" + dir.path().string() + "\" reproduce table1", log) == 2);
  CHECK(slurp(log).find("--demo") != std::string::npos);
  CHECK(cli("--data synthetic:7 --out \"" + dir.path().string() + "\" run --signals not_a_signal", log) == 2);
  CHECK(cli("--data synthetic:7 run --model perceptron", log) == 2);
  CHECK(cli("reproduce fig9 --demo", log) == 2);
  CHECK(cli("frobnicate", log) == 2);
}

TEST_CASE("cli gen-synth tree feeds a run") {
  fixtures::TempDir dir("cli_gen");
  const auto tree = dir.path() / "tree";
  const auto log = dir.path() / "log.txt";
  REQUIRE(cli("--data synthetic:5:2 --out \"" + tree.string() + "\" gen-synth --segment-s 200", log) == 0);
  CHECK(fs::exists(tree / "subject_1"));
  CHECK(fs::exists(tree / "subject_2"));
  const auto out = dir.path() / "out";
  const int code = cli("--data \"" + tree.string() + "\" --out \"" + out.string() +
                           "\" run --signals hexoskin --model linreg --no-plots",
                       log);
  INFO(slurp(log));
  CHECK(code == 0);
  CHECK(csv::read(out / "overall.csv").rows.size() == 1);
}

TEST_CASE("cli sweep over three signals") {
  fixtures::TempDir dir("cli_sweep");
  const auto out = dir.path() / "out";
  const int code = cli("--data synthetic:3:3 --out \"" + out.string() +
                           "\" sweep --universe minute_ventilation,heart_rate,chest_acc --model linreg --stride 4",
                       dir.path() / "log.txt");
  INFO(slurp(dir.path() / "log.txt"));
  REQUIRE(code == 0);
  CHECK(csv::read(out / "sweep" / "sweep_matrix.csv").rows.size() == 3);
  CHECK(csv::read(out / "sweep" / "best_partners.csv").rows.size() == 3);
  CHECK(fs::exists(out / "sweep" / "heatmap_linreg.svg"));
}

TEST_CASE("cli reproduce demos") {
  fixtures::TempDir dir("cli_repro");
  const auto out = dir.path() / "out";
  const auto log = dir.path() / "log.txt";
  SUBCASE("table2") {
    const int code = cli("--out \"" + out.string() + "\" --jobs 3 reproduce table2 --demo --model linreg", log);
    INFO(slurp(log));
    REQUIRE(code == 0);
    const auto t = csv::read(out / "table2" / "table2.csv");
    CHECK(t.rows.size() == 21);
  }
  SUBCASE("fig4") {
    const int code = cli("--out \"" + out.string() + "\" --jobs 3 reproduce fig4 --demo --model linreg", log);
    INFO(slurp(log));
    REQUIRE(code == 0);
    CHECK(csv::read(out / "fig4" / "fig4.csv").rows.size() == 4);
    CHECK(fs::exists(out / "fig4" / "fig4.svg"));
  }
}

TEST_CASE("cli gradcheck") {
  fixtures::TempDir dir("cli_gc");
  const auto log = dir.path() / "log.txt";
  CHECK(cli("gradcheck --model linreg --model cnn", log) == 0);
  CHECK(slurp(log).find("PASS linreg") != std::string::npos);
}
