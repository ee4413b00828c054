#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "apcvfl/error.hpp"
#include "apcvfl/report.hpp"

using namespace apcvfl;

namespace {

ScenarioConfig tiny_scenario() {
  ScenarioConfig c;
  c.dataset_id = "synth";
  c.csv_path = "unused.csv";
  c.active_features = {"a0", "a1"};
  c.aligned_count = 60;
  c.test_count = 10;
  c.cv_folds = 3;
  c.classifier_epochs = 5;
  c.seeds = {1, 2};
  return c;
}

const FeatureMatrix& tiny_data() {
  static const FeatureMatrix d = synth_dataset(120, 3, 4, 2, LabelRule::Mixed, 2);
  return d;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("apcvfl_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("the manifest is enough to reproduce a run") {
    const auto result = run_method(Method::Local, tiny_scenario(), tiny_data());
    const auto report = make_report(result, TransportKind::InProcess, "2026-01-01T00:00:00Z");
    const std::string text = report_to_json(report);
    const RunManifest m = parse_manifest(text);
    CHECK(m == report.manifest);
    CHECK(m.scenario.seeds == std::vector<std::uint64_t>{1, 2});

    const auto again = run_method(m.method, m.scenario, tiny_data());
    CHECK(again == result);
    CHECK(report_to_json(make_report(again, m.transport, m.timestamp)) == text);

    const auto j = nlohmann::json::parse(text);
    CHECK(j["schema_version"] == kReportSchemaVersion);
    CHECK(j["evaluation"] == "cv");
    CHECK(j["runs"].size() == 2);
    CHECK(j["runs"][0]["folds"].size() == 3);
    CHECK(j["metrics"]["accuracy"]["run_means"].size() == 2);
    CHECK(j["ledger"]["rounds"] == 0);
  }

  TEST_CASE("manifest parsing errors") {
    CHECK_THROWS_AS(parse_manifest("{"), ParseError);
    CHECK_THROWS_AS(parse_manifest(R"({"schema_version": 2})"), ParseError);
    CHECK_THROWS_AS(parse_manifest(R"({"schema_version": 1, "manifest": {}})"), ParseError);
  }

  TEST_CASE("non-finite metrics are refused") {
    auto result = run_method(Method::Local, tiny_scenario(), tiny_data());
    result.seeds[0].folds[0].f1_macro = std::numeric_limits<double>::quiet_NaN();
    const auto report = make_report(result, TransportKind::InProcess, "t");
    CHECK_THROWS_AS(report_to_json(report), ContractError);
    const auto dir = scratch_dir("nonfinite");
    CHECK_THROWS_AS(write_report(report, dir), ContractError);
    CHECK_FALSE(std::filesystem::exists(dir));
  }

  TEST_CASE("metrics CSV has one row per seed, fold and metric plus summaries") {
    const auto result = run_method(Method::Local, tiny_scenario(), tiny_data());
    const std::string csv = metrics_csv(make_report(result, TransportKind::InProcess, "t"));
    CHECK(csv.rfind("dataset,aligned,a,method,seed,fold,metric,value,mean_of_means,std\n", 0) == 0);
    CHECK(count_lines(csv) == 1 + 2 * 3 * 4 + 4);
    CHECK(csv.find("synth,60,2,local,1,0,accuracy,") != std::string::npos);
  }

  TEST_CASE("report files are written under a stable stem") {
    const auto result = run_method(Method::Local, tiny_scenario(), tiny_data());
    const auto report = make_report(result, TransportKind::InProcess, utc_timestamp());
    CHECK(report_stem(report.manifest) == "synth_n60_a2_local");
    const auto dir = scratch_dir("write");
    const auto path = write_report(report, dir);
    CHECK(path == dir / "synth_n60_a2_local.json");
    CHECK(slurp(path) == report_to_json(report));
    CHECK(std::filesystem::exists(dir / "synth_n60_a2_local.metrics.csv"));
    CHECK_FALSE(std::filesystem::exists(dir / "synth_n60_a2_local.json.tmp"));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("atomic writes replace the target and leave no temporary") {
    const auto dir = scratch_dir("atomic");
    std::filesystem::create_directories(dir);
    const auto p = dir / "f.txt";
    write_file_atomic(p, "one");
    write_file_atomic(p, "two");
    CHECK(slurp(p) == "two");
    CHECK_FALSE(std::filesystem::exists(dir / "f.txt.tmp"));
    CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "f.txt", "x"), Error);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("grid tables") {
    auto sc = tiny_scenario();
    sc.seeds = {1};
    auto sc2 = sc;
    sc2.aligned_count = 200;  // more than the active rows: the cell fails
    const auto cells = run_grid({sc, sc2}, {Method::Local}, tiny_data());
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].result.has_value());
    CHECK_FALSE(cells[1].result.has_value());
    CHECK_FALSE(cells[1].error.empty());

    const std::string grid = grid_csv(cells);
    CHECK(grid.rfind("dataset,aligned,a,method,metric,mean_of_means,std,rounds,bytes,wire_bytes,"
                     "status,error\n",
                     0) == 0);
    CHECK(count_lines(grid) == 1 + 2 * 4);
    CHECK(grid.find(",failed,") != std::string::npos);

    const std::string summary = grid_summary_csv(cells);
    CHECK(summary.rfind("dataset,aligned,method,metric,cells,mean,std\n", 0) == 0);
    CHECK(count_lines(summary) == 1 + 4);
  }

  TEST_CASE("quality trace CSV") {
    QualityTrace t;
    t.epochs.push_back({0.5, {0.75, 0.25}});
    t.epochs.push_back({0.25, {1.0, 1.0}});
    CHECK(quality_trace_csv(t) ==
          "epoch,train_loss,mean,fold_0,fold_1\n0,0.5,0.5,0.75,0.25\n1,0.25,1,1,1\n");
  }
}
