#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "apcvfl/classifier.hpp"
#include "apcvfl/data.hpp"
#include "apcvfl/error.hpp"
#include "apcvfl/experiment.hpp"

using namespace apcvfl;

namespace {

ScenarioConfig synth_scenario() {
  ScenarioConfig c;
  c.dataset_id = "synth";
  c.csv_path = "unused.csv";
  c.active_features = {"a0", "a1"};
  c.aligned_count = 60;
  c.test_count = 10;
  return c;
}

bool subset_of(const IdSet& a, const IdSet& b) {
  return std::all_of(a.begin(), a.end(), [&](const auto& id) { return b.contains(id); });
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("CSV parsing") {
    std::istringstream in("id,x,label,y\nr1,1.5,0,2\nr2,-3,1,4e-1\n");
    const FeatureMatrix m = parse_csv(in, "id", std::string("label"));
    CHECK(m.ids == std::vector<std::string>{"r1", "r2"});
    CHECK(m.feature_names == std::vector<std::string>{"x", "y"});
    CHECK(m.features(1, 1) == doctest::Approx(0.4));
    CHECK(*m.labels == std::vector<int>{0, 1});
    CHECK(m.class_count() == 2);

    std::ostringstream out;
    write_csv(out, m);
    std::istringstream back(out.str());
    CHECK(parse_csv(back, "id", std::string("label")) == m);
  }

  TEST_CASE("CSV errors name the location") {
    std::istringstream missing("id,x\nr1,\n");
    try {
      parse_csv(missing, "id", std::nullopt, "t.csv");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("t.csv") != std::string::npos);
      CHECK(msg.find("'x'") != std::string::npos);
    }
    std::istringstream dup("id,x\nr1,1\nr1,2\n");
    CHECK_THROWS_AS(parse_csv(dup), ParseError);
    std::istringstream no_id("key,x\nr1,1\n");
    CHECK_THROWS_AS(parse_csv(no_id), ParseError);
    std::istringstream ragged("id,x\nr1,1,2\n");
    CHECK_THROWS_AS(parse_csv(ragged), ParseError);
    std::istringstream text("id,x\nr1,abc\n");
    CHECK_THROWS_AS(parse_csv(text), ParseError);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_csv(empty), ParseError);
  }

  TEST_CASE("standardisation uses training statistics only") {
    FeatureMatrix train;
    train.ids = {"a", "b"};
    train.feature_names = {"u", "c"};
    train.features = Tensor2D::from_rows({{1, 5}, {3, 5}});
    FeatureMatrix other = train;
    other.ids = {"z"};
    other.features = Tensor2D::from_rows({{5, 9}});
    const auto r = standardize(train, {other});
    CHECK(r.stats.mean[0] == doctest::Approx(2.0));
    CHECK(r.stats.stddev[0] == doctest::Approx(1.0));
    CHECK(r.train.features(0, 0) == doctest::Approx(-1.0));
    CHECK(r.others[0].features(0, 0) == doctest::Approx(3.0));
    // Zero-variance column maps to 0 everywhere.
    CHECK(r.train.features(1, 1) == 0.0F);
    CHECK(r.others[0].features(0, 1) == 0.0F);
  }

  TEST_CASE("scenario JSON round trip and validation") {
    ScenarioConfig c = synth_scenario();
    c.lambda = 0.5;
    c.distill_loss = LossKind::Mae;
    c.seeds = {4, 5};
    const ScenarioConfig back = ScenarioConfig::from_json(c.to_json());
    CHECK(back == c);
    CHECK(back.hash() == c.hash());
    ScenarioConfig d = c;
    d.aligned_count = 61;
    CHECK(d.hash() != c.hash());

    CHECK_THROWS_AS(ScenarioConfig::from_json(R"({"dataset_id":"x","bogus":1})"), ConfigError);
    CHECK_THROWS_AS(ScenarioConfig::from_json("not json"), ConfigError);
    ScenarioConfig bad = c;
    bad.aligned_count = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.active_features = {"a0", "a0"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("vertical split invariants") {
    const FeatureMatrix data = synth_dataset(200, 3, 4, 2, LabelRule::Mixed, 1);
    ScenarioConfig c = synth_scenario();
    c.active_rows = 150;
    const VerticalSplit s = vertical_split(data, c);

    CHECK(s.active.rows() == 150);
    CHECK(s.active.cols() == 2);
    CHECK(s.passive.rows() == 200);
    CHECK(s.passive.cols() == 5);
    CHECK(s.active.has_labels());
    CHECK_FALSE(s.passive.has_labels());
    for (const auto& f : s.active.feature_names) {
      CHECK(std::find(s.passive.feature_names.begin(), s.passive.feature_names.end(), f) ==
            s.passive.feature_names.end());
    }
    CHECK(s.active.cols() + s.passive.cols() == data.cols());

    CHECK(s.aligned_ids.size() == 60);
    CHECK(s.aligned_order.size() == 60);
    const auto common = intersect_ids(s.active.ids, s.passive.ids);
    CHECK(IdSet(common.begin(), common.end()) == s.aligned_ids);
    CHECK(s.val_ids.size() == 15);
    CHECK(s.test_ids.size() == 10);
    CHECK(subset_of(s.test_ids, s.aligned_ids));
    for (const auto& id : s.test_ids) CHECK_FALSE(s.val_ids.contains(id));
  }

  TEST_CASE("aligned sets nest across counts; validation rows do not move") {
    const FeatureMatrix data = synth_dataset(200, 3, 4, 2, LabelRule::Mixed, 1);
    ScenarioConfig c = synth_scenario();
    c.aligned_count = 100;
    const VerticalSplit big = vertical_split(data, c);
    c.aligned_count = 40;
    const VerticalSplit small = vertical_split(data, c);
    CHECK(subset_of(small.aligned_ids, big.aligned_ids));
    CHECK(small.val_ids == big.val_ids);
    CHECK(small.active == big.active);
  }

  TEST_CASE("split errors") {
    const FeatureMatrix data = synth_dataset(50, 2, 2, 2, LabelRule::Mixed, 1);
    ScenarioConfig c = synth_scenario();
    c.aligned_count = 51;
    CHECK_THROWS_AS(vertical_split(data, c), ConfigError);
    c.aligned_count = 10;
    c.active_features = {"a0", "nope"};
    CHECK_THROWS_AS(vertical_split(data, c), ConfigError);
    c.active_features = {"a0", "a1", "p0", "p1"};
    CHECK_THROWS_AS(vertical_split(data, c), ConfigError);
  }

  TEST_CASE("breast-cancer registry: 16 cells, a=5 leaves 25 passive features") {
    const auto dir = resolve_data_dir(std::nullopt);
    const auto reg = ScenarioRegistry::load(dir / "registry.json");
    const auto grid = scenario_grid(reg, "breast");
    REQUIRE(grid.size() == 16);
    CHECK(grid[0].aligned_count == 250);
    CHECK(grid[0].active_features.size() == 5);
    CHECK(grid[3].active_features.size() == 2);
    CHECK(grid[15].aligned_count == 100);
    // The transfer order removes one feature at a time from the front.
    CHECK(grid[1].active_features ==
          std::vector<std::string>(grid[0].active_features.begin() + 1,
                                   grid[0].active_features.end()));
    const FeatureMatrix data = load_scenario_dataset(grid[0], dir);
    CHECK(data.rows() == 569);
    const VerticalSplit s = vertical_split(data, grid[0]);
    CHECK(s.active.cols() == 5);
    CHECK(s.passive.cols() == 25);
    CHECK(s.active.rows() == 500);
    CHECK(s.test_ids.size() == 50);
    CHECK_THROWS_AS(reg.entry("nope"), ConfigError);
  }

  TEST_CASE("synthetic data with a passive-only label rule") {
    const FeatureMatrix a = synth_dataset(600, 3, 6, 2, LabelRule::PassiveOnly, 7);
    CHECK(a == synth_dataset(600, 3, 6, 2, LabelRule::PassiveOnly, 7));
    CHECK_FALSE(a == synth_dataset(600, 3, 6, 2, LabelRule::PassiveOnly, 8));
    CHECK_THROWS_AS(synth_dataset(10, 1, 2, 2, LabelRule::PassiveOnly, 1), ContractError);

    // Linear probe on the active columns sits near chance; on the passive
    // columns it is nearly perfect.
    auto cols = [&](std::size_t from, std::size_t to) {
      Tensor2D t(a.rows(), to - from);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = from; c < to; ++c) t(r, c - from) = a.features(r, c);
      }
      return t;
    };
    const auto factory = logistic_factory(60, 32);
    auto mean_acc = [&](const Tensor2D& x) {
      double s = 0.0;
      const auto folds = cross_validate(x, *a.labels, 5, 1, factory);
      for (const auto& m : folds) s += m.accuracy;
      return s / static_cast<double>(folds.size());
    };
    CHECK(mean_acc(cols(0, 3)) < 0.62);
    CHECK(mean_acc(cols(3, 9)) > 0.9);
  }
}
