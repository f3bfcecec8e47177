#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>

#include "criticality_suite.hpp"
#include "doctest.h"
#include "urfclust/dataset.hpp"

using namespace urfclust;
namespace k = urfclust::kinematics;

namespace {

const char* kHeader = "v_eg_t-2,v_eg_t0,b_eg,v_tg_t-2,v_tg_t0,b_tg,delta_rel,r,v_lim,n_L";

std::string five_rows() {
  std::string s = std::string(kHeader) + "\n";
  for (int i = 0; i < 5; ++i)
    s += std::to_string(10 + i) + ",9,1,8,8,0,45.5,11111,13.89," + std::to_string(1 + i % 2) + "\n";
  return s;
}

template <class F>
DataError data_error(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e;
  }
  FAIL("expected DataError");
  return DataError("unreachable");
}

k::ScenarioWindow critical_window(double ego_before, double ego_now, double tgt_before, double tgt_now,
                                  double tgt_heading) {
  // side-by-side near miss: stays critical for any speeds above 2 m/s
  k::ScenarioWindow w;
  w.ego_t_minus2 = k::make_state({-40, 0}, ego_before, 0, 0);
  w.ego_t0 = k::make_state({0, 0}, ego_now, 0, 0);
  w.target_t_minus2 = k::make_state({-40, 2.0}, tgt_before, 0, tgt_heading);
  w.target_t0 = k::make_state({0, 2.0}, tgt_now, 0, tgt_heading);
  return w;
}

}  // namespace

TEST_CASE("scenario schema") {
  const auto s = FeatureSchema::scenario();
  REQUIRE(s.size() == 10);
  const std::vector<std::string> names = {"v_eg_t-2", "v_eg_t0", "b_eg",      "v_tg_t-2", "v_tg_t0",
                                          "b_tg",     "delta_rel", "r",       "v_lim",    "n_L"};
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(s[i].name == names[i]);
  CHECK(s[2].kind == FeatureKind::binary);
  CHECK(s[5].kind == FeatureKind::binary);
  CHECK(s[0].display_group == s[4].display_group);
  CHECK_THROWS_AS(FeatureSchema({{"a", FeatureKind::continuous, ""}, {"a", FeatureKind::continuous, ""}}),
                  DataError);
}

TEST_CASE("feature matrix invariants") {
  FeatureSchema s({{"x", FeatureKind::continuous, ""}, {"flag", FeatureKind::binary, ""}});
  CHECK_THROWS_AS(FeatureMatrix(s, {1, 0.5, 2, 1}), DataError);
  CHECK_THROWS_AS(FeatureMatrix(s, {1, 0, std::nan(""), 1}), DataError);
  CHECK_THROWS_AS(FeatureMatrix(s, {1, 0, 2}), DataError);
  const FeatureMatrix m(s, {1, 0, 2, 1, 3, 0});
  CHECK(m.rows() == 3);
  CHECK(m.row_ids() == std::vector<std::int64_t>{0, 1, 2});
  const std::vector<std::size_t> pick = {2, 0};
  const auto sub = m.select(pick);
  CHECK(sub.at(0, 0) == 3);
  CHECK(sub.row_ids() == std::vector<std::int64_t>{2, 0});
}

TEST_CASE("load_csv examples and errors") {
  const auto schema = FeatureSchema::scenario();
  const auto m = parse_csv(five_rows(), schema);
  CHECK(m.rows() == 5);
  CHECK(m.cols() == 10);
  CHECK(m.row_ids() == std::vector<std::int64_t>{0, 1, 2, 3, 4});
  CHECK_FALSE(m.has_labels());

  std::string bad = five_rows();
  bad.replace(bad.find(",9,1,8"), 6, ",9,0.5,8");
  const auto e = data_error([&] { parse_csv(bad, schema); });
  CHECK(e.row() == 0);
  CHECK(e.column() == 2);
  CHECK(std::string(e.what()).find("b_eg") != std::string::npos);

  const auto missing = data_error([&] { parse_csv("v_eg_t-2,v_eg_t0\n1,2\n3,4\n", schema); });
  CHECK(std::string(missing.what()).find("missing column") != std::string::npos);

  std::string text = five_rows();
  text.replace(text.rfind("13.89"), 5, "abc");
  const auto nonnum = data_error([&] { parse_csv(text, schema); });
  CHECK(nonnum.row() == 4);
  CHECK(nonnum.column() == 8);

  const std::string one_row = std::string(kHeader) + "\n1,1,0,1,1,0,0,1,1,1\n";
  CHECK_THROWS_AS(parse_csv(one_row, schema), DataError);
  CHECK_THROWS_AS(parse_csv(std::string(kHeader) + ",extra\n", schema), DataError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", schema), DataError);

  const std::string typed = std::string(kHeader) + ",type\n1,1,0,1,1,0,0,1,1,1,highway\n2,2,1,2,2,1,3,4,5,2,roundabout\n";
  const auto labelled = parse_csv(typed, schema);
  REQUIRE(labelled.has_labels());
  CHECK(labelled.labels()[1] == Scenery::roundabout);
  CHECK_THROWS_AS(parse_csv(std::string(kHeader) + ",type\n1,1,0,1,1,0,0,1,1,1,bridge\n2,2,1,2,2,1,3,4,5,2,highway\n",
                            schema),
                  DataError);
}

TEST_CASE("csv round trip is exact") {
  const auto templates = SceneryTemplate::defaults();
  const auto m = generate_synthetic(templates, 50, 3);
  const auto back = parse_csv(format_csv(m), FeatureSchema::scenario());
  CHECK(back == m);
  const auto path = std::filesystem::temp_directory_path() / "urfclust_roundtrip.csv";
  save_csv(m, path);
  CHECK(load_csv(path, FeatureSchema::scenario()) == m);
  std::filesystem::remove(path);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  FeatureSchema s({{"a", FeatureKind::continuous, ""}, {"b", FeatureKind::continuous, ""}});
  std::vector<double> v(200);
  for (auto& x : v) x = u(rng) / 7.0;
  const FeatureMatrix r(s, v);
  CHECK(parse_csv(format_csv(r), s) == r);
}

TEST_CASE("extract_features examples") {
  const RoadAttributes road{9000.0, 13.89, 2};
  const auto f = extract_features(critical_window(30, 30, 25, 20, 0.0), road);
  REQUIRE(f.size() == 10);
  CHECK(f[0] == 30);
  CHECK(f[1] == 30);
  CHECK(f[2] == 0);
  CHECK(f[3] == 25);
  CHECK(f[4] == 20);
  CHECK(f[5] == 1);
  CHECK(f[7] == 11111.0);
  CHECK(f[8] == 13.89);
  CHECK(f[9] == 2);

  CHECK(relative_angle_deg(0.0, 270.0 * suite::kPi / 180.0) == doctest::Approx(90.0));
  CHECK(relative_angle_deg(0.0, suite::kPi) == doctest::Approx(180.0));
  CHECK(clamp_radius(9000) == 11111.0);
  CHECK(clamp_radius(7000) == 7000.0);
  CHECK(clamp_radius(150) == 150.0);

  const auto calm = suite::window_at_t0(k::make_state({0, 0}, 10, 0, 0), k::make_state({0, 30}, 10, 0, 0));
  CHECK_THROWS_AS(extract_features(calm, road), DataError);
}

TEST_CASE("generate_synthetic contract") {
  const auto templates = SceneryTemplate::defaults();
  const auto a = generate_synthetic(templates, 200, 7);
  const auto b = generate_synthetic(templates, 200, 7);
  CHECK(a.rows() == 600);
  CHECK(a == b);
  CHECK(a.labels() == b.labels());
  CHECK_FALSE(generate_synthetic(templates, 200, 8) == a);
  CHECK_THROWS_AS(generate_synthetic(std::span<const SceneryTemplate>{}, 10, 1), DataError);
  CHECK_THROWS_AS(generate_synthetic(templates, 0, 1), DataError);

  const auto schema = a.schema();
  const std::size_t delta = *schema.index_of("delta_rel");
  const std::size_t r = *schema.index_of("r");
  std::set<Scenery> seen;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    seen.insert(a.labels()[i]);
    if (a.labels()[i] == Scenery::highway) CHECK(a.at(i, delta) <= 30.0);
    CHECK((a.at(i, 2) == 0.0 || a.at(i, 2) == 1.0));
    CHECK((a.at(i, 5) == 0.0 || a.at(i, 5) == 1.0));
    CHECK((a.at(i, r) <= 7000.0 || a.at(i, r) == 11111.0));
    CHECK(a.at(i, delta) >= 0.0);
    CHECK(a.at(i, delta) <= 180.0);
    CHECK((a.at(i, 2) == 1.0) == (a.at(i, 1) < a.at(i, 0)));
  }
  CHECK(seen.size() == 3);
}

TEST_CASE("feature hash ignores labels") {
  const auto templates = SceneryTemplate::defaults();
  const auto m = generate_synthetic(templates, 20, 1);
  auto permuted = m.labels();
  std::reverse(permuted.begin(), permuted.end());
  CHECK(feature_hash(m) == feature_hash(m.with_labels(permuted)));
  CHECK(feature_hash(m) != feature_hash(generate_synthetic(templates, 20, 2)));
}
