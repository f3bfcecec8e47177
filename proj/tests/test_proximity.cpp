#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "urfclust/proximity.hpp"

using namespace urfclust;

namespace {

FeatureMatrix blobs(std::size_t per, std::uint64_t seed) {
  FeatureSchema s({{"x", FeatureKind::continuous, ""},
                   {"y", FeatureKind::continuous, ""},
                   {"z", FeatureKind::continuous, ""}});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> v;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per; ++i) {
      v.push_back(g(rng) + 6.0 * c);
      v.push_back(g(rng) - 4.0 * c);
      v.push_back(g(rng));
    }
  return FeatureMatrix(s, v);
}

ClusterForest forest_for(const FeatureMatrix& m, int trees, double i_min, std::uint64_t seed = 1) {
  ForestConfig c;
  c.tree_count = trees;
  c.i_min = i_min;
  c.seed = seed;
  return train_forest(m, c);
}

}  // namespace

TEST_CASE("proximity matches the brute-force oracle and its invariants") {
  const auto m = blobs(17, 4);  // M = 51
  const auto f = forest_for(m, 20, 0.1);
  const auto p = build_proximity(f, m);
  const auto brute = oracle::brute_proximity(f, m);
  REQUIRE(p.size() == m.rows());
  CHECK(p.tree_count() == 20);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.at(i, i) == 1.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
      CHECK(p.at(i, j) == brute[i][j]);
      CHECK(p.at(i, j) == p.at(j, i));
      CHECK(p.at(i, j) >= 0.0);
      CHECK(p.at(i, j) <= 1.0);
      const double scaled = p.at(i, j) * 20;
      CHECK(scaled == std::round(scaled));
    }
  }
  CHECK(p == reference::build_proximity_serial(f, m));
  CHECK(p.row_ids() == m.row_ids());
}

TEST_CASE("dissimilarity transform") {
  const auto m = blobs(10, 2);
  const auto p = build_proximity(forest_for(m, 10, 0.2), m);
  const auto d = to_dissimilarity(p);
  REQUIRE(d.size() == p.size());
  CHECK(d.condensed().size() == p.size() * (p.size() - 1) / 2);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j) {
      CHECK(d.at(i, j) == doctest::Approx(std::sqrt(1.0 - p.at(i, j))).epsilon(1e-15));
      CHECK(d.at(i, j) == d.at(j, i));
    }
  CHECK(d.at(3, 3) == 0.0);

  const std::vector<double> dense = {0, 1, 2, 1, 0, 3, 2, 3, 0};
  const auto small = DissimilarityMatrix::from_dense(3, dense);
  CHECK(small.at(0, 2) == 2.0);
  CHECK(small.at(2, 1) == 3.0);
}

TEST_CASE("mean proximity rises with i_min and pruning is elementwise monotone") {
  const auto m = blobs(30, 8);
  double prev_mean = -1.0;
  ProximityMatrix prev;
  for (double i_min : {0.0, 0.24, 0.29, 0.34, 0.45}) {
    const auto p = build_proximity(forest_for(m, 40, i_min, 3), m);
    if (prev.size()) {
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i; j < p.size(); ++j) CHECK(p.count(i, j) >= prev.count(i, j));
      CHECK(p.mean_off_diagonal() >= prev_mean);
    }
    prev_mean = p.mean_off_diagonal();
    prev = p;
  }
  // the root is a leaf at i_min = 0.5
  const auto all = build_proximity(forest_for(m, 5, 0.5), m);
  CHECK(all.mean_off_diagonal() == 1.0);
}

TEST_CASE("blob structure shows up in proximity") {
  const auto m = blobs(40, 11);
  const auto p = build_proximity(forest_for(m, 100, 0.0), m);
  double within = 0, across = 0;
  int nw = 0, na = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      if (i / 40 == j / 40) within += p.at(i, j), ++nw;
      else across += p.at(i, j), ++na;
    }
  CHECK(within / nw > 5 * (across / na));
}

TEST_CASE("data-leaves-only proximity") {
  const auto m = blobs(15, 5);
  const auto f = forest_for(m, 30, 0.2);
  ProximityOptions opt;
  opt.data_leaves_only = true;
  const auto p = build_proximity(f, m, opt);
  const auto full = build_proximity(f, m);
  CHECK(p == reference::build_proximity_serial(f, m, opt));
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.at(i, i) == 1.0);
    for (std::size_t j = i + 1; j < p.size(); ++j) CHECK(p.count(i, j) <= full.count(i, j));
  }
  // direct count: same data leaf in each tree
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < p.size(); j += 7) {
      std::uint32_t n = 0;
      for (const auto& t : f.trees) {
        const auto a = t.apply_node(m.row(i)), b = t.apply_node(m.row(j));
        n += a == b && t.node(a).label == LeafLabel::data;
      }
      CHECK(p.count(i, j) == n);
    }
}

TEST_CASE("subset is the principal submatrix") {
  const auto m = blobs(10, 6);
  const auto p = build_proximity(forest_for(m, 12, 0.1), m);
  const std::vector<std::size_t> idx = {4, 9, 20, 21, 29};
  const auto s = subset(p, idx);
  REQUIRE(s.size() == idx.size());
  CHECK(s.tree_count() == p.tree_count());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    CHECK(s.row_ids()[a] == p.row_ids()[idx[a]]);
    for (std::size_t b = 0; b < idx.size(); ++b) CHECK(s.at(a, b) == p.at(idx[a], idx[b]));
  }
}

TEST_CASE("export writes a full float32 matrix") {
  const auto m = blobs(5, 1);
  const auto f = forest_for(m, 4, 0.1);
  auto p = build_proximity(f, m);
  const auto dir = std::filesystem::temp_directory_path() / "urfclust_prox_export";
  std::filesystem::create_directories(dir);
  export_proximity(p, dir / "proximity");
  std::ifstream in(dir / "proximity.f32", std::ios::binary);
  std::vector<float> buf(p.size() * p.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  REQUIRE(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j) CHECK(buf[i * p.size() + j] == static_cast<float>(p.at(i, j)));
  CHECK(std::filesystem::exists(dir / "proximity.json"));
  std::filesystem::remove_all(dir);
  CHECK(forest_hash(f) == forest_hash(f));
  CHECK(forest_hash(f) != forest_hash(forest_for(m, 4, 0.1, 2)));
}
