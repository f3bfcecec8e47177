#include "urfclust/proximity.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "urfclust/hash.hpp"

namespace urfclust {

ProximityMatrix::ProximityMatrix(std::size_t size, int tree_count,
                                 std::vector<std::uint32_t> packed_counts,
                                 std::vector<std::int64_t> row_ids)
    : size_(size), tree_count_(tree_count), counts_(std::move(packed_counts)),
      row_ids_(std::move(row_ids)) {
  if (tree_count_ < 1) throw std::invalid_argument("proximity: tree count must be >= 1");
  if (counts_.size() != size_ * (size_ + 1) / 2)
    throw std::invalid_argument("proximity: packed size mismatch");
  if (row_ids_.empty()) {
    row_ids_.resize(size_);
    for (std::size_t i = 0; i < size_; ++i) row_ids_[i] = static_cast<std::int64_t>(i);
  }
  if (row_ids_.size() != size_) throw std::invalid_argument("proximity: row id count mismatch");
}

double ProximityMatrix::mean_off_diagonal() const {
  if (size_ < 2) return 0.0;
  long double sum = 0.0;
  for (std::size_t i = 0; i < size_; ++i)
    for (std::size_t j = i + 1; j < size_; ++j) sum += count(i, j);
  const long double pairs = static_cast<long double>(size_) * (size_ - 1) / 2;
  return static_cast<double>(sum / pairs / tree_count_);
}

std::vector<std::int32_t> leaf_table(const ClusterForest& forest, const FeatureMatrix& matrix,
                                     const ProximityOptions& options) {
  if (matrix.cols() != forest.dims)
    throw std::invalid_argument("proximity: matrix has " + std::to_string(matrix.cols()) +
                                " columns, forest expects " + std::to_string(forest.dims));
  const std::size_t m = matrix.rows();
  const std::size_t b_count = forest.trees.size();
  std::vector<std::int32_t> table(m * b_count);
  std::vector<std::vector<LeafLabel>> labels;
  if (options.data_leaves_only)
    for (const auto& t : forest.trees) labels.push_back(t.leaf_labels());
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    auto point = matrix.row(static_cast<std::size_t>(i));
    for (std::size_t b = 0; b < b_count; ++b) {
      std::int32_t leaf = forest.trees[b].apply(point);
      if (options.data_leaves_only && labels[b][leaf] != LeafLabel::data) leaf = -1 - static_cast<std::int32_t>(i);
      table[static_cast<std::size_t>(i) * b_count + b] = leaf;
    }
  }
  return table;
}

ProximityMatrix build_proximity(const ClusterForest& forest, const FeatureMatrix& matrix,
                                const ProximityOptions& options) {
  const auto table = leaf_table(forest, matrix, options);
  const std::size_t m = matrix.rows();
  const std::size_t b_count = forest.trees.size();
  std::vector<std::uint32_t> counts(m * (m + 1) / 2);
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(dynamic, 16)
  for (long li = 0; li < rows; ++li) {
    const std::size_t i = static_cast<std::size_t>(li);
    const std::int32_t* a = table.data() + i * b_count;
    std::uint32_t* out = counts.data() + i * (2 * m - i + 1) / 2;
    out[0] = static_cast<std::uint32_t>(b_count);
    for (std::size_t j = i + 1; j < m; ++j) {
      const std::int32_t* b = table.data() + j * b_count;
      std::uint32_t c = 0;
      for (std::size_t t = 0; t < b_count; ++t) c += a[t] == b[t];
      out[j - i] = c;
    }
  }
  ProximityMatrix p(m, static_cast<int>(b_count), std::move(counts), matrix.row_ids());
  p.forest_hash = forest_hash(forest);
  p.dataset_hash = feature_hash(matrix);
  return p;
}

namespace reference {

ProximityMatrix build_proximity_serial(const ClusterForest& forest, const FeatureMatrix& matrix,
                                       const ProximityOptions& options) {
  if (matrix.cols() != forest.dims) throw std::invalid_argument("proximity: dimension mismatch");
  const std::size_t m = matrix.rows();
  std::vector<std::uint32_t> counts(m * (m + 1) / 2, 0);
  ProximityMatrix shape(m, static_cast<int>(forest.trees.size()), std::vector<std::uint32_t>(counts.size()));
  for (const Tree& tree : forest.trees) {
    std::vector<std::vector<std::size_t>> buckets(tree.leaf_count());
    const auto labels = tree.leaf_labels();
    for (std::size_t i = 0; i < m; ++i) buckets[tree.apply(matrix.row(i))].push_back(i);
    for (std::size_t leaf = 0; leaf < buckets.size(); ++leaf) {
      if (options.data_leaves_only && labels[leaf] != LeafLabel::data) continue;
      const auto& members = buckets[leaf];
      for (std::size_t x = 0; x < members.size(); ++x)
        for (std::size_t y = x + 1; y < members.size(); ++y)
          ++counts[shape.packed_index(members[x], members[y])];
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    counts[shape.packed_index(i, i)] = static_cast<std::uint32_t>(forest.trees.size());
  ProximityMatrix p(m, static_cast<int>(forest.trees.size()), std::move(counts), matrix.row_ids());
  p.forest_hash = forest_hash(forest);
  p.dataset_hash = feature_hash(matrix);
  return p;
}

}  // namespace reference

ProximityMatrix subset(const ProximityMatrix& p, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("proximity subset: empty selection");
  std::vector<bool> seen(p.size(), false);
  for (std::size_t i : indices) {
    if (i >= p.size()) throw std::invalid_argument("proximity subset: index out of range");
    if (seen[i]) throw std::invalid_argument("proximity subset: duplicate index");
    seen[i] = true;
  }
  const std::size_t k = indices.size();
  std::vector<std::uint32_t> counts(k * (k + 1) / 2);
  std::vector<std::int64_t> ids(k);
  std::size_t pos = 0;
  for (std::size_t a = 0; a < k; ++a) {
    ids[a] = p.row_ids()[indices[a]];
    for (std::size_t b = a; b < k; ++b) counts[pos++] = p.count(indices[a], indices[b]);
  }
  ProximityMatrix out(k, p.tree_count(), std::move(counts), std::move(ids));
  out.forest_hash = p.forest_hash;
  out.dataset_hash = p.dataset_hash;
  return out;
}

DissimilarityMatrix::DissimilarityMatrix(std::size_t size, std::vector<double> condensed)
    : size_(size), condensed_(std::move(condensed)) {
  if (condensed_.size() != (size_ < 2 ? 0 : size_ * (size_ - 1) / 2))
    throw std::invalid_argument("dissimilarity: condensed size mismatch");
}

DissimilarityMatrix DissimilarityMatrix::from_dense(std::size_t size, std::span<const double> dense) {
  if (dense.size() != size * size) throw std::invalid_argument("dissimilarity: dense size mismatch");
  std::vector<double> c;
  c.reserve(size < 2 ? 0 : size * (size - 1) / 2);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = i + 1; j < size; ++j) c.push_back(dense[i * size + j]);
  return DissimilarityMatrix(size, std::move(c));
}

DissimilarityMatrix to_dissimilarity(const ProximityMatrix& p) {
  const std::size_t m = p.size();
  std::vector<double> c(m < 2 ? 0 : m * (m - 1) / 2);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) c[pos++] = std::sqrt(std::max(0.0, 1.0 - p.at(i, j)));
  return DissimilarityMatrix(m, std::move(c));
}

namespace {

template <class At>
void write_dense_f32(std::size_t m, At at, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<float> row(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) row[j] = static_cast<float>(at(i, j));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(m * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_sidecar(const std::filesystem::path& stem, const std::string& kind, std::size_t m,
                   const ProximityMatrix& source) {
  nlohmann::json j = {{"kind", kind},
                      {"size", m},
                      {"dtype", "float32"},
                      {"layout", "row-major"},
                      {"trees", source.tree_count()},
                      {"forest_hash", source.forest_hash},
                      {"dataset_hash", source.dataset_hash},
                      {"data_sha256", sha256_file(std::filesystem::path(stem).concat(".f32"))}};
  std::ofstream out(std::filesystem::path(stem).concat(".json"));
  out << j.dump(2) << '\n';
}

}  // namespace

void export_proximity(const ProximityMatrix& p, const std::filesystem::path& stem) {
  write_dense_f32(p.size(), [&](std::size_t i, std::size_t j) { return p.at(i, j); },
                  std::filesystem::path(stem).concat(".f32"));
  write_sidecar(stem, "proximity", p.size(), p);
}

void export_dissimilarity(const DissimilarityMatrix& d, const ProximityMatrix& source,
                          const std::filesystem::path& stem) {
  write_dense_f32(d.size(), [&](std::size_t i, std::size_t j) { return d.at(i, j); },
                  std::filesystem::path(stem).concat(".f32"));
  write_sidecar(stem, "dissimilarity", d.size(), source);
}

std::string forest_hash(const ClusterForest& forest) {
  Sha256 h;
  const auto& c = forest.config;
  h.update("urff1");
  std::int64_t header[4] = {c.tree_count, c.m_min, c.subspace_size, static_cast<std::int64_t>(forest.dims)};
  h.update_pod(std::span<const std::int64_t>(header));
  h.update_pod(std::span<const double>(&c.i_min, 1));
  h.update_pod(std::span<const std::uint64_t>(&c.seed, 1));
  for (const auto& t : forest.trees) {
    for (const auto& n : t.nodes()) {
      std::int32_t ints[4] = {n.split_dim, n.left, n.right, n.leaf_id};
      h.update_pod(std::span<const std::int32_t>(ints));
      h.update_pod(std::span<const double>(&n.threshold, 1));
    }
  }
  return h.hex();
}

}  // namespace urfclust
