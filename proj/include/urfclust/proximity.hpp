#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "urfclust/dataset.hpp"
#include "urfclust/forest.hpp"

namespace urfclust {

/// Symmetric M x M co-leaf frequency matrix. Stores raw co-leaf counts in the
/// packed upper triangle (diagonal included); P_ij = count / B.
class ProximityMatrix {
 public:
  ProximityMatrix() = default;
  ProximityMatrix(std::size_t size, int tree_count, std::vector<std::uint32_t> packed_counts,
                  std::vector<std::int64_t> row_ids = {});

  std::size_t size() const { return size_; }
  int tree_count() const { return tree_count_; }
  std::uint32_t count(std::size_t i, std::size_t j) const { return counts_[packed_index(i, j)]; }
  double at(std::size_t i, std::size_t j) const {
    return static_cast<double>(count(i, j)) / static_cast<double>(tree_count_);
  }
  const std::vector<std::uint32_t>& packed_counts() const { return counts_; }
  const std::vector<std::int64_t>& row_ids() const { return row_ids_; }

  std::string forest_hash;
  std::string dataset_hash;

  std::size_t packed_index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * (2 * size_ - i + 1) / 2 + (j - i);
  }

  /// Mean of the off-diagonal entries.
  double mean_off_diagonal() const;

  bool operator==(const ProximityMatrix& other) const {
    return size_ == other.size_ && tree_count_ == other.tree_count_ && counts_ == other.counts_;
  }

 private:
  std::size_t size_ = 0;
  int tree_count_ = 1;
  std::vector<std::uint32_t> counts_;
  std::vector<std::int64_t> row_ids_;
};

struct ProximityOptions {
  /// Count co-membership only in leaves labelled as data (class A).
  bool data_leaves_only = false;
};

/// Leaf id of every row in every tree, row-major M x B. Rows that land in a
/// noise-labelled leaf get a per-row unique negative id when data_leaves_only
/// is set so they never pair with anyone.
std::vector<std::int32_t> leaf_table(const ClusterForest& forest, const FeatureMatrix& matrix,
                                     const ProximityOptions& options = {});

/// Routes every row through every tree and counts co-terminal pairs.
ProximityMatrix build_proximity(const ClusterForest& forest, const FeatureMatrix& matrix,
                                const ProximityOptions& options = {});

/// Principal submatrix over the given indices; row ids follow the rows.
ProximityMatrix subset(const ProximityMatrix& p, std::span<const std::size_t> indices);

/// Strictly-upper condensed D_ij = sqrt(1 - P_ij); D_ii = 0.
class DissimilarityMatrix {
 public:
  DissimilarityMatrix() = default;
  DissimilarityMatrix(std::size_t size, std::vector<double> condensed);

  std::size_t size() const { return size_; }
  double at(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return condensed_[condensed_index(i, j)];
  }
  const std::vector<double>& condensed() const { return condensed_; }
  std::size_t condensed_index(std::size_t i, std::size_t j) const {
    return i * (2 * size_ - i - 1) / 2 + (j - i - 1);
  }

  /// Dense symmetric matrix from a full row-major table.
  static DissimilarityMatrix from_dense(std::size_t size, std::span<const double> dense);

 private:
  std::size_t size_ = 0;
  std::vector<double> condensed_;
};

DissimilarityMatrix to_dissimilarity(const ProximityMatrix& p);

/// Writes <stem>.f32 (row-major float32, full M x M) and <stem>.json (size,
/// hashes, kind).
void export_proximity(const ProximityMatrix& p, const std::filesystem::path& stem);
void export_dissimilarity(const DissimilarityMatrix& d, const ProximityMatrix& source,
                          const std::filesystem::path& stem);

/// SHA-256 of the forest config and tree structure.
std::string forest_hash(const ClusterForest& forest);

namespace reference {
/// Per-tree leaf buckets, incrementing every pair inside a bucket.
ProximityMatrix build_proximity_serial(const ClusterForest& forest, const FeatureMatrix& matrix,
                                       const ProximityOptions& options = {});
}  // namespace reference

}  // namespace urfclust
