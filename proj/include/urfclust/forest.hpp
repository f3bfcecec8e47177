#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "urfclust/dataset.hpp"

namespace urfclust {

/// Forest hyper-parameters. A node is split only while it holds at least
/// m_min real points and its impurity is above i_min; failing either turns it
/// into a leaf.
struct ForestConfig {
  int tree_count = 200;
  double i_min = 0.29;
  int m_min = 2;
  std::uint64_t seed = 1;
  int subspace_size = 0;  // 0 selects floor(sqrt(Q)), at least 1

  void validate() const;
  std::size_t resolved_subspace(std::size_t q) const;
};

struct Interval {
  double min = 0.0;
  double max = 0.0;
  double width() const { return max - min; }
};

enum class LeafLabel : std::uint8_t { none = 0, data = 1, noise = 2 };

/// Real points reaching a node: row indices into a row-major value table.
struct NodePoints {
  std::span<const double> values;
  std::size_t dims = 0;
  std::span<const std::uint32_t> rows;

  double value(std::size_t k, std::size_t d) const { return values[rows[k] * dims + d]; }
  std::size_t size() const { return rows.size(); }
};

std::vector<Interval> compute_box(const NodePoints& points);

// --- virtual noise ---------------------------------------------------------

/// Uniform virtual-noise density along one dimension of a node box holding
/// real_count points. nullopt signals a zero-width dimension that the split
/// search must skip.
std::optional<double> noise_density(Interval box, double real_count);

/// Virtual noise counts on either side of threshold; they always sum to
/// real_count. Throws std::invalid_argument when threshold is outside the box.
std::pair<double, double> virtual_child_counts(Interval box, double threshold, double real_count);

double gini_impurity(double real, double noise);

struct SplitCandidate {
  std::size_t dim = 0;
  double threshold = 0.0;
  double relative_gain = 0.0;
};

/// Best threshold over the sampled dimensions. Candidates are midpoints
/// between consecutive distinct values; children are scored with their real
/// counts against the virtual counts of the balanced parent. Ties keep the
/// lowest dimension, then the smallest threshold.
std::optional<SplitCandidate> best_split(const NodePoints& points, std::span<const Interval> box,
                                         std::span<const std::size_t> sampled_dims);

/// Sorted random subset of size q_tilde out of q, drawn from the node's stream.
std::vector<std::size_t> sample_subspace(std::uint64_t node_seed, std::size_t q, std::size_t q_tilde);

// --- trees -----------------------------------------------------------------

struct TreeNode {
  std::int32_t split_dim = -1;  // -1 for leaves
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf_id = -1;
  LeafLabel label = LeafLabel::none;
  std::int32_t real_count = 0;
  double virtual_count = 0.0;  // inherited from the parent split, = real_count at the root
  double impurity = 0.0;       // gini(real_count, virtual_count)
  std::uint64_t stream_seed = 0;

  bool is_leaf() const { return split_dim < 0; }
};

class Tree {
 public:
  Tree() = default;
  Tree(std::size_t dims, std::vector<TreeNode> nodes, std::vector<Interval> boxes);

  std::size_t dims() const { return dims_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const { return leaf_count_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }
  std::span<const Interval> box(std::size_t node) const {
    return {boxes_.data() + node * dims_, dims_};
  }
  const std::vector<Interval>& boxes() const { return boxes_; }

  /// Routes a point to its leaf (left iff value <= threshold) and returns the
  /// leaf id.
  std::int32_t apply(std::span<const double> point) const;
  std::int32_t apply_node(std::span<const double> point) const;
  /// Leaf labels indexed by leaf id.
  std::vector<LeafLabel> leaf_labels() const;

  bool operator==(const Tree& other) const;

 private:
  std::size_t dims_ = 0;
  std::size_t leaf_count_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<Interval> boxes_;
};

bool operator==(const TreeNode& a, const TreeNode& b);

/// Grows one tree on the given (bagged) points. Node streams derive from
/// tree_seed and the node's path, so trees grown with different pruning
/// thresholds agree wherever both split.
Tree grow_tree(const NodePoints& bag, const ForestConfig& config, std::uint64_t tree_seed);

std::uint64_t tree_seed(const ForestConfig& config, std::size_t tree_index);

struct ClusterForest {
  ForestConfig config;
  std::size_t dims = 0;
  std::vector<Tree> trees;
  std::vector<std::vector<std::uint32_t>> bags;  // bootstrap row indices per tree

  bool operator==(const ClusterForest& other) const;
};

/// Bootstrap sample of m draws with replacement from the tree's stream.
std::vector<std::uint32_t> bootstrap_rows(std::uint64_t tree_seed, std::size_t m);

/// Trains all trees; trees are grown in parallel.
ClusterForest train_forest(const FeatureMatrix& matrix, const ForestConfig& config);

void save_forest(const ClusterForest& forest, const std::filesystem::path& path);
ClusterForest load_forest(const std::filesystem::path& path);

namespace reference {
/// Single-threaded tree loop; bit-identical to train_forest.
ClusterForest train_forest_serial(const FeatureMatrix& matrix, const ForestConfig& config);
}  // namespace reference

}  // namespace urfclust
