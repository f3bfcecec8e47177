#include "urfclust/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "urfclust/hash.hpp"

namespace urfclust {

void ForestConfig::validate() const {
  if (tree_count < 1) throw std::invalid_argument("forest: tree count B must be >= 1");
  if (!(i_min >= 0.0 && i_min <= 0.5)) throw std::invalid_argument("forest: i_min must lie in [0, 0.5]");
  if (m_min < 2) throw std::invalid_argument("forest: M_min must be >= 2");
  if (subspace_size < 0) throw std::invalid_argument("forest: subspace size must be >= 0");
}

std::size_t ForestConfig::resolved_subspace(std::size_t q) const {
  if (q == 0) return 0;
  std::size_t k = subspace_size > 0 ? static_cast<std::size_t>(subspace_size)
                                    : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(q))));
  return std::clamp<std::size_t>(k, 1, q);
}

std::vector<Interval> compute_box(const NodePoints& points) {
  std::vector<Interval> box(points.dims);
  if (points.size() == 0) return box;
  for (std::size_t d = 0; d < points.dims; ++d) box[d] = {points.value(0, d), points.value(0, d)};
  for (std::size_t k = 1; k < points.size(); ++k) {
    for (std::size_t d = 0; d < points.dims; ++d) {
      double v = points.value(k, d);
      box[d].min = std::min(box[d].min, v);
      box[d].max = std::max(box[d].max, v);
    }
  }
  return box;
}

std::optional<double> noise_density(Interval box, double real_count) {
  if (!(box.width() > 0.0)) return std::nullopt;
  return real_count / box.width();
}

std::pair<double, double> virtual_child_counts(Interval box, double threshold, double real_count) {
  if (threshold < box.min || threshold > box.max)
    throw std::invalid_argument("virtual_child_counts: threshold outside node box");
  auto density = noise_density(box, real_count);
  if (!density) return {0.0, real_count};
  double left = *density * (threshold - box.min);
  left = std::clamp(left, 0.0, real_count);
  return {left, real_count - left};
}

double gini_impurity(double real, double noise) {
  double total = real + noise;
  if (!(total > 0.0)) return 0.0;
  double pr = real / total;
  double pn = noise / total;
  return 1.0 - pr * pr - pn * pn;
}

std::optional<SplitCandidate> best_split(const NodePoints& points, std::span<const Interval> box,
                                         std::span<const std::size_t> sampled_dims) {
  const std::size_t n = points.size();
  if (n < 2) return std::nullopt;
  const double real_total = static_cast<double>(n);
  const double parent_impurity = gini_impurity(real_total, real_total);
  if (!(parent_impurity > 0.0)) return std::nullopt;

  std::vector<std::size_t> dims(sampled_dims.begin(), sampled_dims.end());
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());

  std::optional<SplitCandidate> best;
  std::vector<double> sorted(n);
  for (std::size_t d : dims) {
    const Interval iv = box[d];
    if (!noise_density(iv, real_total)) continue;
    for (std::size_t k = 0; k < n; ++k) sorted[k] = points.value(k, d);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (!(sorted[k] < sorted[k + 1])) continue;
      const double tau = 0.5 * (sorted[k] + sorted[k + 1]);
      const double real_left = static_cast<double>(k + 1);
      const double real_right = real_total - real_left;
      auto [noise_left, noise_right] = virtual_child_counts(iv, tau, real_total);
      const double total_left = real_left + noise_left;
      const double total_right = real_right + noise_right;
      const double weighted = (total_left * gini_impurity(real_left, noise_left) +
                               total_right * gini_impurity(real_right, noise_right)) /
                              (2.0 * real_total);
      const double gain = (parent_impurity - weighted) / parent_impurity;
      if (!(gain > 0.0)) continue;
      if (!best || gain > best->relative_gain) best = SplitCandidate{d, tau, gain};
    }
  }
  return best;
}

std::vector<std::size_t> sample_subspace(std::uint64_t node_seed, std::size_t q, std::size_t q_tilde) {
  q_tilde = std::min(q_tilde, q);
  std::vector<std::size_t> all(q);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(node_seed);
  for (std::size_t i = 0; i < q_tilde; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, q - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(q_tilde);
  std::sort(all.begin(), all.end());
  return all;
}

// --- Tree ------------------------------------------------------------------

bool operator==(const TreeNode& a, const TreeNode& b) {
  return a.split_dim == b.split_dim && a.threshold == b.threshold && a.left == b.left &&
         a.right == b.right && a.leaf_id == b.leaf_id && a.label == b.label &&
         a.real_count == b.real_count && a.virtual_count == b.virtual_count &&
         a.impurity == b.impurity && a.stream_seed == b.stream_seed;
}

Tree::Tree(std::size_t dims, std::vector<TreeNode> nodes, std::vector<Interval> boxes)
    : dims_(dims), nodes_(std::move(nodes)), boxes_(std::move(boxes)) {
  if (boxes_.size() != nodes_.size() * dims_) throw std::invalid_argument("tree: box table size mismatch");
  for (const auto& n : nodes_)
    if (n.is_leaf()) ++leaf_count_;
}

std::int32_t Tree::apply_node(std::span<const double> point) const {
  std::int32_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = point[static_cast<std::size_t>(n.split_dim)] <= n.threshold ? n.left : n.right;
  }
  return i;
}

std::int32_t Tree::apply(std::span<const double> point) const {
  if (point.size() != dims_) throw std::invalid_argument("tree: point dimension mismatch");
  return nodes_[apply_node(point)].leaf_id;
}

std::vector<LeafLabel> Tree::leaf_labels() const {
  std::vector<LeafLabel> out(leaf_count_);
  for (const auto& n : nodes_)
    if (n.is_leaf()) out[n.leaf_id] = n.label;
  return out;
}

bool Tree::operator==(const Tree& other) const {
  return dims_ == other.dims_ && nodes_ == other.nodes_ &&
         std::equal(boxes_.begin(), boxes_.end(), other.boxes_.begin(), other.boxes_.end(),
                    [](const Interval& a, const Interval& b) { return a.min == b.min && a.max == b.max; });
}

namespace {

constexpr std::uint64_t kRootSalt = 0x726f6f74;
constexpr std::uint64_t kBagSalt = 0x62616767;

struct PendingNode {
  std::int32_t node;
  std::size_t begin;
  std::size_t end;
};

}  // namespace

Tree grow_tree(const NodePoints& bag, const ForestConfig& config, std::uint64_t seed) {
  config.validate();
  if (bag.size() < 2) throw std::invalid_argument("grow_tree: at least 2 points are required");
  const std::size_t q = bag.dims;
  const std::size_t q_tilde = config.resolved_subspace(q);

  std::vector<std::uint32_t> work(bag.rows.begin(), bag.rows.end());
  std::vector<TreeNode> nodes;
  std::vector<Interval> boxes;

  const double n = static_cast<double>(work.size());
  TreeNode root;
  root.real_count = static_cast<std::int32_t>(work.size());
  root.virtual_count = n;
  root.impurity = gini_impurity(n, n);
  root.stream_seed = derive_seed(seed, kRootSalt);
  nodes.push_back(root);
  boxes.resize(q);

  std::int32_t leaf_count = 0;
  std::vector<PendingNode> stack{{0, 0, work.size()}};
  while (!stack.empty()) {
    PendingNode p = stack.back();
    stack.pop_back();
    NodePoints pts{bag.values, q, std::span<const std::uint32_t>(work).subspan(p.begin, p.end - p.begin)};
    auto box = compute_box(pts);
    std::copy(box.begin(), box.end(), boxes.begin() + static_cast<std::ptrdiff_t>(p.node * q));

    TreeNode node = nodes[p.node];
    std::optional<SplitCandidate> split;
    if (node.real_count >= config.m_min && node.impurity > config.i_min) {
      auto dims = sample_subspace(node.stream_seed, q, q_tilde);
      split = best_split(pts, box, dims);
    }
    if (!split) {
      node.label = node.real_count >= node.virtual_count ? LeafLabel::data : LeafLabel::noise;
      node.leaf_id = leaf_count++;
      nodes[p.node] = node;
      continue;
    }

    const std::size_t d = split->dim;
    auto mid_it = std::partition(work.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                 work.begin() + static_cast<std::ptrdiff_t>(p.end),
                                 [&](std::uint32_t r) { return bag.values[r * q + d] <= split->threshold; });
    const std::size_t mid = static_cast<std::size_t>(mid_it - work.begin());
    auto [noise_left, noise_right] =
        virtual_child_counts(box[d], split->threshold, static_cast<double>(node.real_count));

    auto make_child = [&](std::size_t count, double noise, std::uint64_t salt) {
      TreeNode child;
      child.real_count = static_cast<std::int32_t>(count);
      child.virtual_count = noise;
      child.impurity = gini_impurity(static_cast<double>(count), noise);
      child.stream_seed = derive_seed(node.stream_seed, salt);
      return child;
    };
    node.split_dim = static_cast<std::int32_t>(d);
    node.threshold = split->threshold;
    node.left = static_cast<std::int32_t>(nodes.size());
    node.right = node.left + 1;
    nodes[p.node] = node;
    nodes.push_back(make_child(mid - p.begin, noise_left, 1));
    nodes.push_back(make_child(p.end - mid, noise_right, 2));
    boxes.resize(nodes.size() * q);
    stack.push_back({node.right, mid, p.end});
    stack.push_back({node.left, p.begin, mid});
  }
  return Tree(q, std::move(nodes), std::move(boxes));
}

std::uint64_t tree_seed(const ForestConfig& config, std::size_t tree_index) {
  return derive_seed(config.seed, tree_index);
}

std::vector<std::uint32_t> bootstrap_rows(std::uint64_t seed, std::size_t m) {
  std::mt19937_64 rng(derive_seed(seed, kBagSalt));
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(m - 1));
  std::vector<std::uint32_t> rows(m);
  for (auto& r : rows) r = pick(rng);
  return rows;
}

bool ClusterForest::operator==(const ClusterForest& other) const {
  return config.tree_count == other.config.tree_count && config.i_min == other.config.i_min &&
         config.m_min == other.config.m_min && config.seed == other.config.seed &&
         config.subspace_size == other.config.subspace_size && dims == other.dims &&
         trees == other.trees && bags == other.bags;
}

namespace {

void check_trainable(const FeatureMatrix& matrix, const ForestConfig& config) {
  config.validate();
  if (matrix.rows() < 2) throw std::invalid_argument("train_forest: at least 2 rows are required");
  if (matrix.rows() > 0xffffffffULL) throw std::invalid_argument("train_forest: too many rows");
}

void train_one(const FeatureMatrix& matrix, const ForestConfig& config, std::size_t b,
               ClusterForest& forest) {
  const std::uint64_t seed = tree_seed(config, b);
  forest.bags[b] = bootstrap_rows(seed, matrix.rows());
  NodePoints bag{matrix.values(), matrix.cols(), forest.bags[b]};
  forest.trees[b] = grow_tree(bag, config, seed);
}

ClusterForest empty_forest(const FeatureMatrix& matrix, const ForestConfig& config) {
  ClusterForest forest;
  forest.config = config;
  forest.dims = matrix.cols();
  forest.trees.resize(static_cast<std::size_t>(config.tree_count));
  forest.bags.resize(static_cast<std::size_t>(config.tree_count));
  return forest;
}

}  // namespace

ClusterForest train_forest(const FeatureMatrix& matrix, const ForestConfig& config) {
  check_trainable(matrix, config);
  ClusterForest forest = empty_forest(matrix, config);
  const long count = config.tree_count;
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (long b = 0; b < count; ++b) {
    try {
      train_one(matrix, config, static_cast<std::size_t>(b), forest);
    } catch (...) {
#pragma omp critical(urf_train_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

namespace reference {

ClusterForest train_forest_serial(const FeatureMatrix& matrix, const ForestConfig& config) {
  check_trainable(matrix, config);
  ClusterForest forest = empty_forest(matrix, config);
  for (std::size_t b = 0; b < forest.trees.size(); ++b) train_one(matrix, config, b, forest);
  return forest;
}

}  // namespace reference

// --- serialization ---------------------------------------------------------
//
// Little-endian binary, "URFF" magic + version. Layout:
//   header: magic[4] u32 version u64 dims
//           i32 B f64 i_min i32 m_min u64 seed i32 subspace
//   per tree: u64 node_count, nodes (fixed 53-byte records), boxes (2 f64 per
//             node and dim), u64 bag size, u32 bag rows

namespace {

constexpr char kMagic[4] = {'U', 'R', 'F', 'F'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw std::runtime_error("forest file truncated");
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_forest(const ClusterForest& forest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 4);
  Writer w(out);
  w.put(kVersion);
  w.put<std::uint64_t>(forest.dims);
  w.put<std::int32_t>(forest.config.tree_count);
  w.put(forest.config.i_min);
  w.put<std::int32_t>(forest.config.m_min);
  w.put(forest.config.seed);
  w.put<std::int32_t>(forest.config.subspace_size);
  for (std::size_t b = 0; b < forest.trees.size(); ++b) {
    const Tree& t = forest.trees[b];
    w.put<std::uint64_t>(t.node_count());
    for (const TreeNode& n : t.nodes()) {
      w.put(n.split_dim);
      w.put(n.threshold);
      w.put(n.left);
      w.put(n.right);
      w.put(n.leaf_id);
      w.put(static_cast<std::uint8_t>(n.label));
      w.put(n.real_count);
      w.put(n.virtual_count);
      w.put(n.impurity);
      w.put(n.stream_seed);
    }
    for (const Interval& iv : t.boxes()) {
      w.put(iv.min);
      w.put(iv.max);
    }
    const auto& bag = forest.bags[b];
    w.put<std::uint64_t>(bag.size());
    out.write(reinterpret_cast<const char*>(bag.data()),
              static_cast<std::streamsize>(bag.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ClusterForest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a forest file");
  Reader r(in);
  if (r.get<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported forest file version");
  ClusterForest forest;
  forest.dims = r.get<std::uint64_t>();
  forest.config.tree_count = r.get<std::int32_t>();
  forest.config.i_min = r.get<double>();
  forest.config.m_min = r.get<std::int32_t>();
  forest.config.seed = r.get<std::uint64_t>();
  forest.config.subspace_size = r.get<std::int32_t>();
  forest.config.validate();
  for (int b = 0; b < forest.config.tree_count; ++b) {
    const auto node_count = r.get<std::uint64_t>();
    std::vector<TreeNode> nodes(node_count);
    for (auto& n : nodes) {
      n.split_dim = r.get<std::int32_t>();
      n.threshold = r.get<double>();
      n.left = r.get<std::int32_t>();
      n.right = r.get<std::int32_t>();
      n.leaf_id = r.get<std::int32_t>();
      n.label = static_cast<LeafLabel>(r.get<std::uint8_t>());
      n.real_count = r.get<std::int32_t>();
      n.virtual_count = r.get<double>();
      n.impurity = r.get<double>();
      n.stream_seed = r.get<std::uint64_t>();
    }
    std::vector<Interval> boxes(node_count * forest.dims);
    for (auto& iv : boxes) {
      iv.min = r.get<double>();
      iv.max = r.get<double>();
    }
    forest.trees.emplace_back(forest.dims, std::move(nodes), std::move(boxes));
    std::vector<std::uint32_t> bag(r.get<std::uint64_t>());
    in.read(reinterpret_cast<char*>(bag.data()),
            static_cast<std::streamsize>(bag.size() * sizeof(std::uint32_t)));
    if (!in) throw std::runtime_error("forest file truncated");
    forest.bags.push_back(std::move(bag));
  }
  return forest;
}

}  // namespace urfclust
