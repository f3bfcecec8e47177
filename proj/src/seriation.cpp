#include "urfclust/seriation.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace urfclust {

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::average: return "average";
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
  }
  return "average";
}

std::optional<Linkage> parse_linkage(std::string_view name) {
  if (name == "average") return Linkage::average;
  if (name == "single") return Linkage::single;
  if (name == "complete") return Linkage::complete;
  return std::nullopt;
}

// --- linkage ---------------------------------------------------------------

namespace {

struct RawMerge {
  std::size_t a;
  std::size_t b;
  double height;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), id_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
    std::iota(id_.begin(), id_.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  /// Cluster id currently attached to x's set.
  std::size_t id(std::size_t x) { return id_[find(x)]; }
  void unite(std::size_t a, std::size_t b, std::size_t new_id) {
    a = find(a);
    b = find(b);
    parent_[a] = b;
    id_[b] = new_id;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> id_;
};

}  // namespace

Dendrogram linkage(const DissimilarityMatrix& d, Linkage method) {
  const std::size_t n = d.size();
  if (n < 2) throw std::invalid_argument("linkage: at least 2 points are required");

  std::vector<double> dist = d.condensed();
  auto idx = [n](std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
  };
  std::vector<std::size_t> size(n, 1);
  std::vector<char> active(n, 1);
  std::vector<std::size_t> chain;
  chain.reserve(n);
  std::vector<RawMerge> raw;
  raw.reserve(n - 1);

  std::size_t first_active = 0;
  while (raw.size() < n - 1) {
    if (chain.empty()) {
      while (!active[first_active]) ++first_active;
      chain.push_back(first_active);
    }
    std::size_t x, y;
    double best;
    while (true) {
      x = chain.back();
      const bool has_prev = chain.size() >= 2;
      std::size_t candidate = has_prev ? chain[chain.size() - 2] : n;
      best = has_prev ? dist[idx(x, candidate)] : std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i] || i == x) continue;
        const double v = dist[idx(x, i)];
        if (v < best || (candidate == n && v == best)) {
          best = v;
          candidate = i;
        }
      }
      y = candidate;
      if (has_prev && y == chain[chain.size() - 2]) break;
      chain.push_back(y);
    }
    chain.pop_back();
    chain.pop_back();

    const std::size_t keep = std::min(x, y);
    const std::size_t drop = std::max(x, y);
    raw.push_back({x, y, best});
    const double nx = static_cast<double>(size[x]);
    const double ny = static_cast<double>(size[y]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == x || k == y) continue;
      const double dx = dist[idx(k, x)];
      const double dy = dist[idx(k, y)];
      double merged;
      switch (method) {
        case Linkage::single: merged = std::min(dx, dy); break;
        case Linkage::complete: merged = std::max(dx, dy); break;
        default: merged = (nx * dx + ny * dy) / (nx + ny); break;
      }
      dist[idx(k, keep)] = merged;
    }
    size[keep] = size[x] + size[y];
    active[drop] = 0;
  }

  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawMerge& a, const RawMerge& b) { return a.height < b.height; });

  Dendrogram out;
  out.leaves = n;
  out.method = method;
  out.row_ids.resize(n);
  std::iota(out.row_ids.begin(), out.row_ids.end(), 0);
  UnionFind uf(n);
  std::vector<std::size_t> cluster_size(2 * n - 1, 1);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    std::size_t ia = uf.id(raw[k].a);
    std::size_t ib = uf.id(raw[k].b);
    if (ia > ib) std::swap(ia, ib);
    const std::size_t new_id = n + k;
    cluster_size[new_id] = cluster_size[ia] + cluster_size[ib];
    out.merges.push_back({ia, ib, raw[k].height, cluster_size[new_id]});
    uf.unite(raw[k].a, raw[k].b, new_id);
  }
  return out;
}

// --- orders ----------------------------------------------------------------

LeafOrder hc_order(const Dendrogram& dg) {
  LeafOrder out;
  out.stage = OrderStage::hc;
  const std::size_t n = dg.leaves;
  if (n == 0) return out;
  if (dg.merges.size() + 1 != n) throw std::invalid_argument("hc_order: malformed dendrogram");
  out.permutation.reserve(n);
  std::vector<std::size_t> stack{n == 1 ? 0 : 2 * n - 2};
  while (!stack.empty()) {
    std::size_t v = stack.back();
    stack.pop_back();
    if (v < n) {
      out.permutation.push_back(v);
      continue;
    }
    const Merge& m = dg.merges[v - n];
    stack.push_back(m.right);
    stack.push_back(m.left);
  }
  return out;
}

double order_cost(std::span<const std::size_t> order, const DissimilarityMatrix& d) {
  double cost = 0.0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) cost += d.at(order[k], order[k + 1]);
  return cost;
}

bool is_permutation_of_iota(std::span<const std::size_t> order, std::size_t size) {
  if (order.size() != size) return false;
  std::vector<char> seen(size, 0);
  for (std::size_t v : order) {
    if (v >= size || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

namespace {

/// Contiguous span of each cluster's leaves inside the HC leaf sequence.
struct Spans {
  std::vector<std::size_t> begin;
  std::vector<std::size_t> end;
};

Spans cluster_spans(const Dendrogram& dg, std::span<const std::size_t> hc) {
  const std::size_t n = dg.leaves;
  Spans s{std::vector<std::size_t>(2 * n - 1), std::vector<std::size_t>(2 * n - 1)};
  for (std::size_t p = 0; p < n; ++p) {
    s.begin[hc[p]] = p;
    s.end[hc[p]] = p + 1;
  }
  for (std::size_t k = 0; k < dg.merges.size(); ++k) {
    const Merge& m = dg.merges[k];
    s.begin[n + k] = std::min(s.begin[m.left], s.begin[m.right]);
    s.end[n + k] = std::max(s.end[m.left], s.end[m.right]);
  }
  return s;
}

}  // namespace

LeafOrder olo_order(const Dendrogram& dg, const DissimilarityMatrix& d) {
  const std::size_t n = dg.leaves;
  if (d.size() != n) throw std::invalid_argument("olo_order: matrix size mismatch");
  LeafOrder hc = hc_order(dg);
  if (n <= 2) {
    hc.stage = OrderStage::olo;
    return hc;
  }
  const std::vector<std::size_t>& seq = hc.permutation;
  const Spans spans = cluster_spans(dg, seq);
  // Everything below works in HC positions; cluster c covers positions
  // [spans.begin[c], spans.end[c]).
  auto child_at = [&](std::size_t v, std::size_t p) {
    const Merge& m = dg.merges[v - n];
    return (p >= spans.begin[m.left] && p < spans.end[m.left]) ? m.left : m.right;
  };
  auto sibling_of = [&](std::size_t v, std::size_t child) {
    const Merge& m = dg.merges[v - n];
    return child == m.left ? m.right : m.left;
  };
  // Positions that may sit on the inner boundary of cluster c when position
  // `outer` is its outermost leaf.
  auto inner_range = [&](std::size_t c, std::size_t outer) -> std::pair<std::size_t, std::size_t> {
    if (c < n) return {outer, outer + 1};
    const std::size_t other = sibling_of(c, child_at(c, outer));
    return {spans.begin[other], spans.end[other]};
  };

  // Dense copy in position order keeps the inner loops contiguous.
  std::vector<double> dpos(n * n, 0.0);
  const long all = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long p = 0; p < all; ++p)
    for (std::size_t q = 0; q < n; ++q) dpos[static_cast<std::size_t>(p) * n + q] = d.at(seq[p], seq[q]);

  // best[p][q]: minimal cost of ordering LCA(p, q) with p first and q last.
  std::vector<double> best(n * n, std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < n; ++p) best[p * n + p] = 0.0;

  std::vector<double> partial;
  for (std::size_t k = 0; k < dg.merges.size(); ++k) {
    const Merge& m = dg.merges[k];
    const std::size_t lb = spans.begin[m.left], le = spans.end[m.left];
    const std::size_t rb = spans.begin[m.right], re = spans.end[m.right];
    const std::size_t nl = le - lb, nr = re - rb;
    partial.assign(nl * nr, std::numeric_limits<double>::infinity());

    const long rows = static_cast<long>(nl);
#pragma omp parallel for schedule(dynamic, 4)
    for (long li = 0; li < rows; ++li) {
      const std::size_t p = lb + static_cast<std::size_t>(li);
      auto [kb, ke] = inner_range(m.left, p);
      double* row = partial.data() + static_cast<std::size_t>(li) * nr;
      for (std::size_t kp = kb; kp < ke; ++kp) {
        const double base = best[p * n + kp];
        const double* drow = dpos.data() + kp * n + rb;
        for (std::size_t b = 0; b < nr; ++b) row[b] = std::min(row[b], base + drow[b]);
      }
      for (std::size_t b = 0; b < nr; ++b) {
        const std::size_t q = rb + b;
        auto [mb, me] = inner_range(m.right, q);
        const double* bq = best.data() + q * n;
        double v_best = std::numeric_limits<double>::infinity();
        for (std::size_t mp = mb; mp < me; ++mp) v_best = std::min(v_best, row[mp - rb] + bq[mp]);
        best[p * n + q] = v_best;
        best[q * n + p] = v_best;
      }
    }
  }

  const std::size_t root = 2 * n - 2;
  const Merge& top = dg.merges.back();
  std::size_t bi = 0, bj = 0;
  double bcost = std::numeric_limits<double>::infinity();
  for (std::size_t p = spans.begin[top.left]; p < spans.end[top.left]; ++p)
    for (std::size_t q = spans.begin[top.right]; q < spans.end[top.right]; ++q) {
      const double v = best[p * n + q];
      if (v < bcost) {
        bcost = v;
        bi = p;
        bj = q;
      }
    }

  struct Frame {
    std::size_t node, first, last;  // positions
  };
  LeafOrder out;
  out.stage = OrderStage::olo;
  out.permutation.reserve(n);
  std::vector<Frame> stack{{root, bi, bj}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.node < n) {
      out.permutation.push_back(seq[f.first]);
      continue;
    }
    const std::size_t a = child_at(f.node, f.first);
    const std::size_t b = sibling_of(f.node, a);
    auto [kb, ke] = inner_range(a, f.first);
    auto [mb, me] = inner_range(b, f.last);
    std::size_t ks = kb, ms = mb;
    double v_best = std::numeric_limits<double>::infinity();
    for (std::size_t kp = kb; kp < ke; ++kp)
      for (std::size_t mp = mb; mp < me; ++mp) {
        const double v = best[f.first * n + kp] + dpos[kp * n + mp] + best[mp * n + f.last];
        if (v < v_best) {
          v_best = v;
          ks = kp;
          ms = mp;
        }
      }
    stack.push_back({b, ms, f.last});
    stack.push_back({a, f.first, ks});
  }
  return out;
}

ProximityMatrix permute_matrix(const ProximityMatrix& p, std::span<const std::size_t> order) {
  if (!is_permutation_of_iota(order, p.size()))
    throw std::invalid_argument("permute_matrix: order is not a permutation of the matrix size");
  const std::size_t m = p.size();
  std::vector<std::uint32_t> counts(m * (m + 1) / 2);
  std::vector<std::int64_t> ids(m);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < m; ++i) {
    ids[i] = p.row_ids()[order[i]];
    for (std::size_t j = i; j < m; ++j) counts[pos++] = p.count(order[i], order[j]);
  }
  ProximityMatrix out(m, p.tree_count(), std::move(counts), std::move(ids));
  out.forest_hash = p.forest_hash;
  out.dataset_hash = p.dataset_hash;
  return out;
}

// --- flat clusters ---------------------------------------------------------

namespace {

std::vector<int> cluster_labels(const Dendrogram& dg, std::size_t merges_applied) {
  const std::size_t n = dg.leaves;
  UnionFind uf(n);
  std::vector<std::size_t> leaf_of(2 * n - 1);
  std::iota(leaf_of.begin(), leaf_of.begin() + static_cast<std::ptrdiff_t>(n), 0);
  for (std::size_t k = 0; k < dg.merges.size(); ++k) {
    const Merge& m = dg.merges[k];
    leaf_of[n + k] = leaf_of[m.left];
    if (k < merges_applied) uf.unite(leaf_of[m.left], leaf_of[m.right], n + k);
  }
  std::unordered_map<std::size_t, int> label_of_root;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = label_of_root.try_emplace(uf.find(i), static_cast<int>(label_of_root.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace

std::vector<int> flat_clusters(const Dendrogram& dg, std::size_t k) {
  if (k < 1 || k > dg.leaves) throw std::invalid_argument("flat_clusters: k must lie in [1, M]");
  return cluster_labels(dg, dg.leaves - k);
}

std::vector<int> flat_clusters_at_height(const Dendrogram& dg, double height) {
  std::size_t applied = 0;
  while (applied < dg.merges.size() && dg.merges[applied].height <= height) ++applied;
  return cluster_labels(dg, applied);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: size mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::unordered_map<long long, double> table;
  std::unordered_map<int, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[(static_cast<long long>(a[i]) << 32) ^ static_cast<unsigned>(b[i])] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sum_a = 0, sum_b = 0;
  for (auto& [key, v] : table) index += c2(v);
  for (auto& [key, v] : rows) sum_a += c2(v);
  for (auto& [key, v] : cols) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// --- json ------------------------------------------------------------------

nlohmann::json to_json(const Dendrogram& dg) {
  nlohmann::json merges = nlohmann::json::array();
  for (const Merge& m : dg.merges) merges.push_back({m.left, m.right, m.height, m.size});
  return {{"leaves", dg.leaves},
          {"linkage", to_string(dg.method)},
          {"merges", merges},
          {"row_ids", dg.row_ids},
          {"conventions",
           {{"cluster_ids", "leaves 0..M-1, merge k creates cluster M+k"},
            {"tie_break", "nearest-neighbour chain prefers the chain predecessor, then the lowest index; "
                          "merges stably sorted by height"},
            {"child_orientation", "lower cluster id is the left child and is traversed first"}}}};
}

nlohmann::json to_json(const LeafOrder& order, std::span<const std::int64_t> row_ids) {
  std::vector<std::int64_t> ids;
  ids.reserve(order.permutation.size());
  for (std::size_t p : order.permutation) ids.push_back(row_ids.empty() ? static_cast<std::int64_t>(p) : row_ids[p]);
  return {{"stage", order.stage == OrderStage::hc ? "hc" : "olo"},
          {"permutation", order.permutation},
          {"row_ids", ids}};
}

}  // namespace urfclust
