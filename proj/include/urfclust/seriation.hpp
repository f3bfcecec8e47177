#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "urfclust/proximity.hpp"

namespace urfclust {

enum class Linkage { average, single, complete };

std::string_view to_string(Linkage l);
std::optional<Linkage> parse_linkage(std::string_view name);

/// Cluster ids follow the usual convention: leaves are 0..M-1 and the k-th
/// merge creates cluster M+k. left < right in every record.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  Linkage method = Linkage::average;
  std::vector<Merge> merges;  // non-decreasing height
  std::vector<std::int64_t> row_ids;
};

enum class OrderStage { hc, olo };

struct LeafOrder {
  std::vector<std::size_t> permutation;
  OrderStage stage = OrderStage::hc;
};

/// Agglomerative clustering with the nearest-neighbour-chain algorithm.
/// Equal distances resolve toward the chain predecessor, then the lowest
/// index; merges are stably sorted by height before ids are assigned.
Dendrogram linkage(const DissimilarityMatrix& d, Linkage method = Linkage::average);

/// Depth-first leaf sequence, lower cluster id first at every merge.
LeafOrder hc_order(const Dendrogram& dendrogram);

/// Flips subtrees so the sum of dissimilarities between neighbouring leaves is
/// minimal among all orders compatible with the dendrogram.
LeafOrder olo_order(const Dendrogram& dendrogram, const DissimilarityMatrix& d);

double order_cost(std::span<const std::size_t> order, const DissimilarityMatrix& d);

bool is_permutation_of_iota(std::span<const std::size_t> order, std::size_t size);

/// P_o[i][j] = P[order[i]][order[j]].
ProximityMatrix permute_matrix(const ProximityMatrix& p, std::span<const std::size_t> order);

/// Cluster id per row (ids numbered by first appearance in row order).
std::vector<int> flat_clusters(const Dendrogram& dendrogram, std::size_t k);
std::vector<int> flat_clusters_at_height(const Dendrogram& dendrogram, double height);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

nlohmann::json to_json(const Dendrogram& dendrogram);
nlohmann::json to_json(const LeafOrder& order, std::span<const std::int64_t> row_ids);

}  // namespace urfclust
