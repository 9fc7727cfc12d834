#pragma once

// Attention piling: group the heads of one layer by the similarity of their
// attention patterns and summarise each group by its mean heatmap.

#include <limits>
#include <span>
#include <vector>

#include "attn_atlas/types.hpp"

namespace attn_atlas {

inline constexpr double kDefaultPileThreshold = 1.0;

struct PileFeature {
  int head = 0;
  Vector values;  // row-major A, then [upper, lower, diagonal] proportions
};

/// Row-major flattening of `a` followed by the proportions of attention mass
/// above the diagonal (key after query), below it, and on it. The diagonal
/// is {(j, j) : j < min(T_q, T_k)}; each sum is divided by T_q.
Vector pile_feature(const Matrix& a);

struct Cluster {
  std::vector<int> members;  // indices into the feature list, ascending
  double intra_distance = 0.0;  // largest pairwise Euclidean distance
};

/// Average-linkage agglomerative clustering on Euclidean distances.
/// Clusters keep merging while the smallest linkage is <= `threshold`; ties
/// go to the pair whose lowest member indices are lexicographically
/// smallest. Returned clusters are ordered by their lowest member.
std::vector<Cluster> agglomerative_cluster(std::span<const Vector> features, double threshold);

std::vector<Cluster> agglomerative_cluster(std::span<const PileFeature> features,
                                           double threshold);

/// Element-wise mean of same-shaped matrices.
Matrix aggregate_pile(std::span<const Matrix> matrices);

struct Pile {
  std::vector<int> heads;  // 1-based head indices
  Matrix mean;
  double intra_distance = 0.0;
};

/// Features, clustering and mean heatmaps for one layer's records.
std::vector<Pile> build_piles(std::span<const AttentionRecord> records, double threshold);

}  // namespace attn_atlas
