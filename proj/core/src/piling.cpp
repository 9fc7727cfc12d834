#include "attn_atlas/piling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attn_atlas/errors.hpp"

namespace attn_atlas {

Vector pile_feature(const Matrix& a) {
  const Eigen::Index t_q = a.rows();
  const Eigen::Index t_k = a.cols();
  if (t_q == 0 || t_k == 0) fail(ErrorKind::input, "attention matrix is empty");
  Vector v(t_q * t_k + 3);
  double upper = 0.0;
  double lower = 0.0;
  double diagonal = 0.0;
  for (Eigen::Index i = 0; i < t_q; ++i) {
    for (Eigen::Index j = 0; j < t_k; ++j) {
      const double x = a(i, j);
      v(i * t_k + j) = x;
      if (j > i) {
        upper += x;
      } else if (j < i) {
        lower += x;
      } else {
        diagonal += x;
      }
    }
  }
  const auto n = static_cast<double>(t_q);
  v(t_q * t_k) = upper / n;
  v(t_q * t_k + 1) = lower / n;
  v(t_q * t_k + 2) = diagonal / n;
  return v;
}

std::vector<Cluster> agglomerative_cluster(std::span<const Vector> features, double threshold) {
  if (features.empty()) fail(ErrorKind::input, "no features to cluster");
  if (!(threshold >= 0.0)) fail(ErrorKind::input, "pile threshold must be non-negative");
  const std::size_t n = features.size();
  for (const Vector& f : features) {
    if (f.size() != features.front().size()) {
      fail(ErrorKind::input, "feature vectors have inconsistent lengths");
    }
  }

  Matrix distance = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      distance(i, j) = distance(j, i) = (features[i] - features[j]).norm();

  // Cluster slot c is identified by its lowest member, so scanning slot
  // pairs in order yields the lowest-index tie-break.
  Matrix linkage = distance;
  std::vector<std::vector<int>> members(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {static_cast<int>(i)};

  for (std::size_t remaining = n; remaining > 1; --remaining) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_a = n;
    std::size_t best_b = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        if (linkage(a, b) < best) {
          best = linkage(a, b);
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_a == n || best > threshold) break;

    const auto size_a = static_cast<double>(members[best_a].size());
    const auto size_b = static_cast<double>(members[best_b].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == best_a || k == best_b) continue;
      const double merged =
          (size_a * linkage(best_a, k) + size_b * linkage(best_b, k)) / (size_a + size_b);
      linkage(best_a, k) = linkage(k, best_a) = merged;
    }
    members[best_a].insert(members[best_a].end(), members[best_b].begin(),
                           members[best_b].end());
    std::sort(members[best_a].begin(), members[best_a].end());
    members[best_b].clear();
    active[best_b] = false;
  }

  std::vector<Cluster> clusters;
  for (std::size_t c = 0; c < n; ++c) {
    if (!active[c]) continue;
    Cluster cluster;
    cluster.members = members[c];
    for (std::size_t x = 0; x < cluster.members.size(); ++x)
      for (std::size_t y = x + 1; y < cluster.members.size(); ++y)
        cluster.intra_distance = std::max(
            cluster.intra_distance, distance(cluster.members[x], cluster.members[y]));
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

std::vector<Cluster> agglomerative_cluster(std::span<const PileFeature> features,
                                           double threshold) {
  std::vector<Vector> values;
  values.reserve(features.size());
  for (const PileFeature& f : features) values.push_back(f.values);
  return agglomerative_cluster(std::span<const Vector>(values), threshold);
}

Matrix aggregate_pile(std::span<const Matrix> matrices) {
  if (matrices.empty()) fail(ErrorKind::input, "pile has no members");
  Matrix mean = Matrix::Zero(matrices.front().rows(), matrices.front().cols());
  for (const Matrix& m : matrices) {
    if (m.rows() != mean.rows() || m.cols() != mean.cols()) {
      fail(ErrorKind::input, "pile members have different shapes");
    }
    mean += m;
  }
  return mean / static_cast<double>(matrices.size());
}

std::vector<Pile> build_piles(std::span<const AttentionRecord> records, double threshold) {
  if (records.empty()) fail(ErrorKind::input, "no attention records given");
  std::vector<Vector> features;
  features.reserve(records.size());
  for (const AttentionRecord& r : records) features.push_back(pile_feature(r.weights));

  std::vector<Pile> piles;
  for (Cluster& c : agglomerative_cluster(std::span<const Vector>(features), threshold)) {
    Pile pile;
    std::vector<Matrix> matrices;
    for (int index : c.members) {
      pile.heads.push_back(records[static_cast<std::size_t>(index)].head);
      matrices.push_back(records[static_cast<std::size_t>(index)].weights);
    }
    pile.mean = aggregate_pile(matrices);
    pile.intra_distance = c.intra_distance;
    piles.push_back(std::move(pile));
  }
  return piles;
}

}  // namespace attn_atlas
