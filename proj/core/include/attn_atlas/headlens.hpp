#pragma once

// Corpus-level profile of one attention head: k-means++ clusterings of its
// query and key vectors, the inner products between cluster centroids, and
// POS / position / word summaries of each cluster.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attn_atlas/dump.hpp"
#include "attn_atlas/types.hpp"

namespace attn_atlas {

inline constexpr int kDefaultClusterCount = 16;
inline constexpr int kDefaultMaxIterations = 100;
inline constexpr int kPositionBins = 10;
inline constexpr std::size_t kTopWordLimit = 20;

struct TokenOccurrence {
  std::string sentence_id;
  int token_index = 0;
  std::string token;
  std::string pos;
  int sentence_length = 0;
};

struct VectorSet {
  Matrix points;  // N x d_k
  std::vector<TokenOccurrence> meta;

  std::size_t size() const { return meta.size(); }
};

struct HeadVectors {
  VectorSet queries;
  VectorSet keys;
};

/// One point per token occurrence across the corpus. Queries come from the
/// query side (target for encoder_decoder), keys from the key side. Sentences
/// without the attention type are skipped. POS falls back to the built-in
/// tagger when the dump carries none. Throws Error(range) for a bad layer or
/// head and Error(unavailable) when the dump has no vectors for the head.
HeadVectors collect_head_vectors(const CorpusStore& store, AttnType type, int layer, int head);

struct Clustering {
  int k = 0;
  std::vector<int> assignments;
  Matrix centroids;  // k x d
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after every assignment step, ending with the final value.
  std::vector<double> inertia_trace;
};

double clustering_inertia(const Matrix& points, std::span<const int> assignments,
                          const Matrix& centroids);

/// k-means++ seeding followed by Lloyd iterations until the assignments
/// stop changing or `max_iter` is reached. Ties in nearest-centroid
/// assignment go to the lower cluster id. An empty cluster is re-seeded with
/// the point farthest from its own centroid. Throws Error(input) unless
/// 1 <= k <= N.
Clustering kmeans_pp(const Matrix& points, int k, std::uint64_t seed,
                     int max_iter = kDefaultMaxIterations);

struct ElbowCurve {
  int suggested_k = 0;
  std::vector<int> ks;
  std::vector<double> inertia;
};

/// Interior k with the largest discrete second difference of the curve.
int elbow_k(std::span<const int> ks, std::span<const double> inertia);

/// Runs kmeans_pp for every k in [k_min, k_max] and suggests the interior k
/// with the largest second difference J(k-1) - 2 J(k) + J(k+1) (first k on
/// ties). Needs at least three values with 1 <= k_min and k_max <= N.
ElbowCurve suggest_k(const Matrix& points, int k_min, int k_max, std::uint64_t seed);

/// S(p, q) = <query centroid p, key centroid q>.
Matrix centroid_similarity(const Clustering& queries, const Clustering& keys);

struct WordCount {
  std::string word;  // lower-cased
  int count = 0;
  std::string pos;   // most frequent tag, lexicographically first on ties
};

struct ClusterSummary {
  int size = 0;
  std::map<std::string, double> pos_distribution;
  std::array<double, kPositionBins> position_histogram{};
  std::vector<WordCount> top_words;

  bool empty() const { return size == 0; }
};

/// Relative position r = index / (length - 1), or 0 for one-token
/// sentences, binned into ten equal bins with the last bin closed.
int position_bin(int token_index, int sentence_length);

ClusterSummary cluster_summary(std::span<const TokenOccurrence> members);

struct HeadProfile {
  AttnType type = AttnType::encoder_self;
  int layer = 0;
  int head = 0;
  int k = 0;
  std::uint64_t seed = 0;
  Clustering query_clustering;
  Clustering key_clustering;
  Matrix similarity;  // K_q x K_k
  std::vector<ClusterSummary> query_summaries;
  std::vector<ClusterSummary> key_summaries;
};

std::vector<ClusterSummary> summarize_clusters(const VectorSet& set, const Clustering& clustering);

/// Both clusterings use the same seed.
HeadProfile build_head_profile(const CorpusStore& store, AttnType type, int layer, int head,
                               int k = kDefaultClusterCount, std::uint64_t seed = 0);

}  // namespace attn_atlas
