#include "attn_atlas/headlens.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "attn_atlas/errors.hpp"
#include "attn_atlas/pos_tagger.hpp"

namespace attn_atlas {
namespace {

class UnitSource {
 public:
  explicit UnitSource(std::uint64_t seed) : engine_(seed) {}
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  Eigen::Index index(Eigen::Index n) {
    return std::min<Eigen::Index>(static_cast<Eigen::Index>(next() * static_cast<double>(n)),
                                  n - 1);
  }

 private:
  std::mt19937_64 engine_;
};

double squared_distance(const Matrix& points, Eigen::Index i, const Matrix& centroids,
                        Eigen::Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

std::vector<int> assign_nearest(const Matrix& points, const Matrix& centroids) {
  std::vector<int> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(points, i, centroids, c);
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(i)] = best_c;
  }
  return out;
}

Matrix seed_centroids(const Matrix& points, int k, UnitSource& rng) {
  const Eigen::Index n = points.rows();
  Matrix centroids(k, points.cols());
  centroids.row(0) = points.row(rng.index(n));
  Vector nearest(n);
  for (Eigen::Index i = 0; i < n; ++i) nearest(i) = squared_distance(points, i, centroids, 0);

  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.next() * total;
      double cumulative = 0.0;
      pick = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (nearest(i) <= 0.0) continue;
        cumulative += nearest(i);
        pick = i;
        if (cumulative > target) break;
      }
    } else {
      pick = rng.index(n);
    }
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      nearest(i) = std::min(nearest(i), squared_distance(points, i, centroids, c));
  }
  return centroids;
}

void recompute_mean(const Matrix& points, std::span<const int> assignments, int cluster,
                    Matrix& centroids) {
  Vector sum = Vector::Zero(points.cols());
  int count = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != cluster) continue;
    sum += points.row(static_cast<Eigen::Index>(i)).transpose();
    ++count;
  }
  if (count > 0) centroids.row(cluster) = (sum / count).transpose();
}

void update_centroids(const Matrix& points, std::vector<int>& assignments, Matrix& centroids) {
  const int k = static_cast<int>(centroids.rows());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++counts[static_cast<std::size_t>(a)];
  for (int c = 0; c < k; ++c) recompute_mean(points, assignments, c, centroids);

  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    // Re-seed the empty cluster with the point farthest from its centroid,
    // taken from a cluster that can spare it.
    Eigen::Index farthest = -1;
    double worst = -1.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int owner = assignments[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(owner)] < 2) continue;
      const double d = squared_distance(points, i, centroids, owner);
      if (d > worst) {
        worst = d;
        farthest = i;
      }
    }
    if (farthest < 0) continue;
    const int donor = assignments[static_cast<std::size_t>(farthest)];
    assignments[static_cast<std::size_t>(farthest)] = c;
    --counts[static_cast<std::size_t>(donor)];
    ++counts[static_cast<std::size_t>(c)];
    centroids.row(c) = points.row(farthest);
    recompute_mean(points, assignments, donor, centroids);
  }
}

std::string fold_case(const std::string& s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void append_side(VectorSet& set, const SentenceEntry& s, const Matrix& vectors,
                 const std::vector<std::string>& tokens,
                 const std::optional<std::vector<std::string>>& pos) {
  const std::vector<std::string> tags = pos ? *pos : fallback_pos_tag(tokens);
  const Eigen::Index start = set.points.rows();
  if (set.points.cols() != vectors.cols()) {
    if (start != 0) fail(ErrorKind::input, "vector widths differ across sentences");
    set.points.resize(0, vectors.cols());
  }
  set.points.conservativeResize(start + vectors.rows(), Eigen::NoChange);
  set.points.bottomRows(vectors.rows()) = vectors;
  const int length = static_cast<int>(tokens.size());
  for (int t = 0; t < length; ++t) {
    set.meta.push_back({s.id, t, tokens[static_cast<std::size_t>(t)],
                        tags[static_cast<std::size_t>(t)], length});
  }
}

}  // namespace

HeadVectors collect_head_vectors(const CorpusStore& store, AttnType type, int layer, int head) {
  HeadVectors out;
  if (store.empty()) return out;
  const ModelInfo& model = store.model();
  if (layer < 1 || layer > model.n_layers) {
    fail(ErrorKind::range, "layer " + std::to_string(layer) + " out of range 1.." +
                               std::to_string(model.n_layers));
  }
  if (head < 1 || head > model.n_heads) {
    fail(ErrorKind::range, "head " + std::to_string(head) + " out of range 1.." +
                               std::to_string(model.n_heads));
  }
  for (const SentenceEntry& s : store.sentences()) {
    if (!s.has_type(type)) continue;
    const AttentionRecord& rec = s.record(type, layer, head);
    if (!rec.has_vectors()) {
      fail(ErrorKind::unavailable, "sentence " + s.id + " carries no query/key vectors for " +
                                       std::string(to_string(type)));
    }
    const bool query_is_source = type == AttnType::encoder_self;
    const bool key_is_source = type != AttnType::decoder_self;
    append_side(out.queries, s, rec.queries, s.query_tokens(type),
                query_is_source ? s.source_pos : s.target_pos);
    append_side(out.keys, s, rec.keys, s.key_tokens(type),
                key_is_source ? s.source_pos : s.target_pos);
  }
  return out;
}

double clustering_inertia(const Matrix& points, std::span<const int> assignments,
                          const Matrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    total += squared_distance(points, static_cast<Eigen::Index>(i), centroids, assignments[i]);
  }
  return total;
}

Clustering kmeans_pp(const Matrix& points, int k, std::uint64_t seed, int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 1) fail(ErrorKind::input, "k must be at least 1");
  if (n < k) {
    fail(ErrorKind::input, "cannot form " + std::to_string(k) + " clusters from " +
                               std::to_string(n) + " points");
  }
  if (max_iter < 1) fail(ErrorKind::input, "max_iter must be at least 1");

  UnitSource rng(seed);
  Clustering result;
  result.k = k;
  result.centroids = seed_centroids(points, k, rng);
  result.assignments.assign(static_cast<std::size_t>(n), -1);

  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<int> next = assign_nearest(points, result.centroids);
    result.inertia_trace.push_back(clustering_inertia(points, next, result.centroids));
    result.iterations = iter + 1;
    const bool changed = next != result.assignments;
    result.assignments = std::move(next);
    if (!changed) break;
    update_centroids(points, result.assignments, result.centroids);
  }
  result.inertia = clustering_inertia(points, result.assignments, result.centroids);
  if (result.inertia != result.inertia_trace.back()) {
    result.inertia_trace.push_back(result.inertia);
  }
  return result;
}

int elbow_k(std::span<const int> ks, std::span<const double> inertia) {
  if (ks.size() != inertia.size() || ks.size() < 3) {
    fail(ErrorKind::input, "elbow needs at least three (k, inertia) pairs");
  }
  int best_k = ks[1];
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
    const double curvature = inertia[i - 1] - 2.0 * inertia[i] + inertia[i + 1];
    if (curvature > best) {
      best = curvature;
      best_k = ks[i];
    }
  }
  return best_k;
}

ElbowCurve suggest_k(const Matrix& points, int k_min, int k_max, std::uint64_t seed) {
  if (k_min < 1 || k_max > points.rows() || k_max - k_min + 1 < 3) {
    fail(ErrorKind::input, "k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                               "] must hold at least three values within [1, " +
                               std::to_string(points.rows()) + "]");
  }
  ElbowCurve curve;
  for (int k = k_min; k <= k_max; ++k) {
    curve.ks.push_back(k);
    curve.inertia.push_back(kmeans_pp(points, k, seed).inertia);
  }
  curve.suggested_k = elbow_k(curve.ks, curve.inertia);
  return curve;
}

Matrix centroid_similarity(const Clustering& queries, const Clustering& keys) {
  if (queries.centroids.cols() != keys.centroids.cols()) {
    fail(ErrorKind::input, "query and key centroids have different dimensions");
  }
  return queries.centroids * keys.centroids.transpose();
}

int position_bin(int token_index, int sentence_length) {
  if (sentence_length < 1 || token_index < 0 || token_index >= sentence_length) {
    fail(ErrorKind::input, "token index outside its sentence");
  }
  const double r =
      sentence_length == 1 ? 0.0 : static_cast<double>(token_index) / (sentence_length - 1);
  return std::min(static_cast<int>(r * kPositionBins), kPositionBins - 1);
}

ClusterSummary cluster_summary(std::span<const TokenOccurrence> members) {
  ClusterSummary summary;
  summary.size = static_cast<int>(members.size());
  if (members.empty()) return summary;

  std::map<std::string, int> pos_counts;
  std::map<std::string, std::map<std::string, int>> words;
  std::array<int, kPositionBins> bins{};
  for (const TokenOccurrence& m : members) {
    ++pos_counts[m.pos];
    ++bins[static_cast<std::size_t>(position_bin(m.token_index, m.sentence_length))];
    ++words[fold_case(m.token)][m.pos];
  }
  const auto n = static_cast<double>(members.size());
  for (const auto& [tag, count] : pos_counts) summary.pos_distribution[tag] = count / n;
  for (int b = 0; b < kPositionBins; ++b)
    summary.position_histogram[static_cast<std::size_t>(b)] = bins[static_cast<std::size_t>(b)] / n;

  for (const auto& [word, tags] : words) {
    WordCount wc{word, 0, {}};
    int dominant = 0;
    for (const auto& [tag, count] : tags) {
      wc.count += count;
      if (count > dominant) {
        dominant = count;
        wc.pos = tag;
      }
    }
    summary.top_words.push_back(std::move(wc));
  }
  std::stable_sort(summary.top_words.begin(), summary.top_words.end(),
                   [](const WordCount& a, const WordCount& b) { return a.count > b.count; });
  if (summary.top_words.size() > kTopWordLimit) summary.top_words.resize(kTopWordLimit);
  return summary;
}

std::vector<ClusterSummary> summarize_clusters(const VectorSet& set, const Clustering& clustering) {
  std::vector<std::vector<TokenOccurrence>> groups(static_cast<std::size_t>(clustering.k));
  for (std::size_t i = 0; i < clustering.assignments.size(); ++i) {
    groups[static_cast<std::size_t>(clustering.assignments[i])].push_back(set.meta[i]);
  }
  std::vector<ClusterSummary> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(cluster_summary(g));
  return out;
}

HeadProfile build_head_profile(const CorpusStore& store, AttnType type, int layer, int head,
                               int k, std::uint64_t seed) {
  HeadVectors vectors = collect_head_vectors(store, type, layer, head);
  if (vectors.queries.size() == 0) {
    fail(ErrorKind::unavailable, "no " + std::string(to_string(type)) +
                                     " vectors in the loaded corpus");
  }
  HeadProfile profile;
  profile.type = type;
  profile.layer = layer;
  profile.head = head;
  profile.k = k;
  profile.seed = seed;
  profile.query_clustering = kmeans_pp(vectors.queries.points, k, seed);
  profile.key_clustering = kmeans_pp(vectors.keys.points, k, seed);
  profile.similarity = centroid_similarity(profile.query_clustering, profile.key_clustering);
  profile.query_summaries = summarize_clusters(vectors.queries, profile.query_clustering);
  profile.key_summaries = summarize_clusters(vectors.keys, profile.key_clustering);
  return profile;
}

}  // namespace attn_atlas
