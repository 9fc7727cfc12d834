#include "attn_atlas/codec.hpp"

#include <cmath>

#include "attn_atlas/errors.hpp"
#include "json_util.hpp"

namespace attn_atlas {
namespace {

using nlohmann::json;

json header(const SentenceEntry& s, AttnType type) {
  return {{"sentence_id", s.id}, {"type", std::string(to_string(type))}};
}

}  // namespace

json matrix_json(const Matrix& m) { return detail::matrix_to_rows(m); }

json sentence_list_payload(const CorpusStore& store) {
  json list = json::array();
  for (const SentenceEntry& s : store.sentences()) {
    json item = {{"id", s.id},
                 {"source_tokens", s.source_tokens},
                 {"n_source", s.source_tokens.size()}};
    if (s.target_tokens) {
      item["target_tokens"] = *s.target_tokens;
      item["n_target"] = s.target_tokens->size();
    }
    list.push_back(std::move(item));
  }
  return {{"sentences", std::move(list)}};
}

json sentence_payload(const CorpusStore& store, const SentenceEntry& s) {
  json out = {{"id", s.id},
              {"source_tokens", s.source_tokens},
              {"n_layers", store.model().n_layers},
              {"n_heads", store.model().n_heads}};
  if (s.target_tokens) out["target_tokens"] = *s.target_tokens;
  if (s.source_pos) out["source_pos"] = *s.source_pos;
  if (s.target_pos) out["target_pos"] = *s.target_pos;
  json types = json::array();
  bool vectors = false;
  for (const auto& [type, stack] : s.attention) {
    types.push_back(std::string(to_string(type)));
    if (!stack.empty() && !stack.front().empty() && stack.front().front().has_vectors()) {
      vectors = true;
    }
  }
  out["attn_types"] = std::move(types);
  out["has_vectors"] = vectors;
  return out;
}

json attention_payload(const SentenceEntry& s, const AttentionRecord& r) {
  json out = header(s, r.type);
  out["layer"] = r.layer;
  out["head"] = r.head;
  out["query_tokens"] = s.query_tokens(r.type);
  out["key_tokens"] = s.key_tokens(r.type);
  out["weights"] = matrix_json(r.weights);
  return out;
}

json sort_payload(const SentenceEntry& s, AttnType type, int layer, HeadMetric metric,
                  SortDirection direction, std::span<const HeadScore> scores) {
  json out = header(s, type);
  out["layer"] = layer;
  out["metric"] = std::string(to_string(metric));
  out["direction"] = std::string(to_string(direction));
  json heads = json::array();
  for (const HeadScore& sc : scores) heads.push_back({{"head", sc.head}, {"score", sc.value}});
  out["heads"] = std::move(heads);
  return out;
}

json piles_payload(const SentenceEntry& s, AttnType type, int layer, double threshold,
                   std::span<const Pile> piles) {
  json out = header(s, type);
  out["layer"] = layer;
  out["threshold"] = threshold;
  const bool square = s.query_tokens(type).size() == s.key_tokens(type).size();
  out["square"] = square;
  json list = json::array();
  for (const Pile& p : piles) {
    list.push_back({{"heads", p.heads},
                    {"intra_distance", p.intra_distance},
                    {"mean", matrix_json(p.mean)}});
  }
  out["piles"] = std::move(list);
  return out;
}

json histogram_payload(const SentenceEntry& s, AttnType type, int layer, const Matrix& heights) {
  json out = header(s, type);
  out["layer"] = layer;
  out["key_tokens"] = s.key_tokens(type);
  out["heights"] = matrix_json(heights);
  return out;
}

json sankey_payload(const SentenceEntry& s, AttnType type, int n_layers, double prune,
                    std::span<const FlowEdge> edges) {
  json out = header(s, type);
  out["n_layers"] = n_layers;
  out["prune"] = prune;
  out["tokens"] = s.query_tokens(type);
  json list = json::array();
  for (const FlowEdge& e : edges) {
    list.push_back({{"from", {{"layer", e.from.layer}, {"word", e.from.word}}},
                    {"to", {{"layer", e.to.layer}, {"word", e.to.word}}},
                    {"weight", e.weight}});
  }
  out["edges"] = std::move(list);
  return out;
}

json cluster_summary_json(int id, const ClusterSummary& summary) {
  json words = json::array();
  for (const WordCount& w : summary.top_words) {
    words.push_back({{"word", w.word}, {"count", w.count}, {"pos", w.pos}});
  }
  return {{"id", id},
          {"size", summary.size},
          {"empty", summary.empty()},
          {"pos_distribution", summary.pos_distribution},
          {"position_histogram", summary.position_histogram},
          {"top_words", std::move(words)}};
}

json head_profile_payload(const HeadProfile& p) {
  const double extent = p.similarity.size() > 0 ? p.similarity.cwiseAbs().maxCoeff() : 0.0;
  json queries = json::array();
  for (std::size_t c = 0; c < p.query_summaries.size(); ++c) {
    queries.push_back(cluster_summary_json(static_cast<int>(c), p.query_summaries[c]));
  }
  json keys = json::array();
  for (std::size_t c = 0; c < p.key_summaries.size(); ++c) {
    keys.push_back(cluster_summary_json(static_cast<int>(c), p.key_summaries[c]));
  }
  return {{"type", std::string(to_string(p.type))},
          {"layer", p.layer},
          {"head", p.head},
          {"k", p.k},
          {"seed", p.seed},
          {"query_inertia", p.query_clustering.inertia},
          {"key_inertia", p.key_clustering.inertia},
          {"query_centroids", matrix_json(p.query_clustering.centroids)},
          {"key_centroids", matrix_json(p.key_clustering.centroids)},
          {"similarity", matrix_json(p.similarity)},
          {"color_scale",
           {{"scheme", "diverging"}, {"low", "blue"}, {"high", "red"}, {"min", -extent},
            {"max", extent}}},
          {"query_clusters", std::move(queries)},
          {"key_clusters", std::move(keys)}};
}

json head_pair_payload(const HeadProfile& p, int query_cluster, int key_cluster) {
  if (query_cluster < 0 || query_cluster >= p.query_clustering.k) {
    fail(ErrorKind::range, "query cluster " + std::to_string(query_cluster) +
                               " outside 0.." + std::to_string(p.query_clustering.k - 1));
  }
  if (key_cluster < 0 || key_cluster >= p.key_clustering.k) {
    fail(ErrorKind::range, "key cluster " + std::to_string(key_cluster) + " outside 0.." +
                               std::to_string(p.key_clustering.k - 1));
  }
  return {{"type", std::string(to_string(p.type))},
          {"layer", p.layer},
          {"head", p.head},
          {"k", p.k},
          {"seed", p.seed},
          {"query_cluster", query_cluster},
          {"key_cluster", key_cluster},
          {"similarity", p.similarity(query_cluster, key_cluster)},
          {"query", cluster_summary_json(query_cluster,
                                         p.query_summaries[static_cast<std::size_t>(query_cluster)])},
          {"key", cluster_summary_json(key_cluster,
                                       p.key_summaries[static_cast<std::size_t>(key_cluster)])}};
}

bool all_numbers_finite(const json& doc) {
  switch (doc.type()) {
    case json::value_t::number_float:
      return std::isfinite(doc.get<double>());
    case json::value_t::array:
    case json::value_t::object:
      for (const auto& item : doc) {
        if (!all_numbers_finite(item)) return false;
      }
      return true;
    default:
      return true;
  }
}

}  // namespace attn_atlas
