#pragma once

// JSON payloads shared by the CLI and the HTTP service. Both front ends
// serialise library results through these functions only, so a CLI file and
// an API body for the same query are byte-identical.

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_atlas/analytics.hpp"
#include "attn_atlas/dump.hpp"
#include "attn_atlas/headlens.hpp"
#include "attn_atlas/piling.hpp"

namespace attn_atlas {

nlohmann::json matrix_json(const Matrix& m);

nlohmann::json sentence_list_payload(const CorpusStore& store);
nlohmann::json sentence_payload(const CorpusStore& store, const SentenceEntry& sentence);

nlohmann::json attention_payload(const SentenceEntry& sentence, const AttentionRecord& record);

nlohmann::json sort_payload(const SentenceEntry& sentence, AttnType type, int layer,
                            HeadMetric metric, SortDirection direction,
                            std::span<const HeadScore> scores);

nlohmann::json piles_payload(const SentenceEntry& sentence, AttnType type, int layer,
                             double threshold, std::span<const Pile> piles);

nlohmann::json histogram_payload(const SentenceEntry& sentence, AttnType type, int layer,
                                 const Matrix& heights);

nlohmann::json sankey_payload(const SentenceEntry& sentence, AttnType type, int n_layers,
                              double prune, std::span<const FlowEdge> edges);

nlohmann::json cluster_summary_json(int id, const ClusterSummary& summary);

/// HeadLens profile document. The similarity colour scale is diverging,
/// blue for low and red for high, anchored at -max|S| and +max|S|.
nlohmann::json head_profile_payload(const HeadProfile& profile);

/// Throws Error(range) for cluster ids outside [0, k).
nlohmann::json head_pair_payload(const HeadProfile& profile, int query_cluster, int key_cluster);

/// True when every number in the document is finite.
bool all_numbers_finite(const nlohmann::json& doc);

}  // namespace attn_atlas
