#pragma once

// Per-head scalar metrics and per-layer aggregates for the network view.

#include <span>
#include <vector>

#include "attn_atlas/dump.hpp"
#include "attn_atlas/types.hpp"

namespace attn_atlas {

enum class HeadMetric { entropy, position };
enum class SortDirection { ascending, descending };

/// Which axis of the attention matrix is treated as the distribution.
/// `rows` matches the softmax axis; `columns` normalises each column by its
/// mass first (columns with zero mass contribute 0) and is kept for
/// comparison with the literal column-wise reading.
enum class EntropyAxis { rows, columns };

std::string_view to_string(HeadMetric metric);
std::optional<HeadMetric> parse_head_metric(std::string_view text);
std::string_view to_string(SortDirection direction);
std::optional<SortDirection> parse_sort_direction(std::string_view text);

inline constexpr double kDefaultSankeyPrune = 0.05;

/// Tolerances for accepting a matrix as row-stochastic.
inline constexpr double kStochasticRowTolerance = kIngestRowSumTolerance;
inline constexpr double kStochasticEntryTolerance = kIngestEntryTolerance;

/// Throws Error(input) unless every row sums to 1 and entries lie in [0, 1]
/// within the tolerances above.
void require_row_stochastic(const Matrix& a);

/// Mean Shannon entropy (nats) over the chosen axis, with 0 ln 0 = 0.
double row_entropy_score(const Matrix& a, EntropyAxis axis = EntropyAxis::rows);

/// Mean over query rows of the attention-weighted signed offset (j - i).
/// Negative leans to earlier tokens, positive to later tokens.
double position_offset_score(const Matrix& a);

struct HeadScore {
  int layer = 0;
  int head = 0;
  HeadMetric metric = HeadMetric::entropy;
  double value = 0.0;
};

double head_score(const Matrix& a, HeadMetric metric);

/// Stable sort of one layer's heads by the chosen metric. All records must
/// share sentence, attention type and layer.
std::vector<HeadScore> sort_heads(std::span<const AttentionRecord> records, HeadMetric metric,
                                  SortDirection direction = SortDirection::ascending);

/// Column sums per head: result(j, h) is the total attention key word j
/// receives from head h + 1. Shape T_k x n_heads.
Matrix word_histogram(std::span<const AttentionRecord> records);

struct FlowNode {
  int layer = 0;  // 0 is the embedding column
  int word = 0;   // 0-based token index
};

struct FlowEdge {
  FlowNode from;
  FlowNode to;
  double weight = 0.0;
};

/// Edges from layer `source_layer` (0 = embeddings) into layer
/// source_layer + 1 of one self-attention type. The weight of (l, i) ->
/// (l+1, j) is the head-averaged A^{(l+1)}[j, i]. Edges with weight below
/// `prune_below` are dropped after the averages are computed.
std::vector<FlowEdge> sankey_edges(const SentenceEntry& sentence, AttnType type,
                                   int source_layer, double prune_below = kDefaultSankeyPrune);

/// Edges for every consecutive layer pair 0->1, ..., (L-1)->L.
std::vector<FlowEdge> sankey_flow(const SentenceEntry& sentence, AttnType type,
                                  double prune_below = kDefaultSankeyPrune);

}  // namespace attn_atlas
