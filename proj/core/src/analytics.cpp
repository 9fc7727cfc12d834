#include "attn_atlas/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "attn_atlas/errors.hpp"

namespace attn_atlas {
namespace {

double entropy_term(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

void require_same_layer(std::span<const AttentionRecord> records) {
  if (records.empty()) fail(ErrorKind::input, "no attention records given");
  const AttentionRecord& first = records.front();
  for (const AttentionRecord& r : records) {
    if (r.layer != first.layer || r.type != first.type || r.sentence_id != first.sentence_id) {
      fail(ErrorKind::input, "records span more than one sentence, type or layer");
    }
    if (r.weights.rows() != first.weights.rows() || r.weights.cols() != first.weights.cols()) {
      fail(ErrorKind::input, "records of one layer have different shapes");
    }
  }
}

}  // namespace

std::string_view to_string(HeadMetric metric) {
  return metric == HeadMetric::position ? "position" : "entropy";
}

std::optional<HeadMetric> parse_head_metric(std::string_view text) {
  if (text == "entropy") return HeadMetric::entropy;
  if (text == "position") return HeadMetric::position;
  return std::nullopt;
}

std::string_view to_string(SortDirection direction) {
  return direction == SortDirection::descending ? "desc" : "asc";
}

std::optional<SortDirection> parse_sort_direction(std::string_view text) {
  if (text == "asc" || text == "ascending") return SortDirection::ascending;
  if (text == "desc" || text == "descending") return SortDirection::descending;
  return std::nullopt;
}

void require_row_stochastic(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) fail(ErrorKind::input, "attention matrix is empty");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      if (!std::isfinite(v) || v < -kStochasticEntryTolerance ||
          v > 1.0 + kStochasticEntryTolerance) {
        fail(ErrorKind::input, "attention entry (" + std::to_string(i) + "," +
                                   std::to_string(j) + ") is not a probability");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kStochasticRowTolerance) {
      fail(ErrorKind::input, "attention row " + std::to_string(i) + " sums to " +
                                 std::to_string(sum));
    }
  }
}

double row_entropy_score(const Matrix& a, EntropyAxis axis) {
  require_row_stochastic(a);
  if (axis == EntropyAxis::rows) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double h = 0.0;
      for (Eigen::Index j = 0; j < a.cols(); ++j) h += entropy_term(a(i, j));
      total += h;
    }
    return total / static_cast<double>(a.rows());
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    double mass = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) mass += std::max(a(i, j), 0.0);
    if (mass <= 0.0) continue;
    double h = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) h += entropy_term(std::max(a(i, j), 0.0) / mass);
    total += h;
  }
  return total / static_cast<double>(a.cols());
}

double position_offset_score(const Matrix& a) {
  require_row_stochastic(a);
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      total += a(i, j) * static_cast<double>(j - i);
  return total / static_cast<double>(a.rows());
}

double head_score(const Matrix& a, HeadMetric metric) {
  return metric == HeadMetric::entropy ? row_entropy_score(a) : position_offset_score(a);
}

std::vector<HeadScore> sort_heads(std::span<const AttentionRecord> records, HeadMetric metric,
                                  SortDirection direction) {
  require_same_layer(records);
  std::vector<HeadScore> scores;
  scores.reserve(records.size());
  for (const AttentionRecord& r : records) {
    scores.push_back({r.layer, r.head, metric, head_score(r.weights, metric)});
  }
  if (direction == SortDirection::ascending) {
    std::stable_sort(scores.begin(), scores.end(),
                     [](const HeadScore& x, const HeadScore& y) { return x.value < y.value; });
  } else {
    std::stable_sort(scores.begin(), scores.end(),
                     [](const HeadScore& x, const HeadScore& y) { return x.value > y.value; });
  }
  return scores;
}

Matrix word_histogram(std::span<const AttentionRecord> records) {
  require_same_layer(records);
  const Eigen::Index t_k = records.front().weights.cols();
  Matrix heights(t_k, static_cast<Eigen::Index>(records.size()));
  for (std::size_t h = 0; h < records.size(); ++h) {
    heights.col(static_cast<Eigen::Index>(h)) = records[h].weights.colwise().sum().transpose();
  }
  return heights;
}

std::vector<FlowEdge> sankey_edges(const SentenceEntry& sentence, AttnType type,
                                   int source_layer, double prune_below) {
  if (type == AttnType::encoder_decoder) {
    fail(ErrorKind::input, "flow view needs a self-attention type");
  }
  if (!(prune_below >= 0.0 && prune_below <= 1.0)) {
    fail(ErrorKind::input, "prune threshold must lie in [0, 1]");
  }
  const auto stack_it = sentence.attention.find(type);
  if (stack_it == sentence.attention.end()) {
    fail(ErrorKind::range, "sentence " + sentence.id + " has no " +
                               std::string(to_string(type)) + " attention");
  }
  const int n_layers = static_cast<int>(stack_it->second.size());
  if (source_layer < 0 || source_layer >= n_layers) {
    fail(ErrorKind::range, "flow source layer " + std::to_string(source_layer) +
                               " outside 0.." + std::to_string(n_layers - 1));
  }
  const auto heads = sentence.layer(type, source_layer + 1);
  require_same_layer(heads);

  Matrix mean = Matrix::Zero(heads.front().weights.rows(), heads.front().weights.cols());
  for (const AttentionRecord& r : heads) mean += r.weights;
  mean /= static_cast<double>(heads.size());

  std::vector<FlowEdge> edges;
  for (Eigen::Index i = 0; i < mean.cols(); ++i) {
    for (Eigen::Index j = 0; j < mean.rows(); ++j) {
      const double w = mean(j, i);
      if (w < prune_below) continue;
      edges.push_back({{source_layer, static_cast<int>(i)},
                       {source_layer + 1, static_cast<int>(j)},
                       w});
    }
  }
  return edges;
}

std::vector<FlowEdge> sankey_flow(const SentenceEntry& sentence, AttnType type,
                                  double prune_below) {
  const auto it = sentence.attention.find(type);
  if (it == sentence.attention.end()) {
    fail(ErrorKind::range, "sentence " + sentence.id + " has no " +
                               std::string(to_string(type)) + " attention");
  }
  std::vector<FlowEdge> all;
  for (int l = 0; l < static_cast<int>(it->second.size()); ++l) {
    auto edges = sankey_edges(sentence, type, l, prune_below);
    all.insert(all.end(), edges.begin(), edges.end());
  }
  return all;
}

}  // namespace attn_atlas
