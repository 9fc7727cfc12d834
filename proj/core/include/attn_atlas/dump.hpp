#pragma once

// Attention dump v1: the on-disk and on-the-wire container for tokens, POS
// tags, attention matrices and optional query/key vectors.
//
//   {
//     "version": 1,
//     "provenance": "...",                      (optional)
//     "model": {"n_layers", "n_heads", "d_model", "attn_types": [...]},
//     "sentences": [{
//       "id", "source_tokens", "target_tokens"?, "source_pos"?, "target_pos"?,
//       "attention": {type: [layer][head] -> rows},
//       "vectors"?: {type: [layer][head] -> {"queries": rows, "keys": rows}}
//     }]
//   }

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_atlas/errors.hpp"
#include "attn_atlas/types.hpp"

namespace attn_atlas {

inline constexpr double kIngestRowSumTolerance = 1e-4;
inline constexpr double kIngestEntryTolerance = 1e-6;

struct ModelInfo {
  int n_layers = 0;
  int n_heads = 0;
  int d_model = 0;
  std::vector<AttnType> attn_types;

  friend bool operator==(const ModelInfo&, const ModelInfo&) = default;
};

/// Records of one attention type, indexed [layer - 1][head - 1].
using LayerStack = std::vector<std::vector<AttentionRecord>>;

struct SentenceEntry {
  std::string id;
  std::vector<std::string> source_tokens;
  std::optional<std::vector<std::string>> target_tokens;
  std::optional<std::vector<std::string>> source_pos;
  std::optional<std::vector<std::string>> target_pos;
  std::map<AttnType, LayerStack> attention;

  bool has_type(AttnType type) const { return attention.count(type) != 0; }

  /// Throws Error(range) if the type, layer or head is absent.
  std::span<const AttentionRecord> layer(AttnType type, int layer) const;
  const AttentionRecord& record(AttnType type, int layer, int head) const;

  /// Query-side and key-side token lists for an attention type: target/source
  /// for encoder_decoder, source/source or target/target for self attention.
  const std::vector<std::string>& query_tokens(AttnType type) const;
  const std::vector<std::string>& key_tokens(AttnType type) const;
};

struct Violation {
  std::string sentence_id;
  std::string attn_type;
  int layer = 0;  // 0 when not tied to a record
  int head = 0;
  int row = -1;
  int col = -1;
  std::string kind;  // structure, metadata, dimension, row_sum, entry_range,
                     // causal, pos_alignment, duplicate_id
  double measured = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> errors;
  std::vector<std::string> warnings;

  bool accepted() const { return errors.empty(); }
};

class ValidationFailure : public Error {
 public:
  explicit ValidationFailure(ValidationReport report);
  const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

/// Immutable, validated collection of sentences sharing one model shape.
class CorpusStore {
 public:
  CorpusStore() = default;

  /// Validates and takes ownership. Throws ValidationFailure.
  static CorpusStore assemble(ModelInfo model, std::vector<SentenceEntry> sentences,
                              std::string provenance = {});

  const ModelInfo& model() const { return model_; }
  std::span<const SentenceEntry> sentences() const { return sentences_; }
  const std::string& provenance() const { return provenance_; }
  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }

  const SentenceEntry* find(std::string_view id) const;
  /// Throws Error(range) for an unknown id.
  const SentenceEntry& at(std::string_view id) const;

 private:
  ModelInfo model_;
  std::vector<SentenceEntry> sentences_;
  std::string provenance_;
};

ValidationReport validate_entries(const ModelInfo& model,
                                  std::span<const SentenceEntry> sentences);

/// Never throws for malformed content; every problem lands in the report.
ValidationReport validate_dump(const nlohmann::json& document);

/// Throws ValidationFailure carrying the report when validation fails.
CorpusStore ingest_dump(const nlohmann::json& document);

nlohmann::json export_dump(const CorpusStore& store);

/// Concatenates two stores. A store with no model shape yet (n_layers == 0)
/// adopts the other's. Differing (n_layers, n_heads, d_model) or duplicate
/// sentence ids throw Error(conflict).
CorpusStore merge_stores(const CorpusStore& base, const CorpusStore& incoming);

nlohmann::json report_to_json(const ValidationReport& report);

}  // namespace attn_atlas
