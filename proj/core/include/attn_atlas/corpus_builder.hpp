#pragma once

// Builds attention dumps by running the toy model over plain-text sentences.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attn_atlas/dump.hpp"
#include "attn_atlas/model.hpp"

namespace attn_atlas {

struct SentenceText {
  std::string id;
  std::vector<std::string> source;
  std::optional<std::vector<std::string>> target;
  std::optional<std::vector<std::string>> source_pos;
  std::optional<std::vector<std::string>> target_pos;
};

/// One sentence per non-blank line, whitespace-tokenised. A line of the form
/// "source ||| target" also yields a target side. `pos_text`, when given, is
/// a parallel file with the same layout holding one tag per token. Ids are
/// "s1", "s2", ... in line order. Throws Error(input) on misaligned tags.
std::vector<SentenceText> parse_sentence_text(std::string_view text,
                                              std::optional<std::string_view> pos_text = {});

/// Word-to-id table in first-occurrence order over source then target tokens.
class Vocabulary {
 public:
  static Vocabulary build(std::span<const SentenceText> sentences);

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  /// Throws Error(input) for an unknown word.
  int id(const std::string& word) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct GenerateOptions {
  bool keep_vectors = true;
  std::string provenance;
};

/// Runs encoder (and teacher-forced decoder when a target exists) for one
/// sentence. Missing POS tags come from fallback_pos_tag.
SentenceEntry run_sentence(const SentenceText& sentence, const Vocabulary& vocab,
                           const WeightSet& weights, bool keep_vectors = true);

CorpusStore generate_corpus(std::span<const SentenceText> sentences, const Vocabulary& vocab,
                            const WeightSet& weights, const GenerateOptions& options = {});

}  // namespace attn_atlas
