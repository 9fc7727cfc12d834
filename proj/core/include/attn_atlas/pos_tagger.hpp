#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attn_atlas {

/// The 17 universal dependency POS tags.
inline constexpr std::string_view kUniversalPosTags[] = {
    "ADJ", "ADP",  "ADV",  "AUX",   "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

bool is_universal_pos(std::string_view tag);

/// Approximate tagger for self-generated fixtures: closed-class lexicon
/// lookup (case-insensitive), numbers to NUM, pure punctuation to PUNCT,
/// bracketed special tokens such as "<s>" or "[SEP]" to X, NOUN otherwise.
std::vector<std::string> fallback_pos_tag(std::span<const std::string> tokens);

}  // namespace attn_atlas
