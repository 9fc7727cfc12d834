#include "attn_atlas/pos_tagger.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>

namespace attn_atlas {
namespace {

const std::unordered_map<std::string, std::string>& lexicon() {
  static const auto* table = [] {
    auto* m = new std::unordered_map<std::string, std::string>;
    auto add = [m](std::initializer_list<const char*> words, const char* tag) {
      for (const char* w : words) m->emplace(w, tag);
    };
    add({"the", "a", "an", "this", "that", "these", "those", "every", "each", "some",
         "any", "no", "all", "both", "either", "neither", "another", "such"},
        "DET");
    add({"of", "in", "on", "at", "to", "for", "with", "from", "by", "about", "into",
         "over", "under", "between", "through", "during", "before", "after", "above",
         "below", "against", "among", "around", "without", "within", "across", "toward",
         "towards", "upon", "onto", "near", "like", "per", "via", "since", "until"},
        "ADP");
    add({"i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
         "my", "your", "his", "its", "our", "their", "mine", "yours", "hers", "ours",
         "theirs", "myself", "yourself", "himself", "herself", "itself", "ourselves",
         "themselves", "who", "whom", "whose", "what", "which", "something", "anything",
         "nothing", "everything", "someone", "anyone", "everyone", "nobody"},
        "PRON");
    add({"is", "am", "are", "was", "were", "be", "been", "being", "have", "has", "had",
         "do", "does", "did", "will", "would", "shall", "should", "can", "could", "may",
         "might", "must", "'s", "'re", "'m", "'ve", "'ll", "'d"},
        "AUX");
    add({"and", "or", "but", "nor", "yet", "so"}, "CCONJ");
    add({"because", "although", "though", "if", "unless", "while", "whereas", "whether",
         "than"},
        "SCONJ");
    add({"not", "n't"}, "PART");
    return m;
  }();
  return *table;
}

std::string fold(const std::string& s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_special(const std::string& s) {
  if (s.size() < 3) return false;
  return (s.front() == '<' && s.back() == '>') || (s.front() == '[' && s.back() == ']');
}

bool is_number(const std::string& s) {
  bool digit = false;
  for (unsigned char c : s) {
    if (std::isdigit(c)) {
      digit = true;
    } else if (c != '.' && c != ',' && c != '-' && c != '+' && c != '%') {
      return false;
    }
  }
  return digit;
}

bool is_punctuation(const std::string& s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::ispunct(c) != 0; });
}

}  // namespace

bool is_universal_pos(std::string_view tag) {
  return std::find(std::begin(kUniversalPosTags), std::end(kUniversalPosTags), tag) !=
         std::end(kUniversalPosTags);
}

std::vector<std::string> fallback_pos_tag(std::span<const std::string> tokens) {
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  for (const std::string& token : tokens) {
    if (is_special(token)) {
      tags.emplace_back("X");
      continue;
    }
    const std::string folded = fold(token);
    if (const auto it = lexicon().find(folded); it != lexicon().end()) {
      tags.push_back(it->second);
    } else if (is_number(folded)) {
      tags.emplace_back("NUM");
    } else if (is_punctuation(folded)) {
      tags.emplace_back("PUNCT");
    } else {
      tags.emplace_back("NOUN");
    }
  }
  return tags;
}

}  // namespace attn_atlas
