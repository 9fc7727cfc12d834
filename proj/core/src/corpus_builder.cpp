#include "attn_atlas/corpus_builder.hpp"

#include <sstream>

#include "attn_atlas/errors.hpp"
#include "attn_atlas/pos_tagger.hpp"

namespace attn_atlas {
namespace {

constexpr std::string_view kSideSeparator = "|||";

std::vector<std::string> split_words(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

struct SplitLine {
  std::vector<std::string> source;
  std::optional<std::vector<std::string>> target;
};

SplitLine split_line(std::string_view line) {
  SplitLine out;
  const auto sep = line.find(kSideSeparator);
  if (sep == std::string_view::npos) {
    out.source = split_words(line);
  } else {
    out.source = split_words(line.substr(0, sep));
    out.target = split_words(line.substr(sep + kSideSeparator.size()));
  }
  return out;
}

std::vector<std::string_view> content_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

void attach(SentenceEntry& entry, std::vector<AttentionRecord>&& records, int n_layers,
            bool keep_vectors) {
  if (records.empty()) return;
  const AttnType type = records.front().type;
  LayerStack stack(static_cast<std::size_t>(n_layers));
  for (AttentionRecord& r : records) {
    if (!keep_vectors) {
      r.queries.resize(0, 0);
      r.keys.resize(0, 0);
    }
    stack[static_cast<std::size_t>(r.layer - 1)].push_back(std::move(r));
  }
  entry.attention.emplace(type, std::move(stack));
}

}  // namespace

std::vector<SentenceText> parse_sentence_text(std::string_view text,
                                              std::optional<std::string_view> pos_text) {
  const auto lines = content_lines(text);
  std::vector<std::string_view> pos_lines;
  if (pos_text) {
    pos_lines = content_lines(*pos_text);
    if (pos_lines.size() != lines.size()) {
      fail(ErrorKind::input, "POS file has " + std::to_string(pos_lines.size()) +
                                 " lines for " + std::to_string(lines.size()) + " sentences");
    }
  }
  std::vector<SentenceText> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    SplitLine words = split_line(lines[i]);
    SentenceText s;
    s.id = "s" + std::to_string(i + 1);
    if (words.source.empty() || (words.target && words.target->empty())) {
      fail(ErrorKind::input, "sentence " + s.id + " has an empty side");
    }
    s.source = std::move(words.source);
    s.target = std::move(words.target);
    if (pos_text) {
      SplitLine tags = split_line(pos_lines[i]);
      if (tags.source.size() != s.source.size() ||
          tags.target.has_value() != s.target.has_value() ||
          (tags.target && tags.target->size() != s.target->size())) {
        fail(ErrorKind::input, "POS tags for " + s.id + " do not align with its tokens");
      }
      s.source_pos = std::move(tags.source);
      s.target_pos = std::move(tags.target);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Vocabulary Vocabulary::build(std::span<const SentenceText> sentences) {
  Vocabulary v;
  auto add = [&v](const std::string& w) {
    if (v.index_.emplace(w, static_cast<int>(v.words_.size())).second) v.words_.push_back(w);
  };
  for (const SentenceText& s : sentences) {
    for (const auto& w : s.source) add(w);
    if (s.target) {
      for (const auto& w : *s.target) add(w);
    }
  }
  return v;
}

int Vocabulary::id(const std::string& word) const {
  const auto it = index_.find(word);
  if (it == index_.end()) fail(ErrorKind::input, "word '" + word + "' is not in the vocabulary");
  return it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

SentenceEntry run_sentence(const SentenceText& sentence, const Vocabulary& vocab,
                           const WeightSet& weights, bool keep_vectors) {
  SentenceEntry entry;
  entry.id = sentence.id;
  entry.source_tokens = sentence.source;
  entry.source_pos = sentence.source_pos ? *sentence.source_pos : fallback_pos_tag(sentence.source);
  const int n_layers = weights.config.n_layers;

  const std::vector<int> source_ids = vocab.encode(sentence.source);
  EncoderResult enc = encoder_forward(source_ids, weights, sentence.id);
  attach(entry, std::move(enc.records), n_layers, keep_vectors);

  if (sentence.target) {
    entry.target_tokens = *sentence.target;
    entry.target_pos =
        sentence.target_pos ? *sentence.target_pos : fallback_pos_tag(*sentence.target);
    const std::vector<int> target_ids = vocab.encode(*sentence.target);
    DecoderResult dec = decoder_forward(target_ids, enc.states, weights, sentence.id);
    attach(entry, std::move(dec.self_records), n_layers, keep_vectors);
    attach(entry, std::move(dec.cross_records), n_layers, keep_vectors);
  }
  return entry;
}

CorpusStore generate_corpus(std::span<const SentenceText> sentences, const Vocabulary& vocab,
                            const WeightSet& weights, const GenerateOptions& options) {
  ModelInfo model;
  model.n_layers = weights.config.n_layers;
  model.n_heads = weights.config.n_heads;
  model.d_model = weights.config.d_model;
  model.attn_types.push_back(AttnType::encoder_self);
  bool any_target = false;
  std::vector<SentenceEntry> entries;
  entries.reserve(sentences.size());
  for (const SentenceText& s : sentences) {
    any_target = any_target || s.target.has_value();
    entries.push_back(run_sentence(s, vocab, weights, options.keep_vectors));
  }
  if (any_target) {
    model.attn_types.push_back(AttnType::decoder_self);
    model.attn_types.push_back(AttnType::encoder_decoder);
  }
  return CorpusStore::assemble(std::move(model), std::move(entries), options.provenance);
}

}  // namespace attn_atlas
