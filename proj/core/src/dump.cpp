#include "attn_atlas/dump.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "attn_atlas/pos_tagger.hpp"
#include "json_util.hpp"

namespace attn_atlas {
namespace {

using nlohmann::json;

Violation violation(std::string kind, std::string detail, std::string sentence_id = {}) {
  Violation v;
  v.kind = std::move(kind);
  v.detail = std::move(detail);
  v.sentence_id = std::move(sentence_id);
  return v;
}

Violation record_violation(const AttentionRecord& rec, std::string kind, std::string detail) {
  Violation v = violation(std::move(kind), std::move(detail), rec.sentence_id);
  v.attn_type = std::string(to_string(rec.type));
  v.layer = rec.layer;
  v.head = rec.head;
  return v;
}

bool needs_target(AttnType type) { return type != AttnType::encoder_self; }

std::optional<std::vector<std::string>> string_list(const json& value) {
  if (!value.is_array()) return std::nullopt;
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_string()) return std::nullopt;
    out.push_back(item.get<std::string>());
  }
  return out;
}

void warn_unknown(const json& obj, std::initializer_list<const char*> known,
                  const std::string& where, ValidationReport& report) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) ==
        known.end()) {
      report.warnings.push_back("unknown field '" + key + "' in " + where + " ignored");
    }
  }
}

struct ParsedDump {
  ModelInfo model;
  std::vector<SentenceEntry> sentences;
  std::string provenance;
};

bool positive_int(const json& obj, const char* key, int& out) {
  if (!obj.contains(key) || !obj[key].is_number_integer()) return false;
  const auto v = obj[key].get<long long>();
  if (v <= 0 || v > 1'000'000) return false;
  out = static_cast<int>(v);
  return true;
}

std::optional<ModelInfo> parse_model(const json& model, ValidationReport& report) {
  if (!model.is_object()) {
    report.errors.push_back(violation("structure", "'model' must be an object"));
    return std::nullopt;
  }
  warn_unknown(model, {"n_layers", "n_heads", "d_model", "attn_types"}, "model", report);
  ModelInfo info;
  bool ok = true;
  for (auto [key, slot] : {std::pair{"n_layers", &info.n_layers},
                           std::pair{"n_heads", &info.n_heads},
                           std::pair{"d_model", &info.d_model}}) {
    if (!positive_int(model, key, *slot)) {
      report.errors.push_back(
          violation("structure", std::string("model.") + key + " must be a positive integer"));
      ok = false;
    }
  }
  if (!model.contains("attn_types") || !model["attn_types"].is_array()) {
    report.errors.push_back(violation("structure", "model.attn_types must be an array"));
    ok = false;
  } else {
    for (const auto& t : model["attn_types"]) {
      const auto parsed = t.is_string() ? parse_attn_type(t.get<std::string>()) : std::nullopt;
      if (!parsed) {
        report.errors.push_back(
            violation("structure", "model.attn_types has unknown entry " + t.dump()));
        ok = false;
      } else if (std::find(info.attn_types.begin(), info.attn_types.end(), *parsed) ==
                 info.attn_types.end()) {
        info.attn_types.push_back(*parsed);
      }
    }
  }
  if (!ok) return std::nullopt;
  return info;
}

// Parses attention[type] or vectors[type] as a [layer][head] nest.
template <typename Leaf>
bool parse_stack(const json& nest, const std::string& where, const std::string& sid,
                 ValidationReport& report, Leaf&& leaf) {
  if (!nest.is_array()) {
    report.errors.push_back(violation("structure", where + " must be a [layer][head] array", sid));
    return false;
  }
  bool ok = true;
  for (std::size_t l = 0; l < nest.size(); ++l) {
    if (!nest[l].is_array()) {
      report.errors.push_back(violation(
          "structure", where + " layer " + std::to_string(l + 1) + " must be an array", sid));
      ok = false;
      continue;
    }
    for (std::size_t h = 0; h < nest[l].size(); ++h) {
      ok = leaf(static_cast<int>(l) + 1, static_cast<int>(h) + 1, nest[l][h]) && ok;
    }
  }
  return ok;
}

std::optional<SentenceEntry> parse_sentence(const json& s, std::size_t index,
                                            ValidationReport& report) {
  const std::string where = "sentences[" + std::to_string(index) + "]";
  if (!s.is_object()) {
    report.errors.push_back(violation("structure", where + " must be an object"));
    return std::nullopt;
  }
  warn_unknown(s,
               {"id", "source_tokens", "target_tokens", "source_pos", "target_pos", "attention",
                "vectors"},
               where, report);
  SentenceEntry entry;
  if (!s.contains("id") || !s["id"].is_string()) {
    report.errors.push_back(violation("structure", where + ".id must be a string"));
    return std::nullopt;
  }
  entry.id = s["id"].get<std::string>();
  const std::string& sid = entry.id;
  bool ok = true;

  auto tokens = s.contains("source_tokens") ? string_list(s["source_tokens"]) : std::nullopt;
  if (!tokens) {
    report.errors.push_back(violation("structure", "source_tokens must be a string array", sid));
    ok = false;
  } else {
    entry.source_tokens = std::move(*tokens);
  }
  for (auto [key, slot] : {std::pair{"target_tokens", &entry.target_tokens},
                           std::pair{"source_pos", &entry.source_pos},
                           std::pair{"target_pos", &entry.target_pos}}) {
    if (!s.contains(key)) continue;
    auto list = string_list(s[key]);
    if (!list) {
      report.errors.push_back(
          violation("structure", std::string(key) + " must be a string array", sid));
      ok = false;
    } else {
      *slot = std::move(*list);
    }
  }

  if (!s.contains("attention") || !s["attention"].is_object()) {
    report.errors.push_back(violation("structure", "attention must be an object", sid));
    return std::nullopt;
  }
  for (const auto& [name, nest] : s["attention"].items()) {
    const auto type = parse_attn_type(name);
    if (!type) {
      report.errors.push_back(violation("structure", "unknown attention type '" + name + "'", sid));
      ok = false;
      continue;
    }
    LayerStack stack(nest.is_array() ? nest.size() : 0);
    ok = parse_stack(nest, "attention." + name, sid, report,
                     [&](int layer, int head, const json& rows) {
                       AttentionRecord rec;
                       rec.sentence_id = sid;
                       rec.type = *type;
                       rec.layer = layer;
                       rec.head = head;
                       std::string problem;
                       auto m = detail::rows_to_matrix(rows, problem);
                       if (!m) {
                         Violation v = record_violation(rec, "structure", problem);
                         report.errors.push_back(std::move(v));
                         return false;
                       }
                       rec.weights = std::move(*m);
                       stack[layer - 1].push_back(std::move(rec));
                       return true;
                     }) &&
         ok;
    entry.attention.emplace(*type, std::move(stack));
  }

  if (s.contains("vectors")) {
    if (!s["vectors"].is_object()) {
      report.errors.push_back(violation("structure", "vectors must be an object", sid));
      return std::nullopt;
    }
    for (const auto& [name, nest] : s["vectors"].items()) {
      const auto type = parse_attn_type(name);
      if (!type || !entry.has_type(*type)) {
        report.errors.push_back(violation(
            "structure", "vectors." + name + " has no matching attention section", sid));
        ok = false;
        continue;
      }
      LayerStack& stack = entry.attention[*type];
      ok = parse_stack(nest, "vectors." + name, sid, report,
                       [&](int layer, int head, const json& qk) {
                         const bool in_range =
                             layer <= static_cast<int>(stack.size()) &&
                             head <= static_cast<int>(stack[layer - 1].size());
                         if (!in_range) {
                           Violation v = violation("dimension",
                                                   "vectors." + name + " has more heads or "
                                                   "layers than attention." + name, sid);
                           v.attn_type = name;
                           v.layer = layer;
                           v.head = head;
                           report.errors.push_back(std::move(v));
                           return false;
                         }
                         AttentionRecord& rec = stack[layer - 1][head - 1];
                         if (!qk.is_object() || !qk.contains("queries") || !qk.contains("keys")) {
                           report.errors.push_back(record_violation(
                               rec, "structure", "vector entry needs 'queries' and 'keys'"));
                           return false;
                         }
                         std::string problem;
                         auto q = detail::rows_to_matrix(qk["queries"], problem);
                         auto k = q ? detail::rows_to_matrix(qk["keys"], problem) : std::nullopt;
                         if (!q || !k) {
                           report.errors.push_back(record_violation(rec, "structure", problem));
                           return false;
                         }
                         rec.queries = std::move(*q);
                         rec.keys = std::move(*k);
                         return true;
                       }) &&
           ok;
    }
  }
  if (!ok) return std::nullopt;
  return entry;
}

std::optional<ParsedDump> parse_document(const json& doc, ValidationReport& report) {
  if (!doc.is_object()) {
    report.errors.push_back(violation("structure", "dump must be a JSON object"));
    return std::nullopt;
  }
  warn_unknown(doc, {"version", "provenance", "model", "sentences"}, "dump", report);
  if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1) {
    report.errors.push_back(violation("structure", "version must be the integer 1"));
    return std::nullopt;
  }
  ParsedDump parsed;
  if (doc.contains("provenance")) {
    if (doc["provenance"].is_string()) {
      parsed.provenance = doc["provenance"].get<std::string>();
    } else {
      report.warnings.push_back("non-string provenance ignored");
    }
  }
  std::optional<ModelInfo> model;
  if (doc.contains("model")) {
    model = parse_model(doc["model"], report);
  } else {
    report.errors.push_back(violation("structure", "'model' section is missing"));
  }
  if (!doc.contains("sentences") || !doc["sentences"].is_array()) {
    report.errors.push_back(violation("structure", "'sentences' must be an array"));
    return std::nullopt;
  }
  if (!model) return std::nullopt;
  parsed.model = std::move(*model);

  bool ok = true;
  const json& sentences = doc["sentences"];
  parsed.sentences.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto entry = parse_sentence(sentences[i], i, report);
    if (entry) {
      parsed.sentences.push_back(std::move(*entry));
    } else {
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return parsed;
}

void check_record(const AttentionRecord& rec, Eigen::Index t_q, Eigen::Index t_k,
                  ValidationReport& report) {
  const Matrix& a = rec.weights;
  if (a.rows() != t_q || a.cols() != t_k) {
    std::ostringstream os;
    os << "attention is " << a.rows() << "x" << a.cols() << ", expected " << t_q << "x" << t_k;
    report.errors.push_back(record_violation(rec, "dimension", os.str()));
    return;
  }
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      sum += v;
      if (!std::isfinite(v) || v < -kIngestEntryTolerance || v > 1.0 + kIngestEntryTolerance) {
        Violation bad = record_violation(rec, "entry_range", "entry outside [0, 1]");
        bad.row = static_cast<int>(i);
        bad.col = static_cast<int>(j);
        bad.measured = v;
        report.errors.push_back(std::move(bad));
      }
      if (rec.type == AttnType::decoder_self && j > i && std::abs(v) > kIngestEntryTolerance) {
        Violation bad = record_violation(rec, "causal", "decoder self-attention looks ahead");
        bad.row = static_cast<int>(i);
        bad.col = static_cast<int>(j);
        bad.measured = v;
        report.errors.push_back(std::move(bad));
      }
    }
    if (!(std::abs(sum - 1.0) <= kIngestRowSumTolerance)) {
      std::ostringstream os;
      os << "row sums to " << sum << " (deviation " << std::abs(sum - 1.0) << " > "
         << kIngestRowSumTolerance << ")";
      Violation bad = record_violation(rec, "row_sum", os.str());
      bad.row = static_cast<int>(i);
      bad.measured = sum;
      report.errors.push_back(std::move(bad));
    }
  }
  if (rec.has_vectors()) {
    if (rec.queries.rows() != t_q || rec.keys.rows() != t_k ||
        rec.queries.cols() != rec.keys.cols() || rec.queries.cols() == 0) {
      std::ostringstream os;
      os << "queries " << rec.queries.rows() << "x" << rec.queries.cols() << " / keys "
         << rec.keys.rows() << "x" << rec.keys.cols() << " do not fit " << t_q << "x" << t_k;
      report.errors.push_back(record_violation(rec, "dimension", os.str()));
    }
  }
}

void check_pos(const std::optional<std::vector<std::string>>& tags,
               const std::optional<std::vector<std::string>>& tokens, const char* side,
               const std::string& sid, ValidationReport& report) {
  if (!tags) return;
  const std::size_t n_tokens = tokens ? tokens->size() : 0;
  if (tags->size() != n_tokens) {
    Violation v = violation("pos_alignment",
                            std::string(side) + "_pos has " + std::to_string(tags->size()) +
                                " tags for " + std::to_string(n_tokens) + " tokens",
                            sid);
    v.measured = static_cast<double>(tags->size());
    report.errors.push_back(std::move(v));
  }
  for (const auto& tag : *tags) {
    if (!is_universal_pos(tag)) {
      report.warnings.push_back("sentence " + sid + ": tag '" + tag +
                                "' is not a universal POS tag");
      break;
    }
  }
}

}  // namespace

std::span<const AttentionRecord> SentenceEntry::layer(AttnType type, int layer) const {
  const auto it = attention.find(type);
  if (it == attention.end()) {
    fail(ErrorKind::range, "sentence " + id + " has no " + std::string(to_string(type)) +
                               " attention");
  }
  if (layer < 1 || layer > static_cast<int>(it->second.size())) {
    fail(ErrorKind::range, "layer " + std::to_string(layer) + " out of range 1.." +
                               std::to_string(it->second.size()));
  }
  return it->second[layer - 1];
}

const AttentionRecord& SentenceEntry::record(AttnType type, int layer, int head) const {
  const auto heads = this->layer(type, layer);
  if (head < 1 || head > static_cast<int>(heads.size())) {
    fail(ErrorKind::range,
         "head " + std::to_string(head) + " out of range 1.." + std::to_string(heads.size()));
  }
  return heads[head - 1];
}

const std::vector<std::string>& SentenceEntry::query_tokens(AttnType type) const {
  if (type == AttnType::encoder_self) return source_tokens;
  if (!target_tokens) fail(ErrorKind::unavailable, "sentence " + id + " has no target side");
  return *target_tokens;
}

const std::vector<std::string>& SentenceEntry::key_tokens(AttnType type) const {
  if (type == AttnType::decoder_self) return query_tokens(type);
  return source_tokens;
}

ValidationFailure::ValidationFailure(ValidationReport report)
    : Error(ErrorKind::validation,
            "dump rejected with " + std::to_string(report.errors.size()) + " error(s)" +
                (report.errors.empty() ? std::string()
                                       : ": " + report.errors.front().kind + ": " +
                                             report.errors.front().detail)),
      report_(std::move(report)) {}

CorpusStore CorpusStore::assemble(ModelInfo model, std::vector<SentenceEntry> sentences,
                                  std::string provenance) {
  ValidationReport report = validate_entries(model, sentences);
  if (!report.accepted()) throw ValidationFailure(std::move(report));
  CorpusStore store;
  store.model_ = std::move(model);
  store.sentences_ = std::move(sentences);
  store.provenance_ = std::move(provenance);
  return store;
}

const SentenceEntry* CorpusStore::find(std::string_view id) const {
  const auto it = std::find_if(sentences_.begin(), sentences_.end(),
                               [&](const SentenceEntry& s) { return s.id == id; });
  return it == sentences_.end() ? nullptr : &*it;
}

const SentenceEntry& CorpusStore::at(std::string_view id) const {
  const SentenceEntry* s = find(id);
  if (!s) fail(ErrorKind::range, "unknown sentence id '" + std::string(id) + "'");
  return *s;
}

ValidationReport validate_entries(const ModelInfo& model,
                                  std::span<const SentenceEntry> sentences) {
  ValidationReport report;
  if (model.n_layers <= 0 || model.n_heads <= 0 || model.d_model <= 0) {
    report.errors.push_back(
        violation("metadata", "n_layers, n_heads and d_model must be positive"));
    return report;
  }
  std::set<std::string> seen;
  for (const SentenceEntry& s : sentences) {
    if (!seen.insert(s.id).second) {
      report.errors.push_back(violation("duplicate_id", "sentence id appears twice", s.id));
    }
    if (s.source_tokens.empty()) {
      report.errors.push_back(violation("dimension", "source_tokens is empty", s.id));
    }
    if (s.target_tokens && s.target_tokens->empty()) {
      report.errors.push_back(violation("dimension", "target_tokens is empty", s.id));
    }
    check_pos(s.source_pos, s.source_tokens, "source", s.id, report);
    check_pos(s.target_pos, s.target_tokens, "target", s.id, report);

    for (const auto& [type, stack] : s.attention) {
      const std::string tname(to_string(type));
      if (std::find(model.attn_types.begin(), model.attn_types.end(), type) ==
          model.attn_types.end()) {
        report.errors.push_back(
            violation("metadata", tname + " is not listed in model.attn_types", s.id));
        continue;
      }
      if (needs_target(type) && !s.target_tokens) {
        report.errors.push_back(
            violation("dimension", tname + " attention requires target_tokens", s.id));
        continue;
      }
      if (static_cast<int>(stack.size()) != model.n_layers) {
        Violation v = violation("dimension",
                                tname + " has " + std::to_string(stack.size()) +
                                    " layers, model declares " + std::to_string(model.n_layers),
                                s.id);
        v.attn_type = tname;
        v.measured = static_cast<double>(stack.size());
        report.errors.push_back(std::move(v));
        continue;
      }
      const auto t_q = static_cast<Eigen::Index>(s.query_tokens(type).size());
      const auto t_k = static_cast<Eigen::Index>(s.key_tokens(type).size());
      std::size_t with_vectors = 0;
      std::size_t total = 0;
      for (std::size_t l = 0; l < stack.size(); ++l) {
        if (static_cast<int>(stack[l].size()) != model.n_heads) {
          Violation v = violation("dimension",
                                  tname + " layer has " + std::to_string(stack[l].size()) +
                                      " heads, model declares " + std::to_string(model.n_heads),
                                  s.id);
          v.attn_type = tname;
          v.layer = static_cast<int>(l) + 1;
          v.measured = static_cast<double>(stack[l].size());
          report.errors.push_back(std::move(v));
          continue;
        }
        for (const AttentionRecord& rec : stack[l]) {
          check_record(rec, t_q, t_k, report);
          with_vectors += rec.has_vectors() ? 1 : 0;
          ++total;
        }
      }
      if (with_vectors != 0 && with_vectors != total) {
        Violation v = violation("dimension",
                                tname + " carries vectors for only some heads", s.id);
        v.attn_type = tname;
        v.measured = static_cast<double>(with_vectors);
        report.errors.push_back(std::move(v));
      }
    }
  }
  return report;
}

ValidationReport validate_dump(const json& document) {
  ValidationReport report;
  auto parsed = parse_document(document, report);
  if (!parsed) return report;
  ValidationReport numeric = validate_entries(parsed->model, parsed->sentences);
  report.errors.insert(report.errors.end(), numeric.errors.begin(), numeric.errors.end());
  report.warnings.insert(report.warnings.end(), numeric.warnings.begin(),
                         numeric.warnings.end());
  return report;
}

CorpusStore ingest_dump(const json& document) {
  ValidationReport report;
  auto parsed = parse_document(document, report);
  if (!parsed) throw ValidationFailure(std::move(report));
  ValidationReport numeric = validate_entries(parsed->model, parsed->sentences);
  if (!numeric.accepted()) {
    numeric.warnings.insert(numeric.warnings.begin(), report.warnings.begin(),
                            report.warnings.end());
    throw ValidationFailure(std::move(numeric));
  }
  return CorpusStore::assemble(std::move(parsed->model), std::move(parsed->sentences),
                               std::move(parsed->provenance));
}

json export_dump(const CorpusStore& store) {
  json doc;
  doc["version"] = 1;
  if (!store.provenance().empty()) doc["provenance"] = store.provenance();
  const ModelInfo& m = store.model();
  json types = json::array();
  for (AttnType t : m.attn_types) types.push_back(std::string(to_string(t)));
  doc["model"] = {{"n_layers", m.n_layers},
                  {"n_heads", m.n_heads},
                  {"d_model", m.d_model},
                  {"attn_types", std::move(types)}};
  json sentences = json::array();
  for (const SentenceEntry& s : store.sentences()) {
    json out;
    out["id"] = s.id;
    out["source_tokens"] = s.source_tokens;
    if (s.target_tokens) out["target_tokens"] = *s.target_tokens;
    if (s.source_pos) out["source_pos"] = *s.source_pos;
    if (s.target_pos) out["target_pos"] = *s.target_pos;
    json attention = json::object();
    json vectors = json::object();
    for (const auto& [type, stack] : s.attention) {
      json layers = json::array();
      json vlayers = json::array();
      bool any_vectors = false;
      for (const auto& heads : stack) {
        json hs = json::array();
        json vs = json::array();
        for (const AttentionRecord& rec : heads) {
          hs.push_back(detail::matrix_to_rows(rec.weights));
          if (rec.has_vectors()) {
            any_vectors = true;
            vs.push_back({{"queries", detail::matrix_to_rows(rec.queries)},
                          {"keys", detail::matrix_to_rows(rec.keys)}});
          }
        }
        layers.push_back(std::move(hs));
        vlayers.push_back(std::move(vs));
      }
      const std::string name(to_string(type));
      attention[name] = std::move(layers);
      if (any_vectors) vectors[name] = std::move(vlayers);
    }
    out["attention"] = std::move(attention);
    if (!vectors.empty()) out["vectors"] = std::move(vectors);
    sentences.push_back(std::move(out));
  }
  doc["sentences"] = std::move(sentences);
  return doc;
}

CorpusStore merge_stores(const CorpusStore& base, const CorpusStore& incoming) {
  const ModelInfo& a = base.model();
  const ModelInfo& b = incoming.model();
  ModelInfo merged;
  if (a.n_layers == 0) {
    merged = b;
  } else if (b.n_layers == 0) {
    merged = a;
  } else {
    if (a.n_layers != b.n_layers || a.n_heads != b.n_heads || a.d_model != b.d_model) {
      std::ostringstream os;
      os << "model metadata conflict: (L=" << a.n_layers << ", h=" << a.n_heads
         << ", d_model=" << a.d_model << ") vs (L=" << b.n_layers << ", h=" << b.n_heads
         << ", d_model=" << b.d_model << ")";
      fail(ErrorKind::conflict, os.str());
    }
    merged = a;
    for (AttnType t : kAllAttnTypes) {
      const bool in_a = std::find(a.attn_types.begin(), a.attn_types.end(), t) != a.attn_types.end();
      const bool in_b = std::find(b.attn_types.begin(), b.attn_types.end(), t) != b.attn_types.end();
      if (in_b && !in_a) merged.attn_types.push_back(t);
    }
  }
  std::vector<SentenceEntry> sentences(base.sentences().begin(), base.sentences().end());
  for (const SentenceEntry& s : incoming.sentences()) {
    if (base.find(s.id)) fail(ErrorKind::conflict, "sentence id '" + s.id + "' already loaded");
    sentences.push_back(s);
  }
  std::string provenance = base.provenance();
  if (!incoming.provenance().empty()) {
    provenance += provenance.empty() ? incoming.provenance() : "; " + incoming.provenance();
  }
  return CorpusStore::assemble(std::move(merged), std::move(sentences), std::move(provenance));
}

json report_to_json(const ValidationReport& report) {
  json errors = json::array();
  for (const Violation& v : report.errors) {
    json e = {{"kind", v.kind}, {"detail", v.detail}, {"measured", v.measured}};
    if (!v.sentence_id.empty()) e["sentence_id"] = v.sentence_id;
    if (!v.attn_type.empty()) e["attn_type"] = v.attn_type;
    if (v.layer > 0) e["layer"] = v.layer;
    if (v.head > 0) e["head"] = v.head;
    if (v.row >= 0) e["row"] = v.row;
    if (v.col >= 0) e["col"] = v.col;
    errors.push_back(std::move(e));
  }
  return {{"accepted", report.accepted()},
          {"errors", std::move(errors)},
          {"warnings", report.warnings}};
}

}  // namespace attn_atlas
