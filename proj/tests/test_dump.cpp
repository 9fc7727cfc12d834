#include <algorithm>

#include <doctest.h>

#include "attn_atlas/corpus_builder.hpp"
#include "attn_atlas/dump.hpp"
#include "attn_atlas/dump_io.hpp"
#include "attn_atlas/pos_tagger.hpp"
#include "fixtures.hpp"

using namespace attn_atlas;
using nlohmann::json;

namespace {

const Violation* find_kind(const ValidationReport& report, const std::string& kind) {
  for (const Violation& v : report.errors)
    if (v.kind == kind) return &v;
  return nullptr;
}

json small_dump() {
  static const json doc = export_dump(fixture::corpus());
  return doc;
}

// Moves 0.02 of row `row`'s mass out of the matrix so the row sums to 0.98.
void shrink_row(json& matrix, std::size_t row) {
  json& r = matrix[row];
  const auto it = std::max_element(r.begin(), r.end(), [](const json& a, const json& b) {
    return a.get<double>() < b.get<double>();
  });
  *it = it->get<double>() - 0.02;
}

}  // namespace

TEST_CASE("generated fixture validates cleanly") {
  const json doc = small_dump();
  const ValidationReport report = validate_dump(doc);
  CHECK(report.accepted());
  CHECK(report.warnings.empty());
  CHECK(doc["version"] == 1);
  CHECK(doc["provenance"] == "fixture");
  CHECK(doc["model"]["n_layers"] == 4);
  CHECK(doc["model"]["attn_types"].size() == 3);
  CHECK(doc["sentences"].size() == 6);
  CHECK(doc["sentences"][0]["id"] == "s1");
}

TEST_CASE("export and ingest round-trip without loss") {
  const CorpusStore store = fixture::corpus();
  const json first = export_dump(store);
  const CorpusStore back = ingest_dump(json::parse(first.dump()));
  CHECK(back.model() == store.model());
  CHECK(back.provenance() == store.provenance());
  REQUIRE(back.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const SentenceEntry& a = store.sentences()[i];
    const SentenceEntry& b = back.sentences()[i];
    CHECK(a.id == b.id);
    CHECK(a.source_tokens == b.source_tokens);
    CHECK(a.target_tokens == b.target_tokens);
    CHECK(a.source_pos == b.source_pos);
    CHECK(a.target_pos == b.target_pos);
    for (AttnType type : kAllAttnTypes) {
      for (int l = 1; l <= 4; ++l)
        for (int h = 1; h <= 8; ++h) {
          const auto& ra = a.record(type, l, h);
          const auto& rb = b.record(type, l, h);
          CHECK((ra.weights.array() == rb.weights.array()).all());
          CHECK((ra.queries.array() == rb.queries.array()).all());
          CHECK((ra.keys.array() == rb.keys.array()).all());
        }
    }
  }
  CHECK(export_dump(back).dump() == first.dump());
}

TEST_CASE("row sums outside tolerance are located") {
  json doc = small_dump();
  shrink_row(doc["sentences"][1]["attention"]["encoder_self"][2][5], 3);
  const ValidationReport report = validate_dump(doc);
  CHECK_FALSE(report.accepted());
  const Violation* v = find_kind(report, "row_sum");
  REQUIRE(v != nullptr);
  CHECK(v->sentence_id == "s2");
  CHECK(v->attn_type == "encoder_self");
  CHECK(v->layer == 3);
  CHECK(v->head == 6);
  CHECK(v->row == 3);
  CHECK(v->measured == doctest::Approx(0.98).epsilon(1e-9));
  CHECK_THROWS_AS(ingest_dump(doc), ValidationFailure);
}

TEST_CASE("causal violations are located") {
  json doc = small_dump();
  json& m = doc["sentences"][0]["attention"]["decoder_self"][0][0];
  // Keep row 1 stochastic while leaking mass to a future position.
  const double moved = m[1][0].get<double>() / 2.0;
  m[1][0] = m[1][0].get<double>() - moved;
  m[1][4] = moved;
  const ValidationReport report = validate_dump(doc);
  const Violation* v = find_kind(report, "causal");
  REQUIRE(v != nullptr);
  CHECK(v->sentence_id == "s1");
  CHECK(v->attn_type == "decoder_self");
  CHECK(v->layer == 1);
  CHECK(v->head == 1);
  CHECK(v->row == 1);
  CHECK(v->col == 4);
  CHECK(find_kind(report, "row_sum") == nullptr);
}

TEST_CASE("other malformed dumps") {
  SUBCASE("negative entry") {
    json doc = small_dump();
    json& row = doc["sentences"][2]["attention"]["encoder_self"][0][0][0];
    row[0] = row[0].get<double>() + 0.1;
    row[1] = row[1].get<double>() - 0.1;
    if (row[1].get<double>() >= 0.0) row[1] = -0.01;
    CHECK(find_kind(validate_dump(doc), "entry_range") != nullptr);
  }
  SUBCASE("shape mismatch") {
    json doc = small_dump();
    doc["sentences"][0]["attention"]["encoder_self"][0][0].erase(0);
    CHECK(find_kind(validate_dump(doc), "dimension") != nullptr);
  }
  SUBCASE("too few heads") {
    json doc = small_dump();
    doc["sentences"][0]["attention"]["encoder_self"][1].erase(7);
    CHECK(find_kind(validate_dump(doc), "dimension") != nullptr);
  }
  SUBCASE("misaligned POS") {
    json doc = small_dump();
    doc["sentences"][0]["source_pos"].erase(0);
    CHECK(find_kind(validate_dump(doc), "pos_alignment") != nullptr);
  }
  SUBCASE("duplicate ids") {
    json doc = small_dump();
    doc["sentences"][1]["id"] = "s1";
    CHECK(find_kind(validate_dump(doc), "duplicate_id") != nullptr);
  }
  SUBCASE("missing model section") {
    json doc = small_dump();
    doc.erase("model");
    CHECK_FALSE(validate_dump(doc).accepted());
  }
  SUBCASE("unknown version") {
    json doc = small_dump();
    doc["version"] = 2;
    CHECK_FALSE(validate_dump(doc).accepted());
  }
  SUBCASE("not an object") {
    CHECK_FALSE(validate_dump(json::array()).accepted());
  }
  SUBCASE("vector rows must match tokens") {
    json doc = small_dump();
    doc["sentences"][0]["vectors"]["encoder_self"][0][0]["queries"].erase(0);
    CHECK(find_kind(validate_dump(doc), "dimension") != nullptr);
  }
}

TEST_CASE("small rounding noise is tolerated") {
  json doc = small_dump();
  json& row = doc["sentences"][0]["attention"]["encoder_self"][0][0][0];
  row[0] = row[0].get<double>() + 5e-5;
  CHECK(validate_dump(doc).accepted());
}

TEST_CASE("dumps without optional sections") {
  const CorpusStore bare = fixture::corpus(0, false);
  json doc = export_dump(bare);
  CHECK_FALSE(doc["sentences"][0].contains("vectors"));
  doc["sentences"][0].erase("source_pos");
  doc["sentences"][0].erase("target_pos");
  doc.erase("provenance");
  const CorpusStore store = ingest_dump(doc);
  CHECK_FALSE(store.sentences()[0].source_pos.has_value());
  CHECK_FALSE(store.sentences()[0].record(AttnType::encoder_self, 1, 1).has_vectors());
  CHECK(store.provenance().empty());
}

TEST_CASE("merging stores") {
  const CorpusStore a = fixture::corpus();
  const CorpusStore merged = merge_stores(CorpusStore{}, a);
  CHECK(merged.size() == 6);
  CHECK(merged.model() == a.model());

  try {
    merge_stores(a, a);
    FAIL("expected a conflict");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::conflict);
  }

  json other = export_dump(a);
  other["model"]["n_heads"] = 4;
  for (auto& s : other["sentences"]) {
    for (auto& layers : s["attention"])
      for (auto& heads : layers) heads.erase(heads.begin() + 4, heads.end());
    s.erase("vectors");
    s["id"] = "x" + s["id"].get<std::string>();
  }
  other["model"]["d_model"] = 64;
  const CorpusStore narrower = ingest_dump(other);
  CHECK_THROWS_AS(merge_stores(a, narrower), Error);
}

TEST_CASE("store lookups") {
  const CorpusStore store = fixture::corpus();
  CHECK(store.find("s3") != nullptr);
  CHECK(store.find("zz") == nullptr);
  CHECK_THROWS_AS(store.at("zz"), Error);
  const SentenceEntry& s = store.at("s1");
  CHECK(s.query_tokens(AttnType::encoder_decoder) == *s.target_tokens);
  CHECK(s.key_tokens(AttnType::encoder_decoder) == s.source_tokens);
  CHECK_THROWS_AS(s.layer(AttnType::encoder_self, 0), Error);
  CHECK_THROWS_AS(s.layer(AttnType::encoder_self, 5), Error);
  CHECK_THROWS_AS(s.record(AttnType::encoder_self, 1, 9), Error);
}

TEST_CASE("file persistence with and without gzip") {
  fixture::TempDir dir;
  const CorpusStore store = fixture::corpus();
  const json doc = export_dump(store);
  write_json_file(dir / "corpus.json", doc);
  write_json_file(dir / "corpus.json.gz", doc);
  const std::string plain = fixture::read_file(dir / "corpus.json");
  const std::string packed = fixture::read_file(dir / "corpus.json.gz");
  CHECK(static_cast<unsigned char>(packed[0]) == 0x1f);
  CHECK(static_cast<unsigned char>(packed[1]) == 0x8b);
  CHECK(packed.size() < plain.size());
  CHECK(read_json_file(dir / "corpus.json") == doc);
  CHECK(read_json_file(dir / "corpus.json.gz") == doc);
  CHECK(load_corpus(dir / "corpus.json.gz").size() == 6);
  CHECK_FALSE(std::filesystem::exists(dir / "corpus.json.tmp"));
  CHECK(gzip_decompress(gzip_compress("hello")) == "hello");
  CHECK_THROWS_AS(read_json_file(dir / "missing.json"), Error);
  CHECK_THROWS_AS(parse_document_bytes("{not json"), Error);
}

TEST_CASE("fallback POS tagger") {
  const std::vector<std::string> tokens{"The", "cat", "is", "not", "on", "2", "mats", ",",
                                        "and", "<s>", "she"};
  const auto tags = fallback_pos_tag(tokens);
  const std::vector<std::string> expected{"DET", "NOUN", "AUX", "PART", "ADP", "NUM",
                                          "NOUN", "PUNCT", "CCONJ", "X", "PRON"};
  CHECK(tags == expected);
  for (const auto& t : tags) CHECK(is_universal_pos(t));
  CHECK_FALSE(is_universal_pos("NN"));
}

TEST_CASE("sentence text parsing") {
  const auto sentences = parse_sentence_text("a b ||| c d e\n\n  f g  \n");
  REQUIRE(sentences.size() == 2);
  CHECK(sentences[0].id == "s1");
  CHECK(sentences[0].target.value().size() == 3);
  CHECK(sentences[1].id == "s2");
  CHECK(sentences[1].source == std::vector<std::string>{"f", "g"});
  CHECK_FALSE(sentences[1].target.has_value());
  CHECK_THROWS_AS(parse_sentence_text("a b\n", std::string_view("DET\n")), Error);
  const auto vocab = Vocabulary::build(sentences);
  CHECK(vocab.size() == 7);
  CHECK(vocab.id("c") == 2);
  CHECK_THROWS_AS(vocab.id("zzz"), Error);
}
