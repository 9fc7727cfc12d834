#include <cmath>
#include <random>

#include <doctest.h>

#include "attn_atlas/analytics.hpp"
#include "attn_atlas/errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace attn_atlas;

namespace {

AttentionRecord make_record(int head, Matrix weights) {
  AttentionRecord r;
  r.sentence_id = "t";
  r.type = AttnType::encoder_self;
  r.layer = 1;
  r.head = head;
  r.weights = std::move(weights);
  return r;
}

Matrix one_hot_bar(int t, int col) {
  Matrix m = Matrix::Zero(t, t);
  m.col(col).setOnes();
  return m;
}

Matrix shifted(int rows, int cols, int offset) {
  Matrix m = Matrix::Zero(rows, cols);
  for (int i = 0; i < rows; ++i) m(i, i + offset) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("entropy of reference matrices") {
  CHECK(std::abs(row_entropy_score(Matrix::Constant(4, 4, 0.25)) - std::log(4.0)) < 1e-12);
  CHECK(row_entropy_score(Matrix::Identity(4, 4)) == 0.0);
  CHECK(row_entropy_score(one_hot_bar(4, 0)) == 0.0);

  Matrix mixed(2, 2);
  mixed << 0.5, 0.5, 1.0, 0.0;
  CHECK(row_entropy_score(mixed) == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-14));

  SUBCASE("column axis") {
    CHECK(row_entropy_score(Matrix::Constant(4, 4, 0.25), EntropyAxis::columns) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
    // A bar: column 0 is uniform over 4 rows, other columns carry nothing.
    CHECK(row_entropy_score(one_hot_bar(4, 0), EntropyAxis::columns) ==
          doctest::Approx(std::log(4.0) / 4.0).epsilon(1e-14));
  }
  SUBCASE("bounds on random matrices") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
      const int cols = 2 + trial % 7;
      const double e = row_entropy_score(oracle::random_stochastic(rng, 5, cols));
      CHECK(e >= 0.0);
      CHECK(e <= std::log(static_cast<double>(cols)) + 1e-12);
    }
  }
  CHECK_THROWS_AS(row_entropy_score(Matrix::Constant(2, 2, 0.4)), Error);
}

TEST_CASE("position offset of reference matrices") {
  CHECK(position_offset_score(Matrix::Identity(5, 5)) == 0.0);
  CHECK(std::abs(position_offset_score(shifted(3, 4, 1)) - 1.0) < 1e-12);
  CHECK(std::abs(position_offset_score(one_hot_bar(3, 0)) + 1.0) < 1e-12);
  CHECK(position_offset_score(Matrix::Constant(3, 3, 1.0 / 3.0)) == doctest::Approx(0.0));

  SUBCASE("mirror sums to zero and value stays in range") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      const int t = 1 + trial % 8;
      const Matrix a = oracle::random_stochastic(rng, t, t, 3.0);
      const Matrix mirror = a.reverse();
      CHECK(std::abs(position_offset_score(a) + position_offset_score(mirror)) < 1e-12);
      CHECK(std::abs(position_offset_score(a)) <= t - 1 + 1e-12);
    }
  }
}

TEST_CASE("head sorting") {
  std::vector<AttentionRecord> layer{
      make_record(1, Matrix::Constant(4, 4, 0.25)),
      make_record(2, one_hot_bar(4, 0)),
      make_record(3, Matrix::Identity(4, 4)),
      make_record(4, shifted(4, 4, 0)),
  };
  const auto asc = sort_heads(layer, HeadMetric::entropy);
  REQUIRE(asc.size() == 4);
  // Zero-entropy heads keep their input order, the uniform head comes last.
  CHECK(asc[0].head == 2);
  CHECK(asc[1].head == 3);
  CHECK(asc[2].head == 4);
  CHECK(asc[3].head == 1);
  CHECK(asc[3].value == doctest::Approx(std::log(4.0)));
  CHECK(asc[0].layer == 1);

  const auto desc = sort_heads(layer, HeadMetric::entropy, SortDirection::descending);
  CHECK(desc[0].head == 1);
  CHECK(desc[1].head == 2);

  const auto pos = sort_heads(layer, HeadMetric::position);
  CHECK(pos[0].head == 2);  // leans to the past
  CHECK(pos[0].value == doctest::Approx(-1.5));

  std::vector<AttentionRecord> mixed = layer;
  mixed[1].layer = 2;
  CHECK_THROWS_AS(sort_heads(mixed, HeadMetric::entropy), Error);
  CHECK(parse_head_metric("position") == HeadMetric::position);
  CHECK(parse_sort_direction("desc") == SortDirection::descending);
  CHECK_FALSE(parse_sort_direction("down").has_value());
  CHECK(to_string(SortDirection::ascending) == "asc");
}

TEST_CASE("per-word histogram sums columns") {
  Matrix a(2, 3);
  a << 0.2, 0.3, 0.5, 1.0, 0.0, 0.0;
  std::vector<AttentionRecord> layer{make_record(1, a), make_record(2, Matrix::Constant(2, 3, 1.0 / 3.0))};
  const Matrix h = word_histogram(layer);
  REQUIRE(h.rows() == 3);
  REQUIRE(h.cols() == 2);
  CHECK(h(0, 0) == doctest::Approx(1.2));
  CHECK(h(1, 0) == doctest::Approx(0.3));
  CHECK(h(2, 1) == doctest::Approx(2.0 / 3.0));
  // Each head distributes one unit per query row.
  CHECK(h.col(0).sum() == doctest::Approx(2.0));
}

TEST_CASE("sankey flow") {
  const CorpusStore store = fixture::corpus();
  const SentenceEntry& s = store.at("s2");
  const int t = static_cast<int>(s.source_tokens.size());

  SUBCASE("incoming weights sum to one without pruning") {
    for (int l = 0; l < 4; ++l) {
      const auto edges = sankey_edges(s, AttnType::encoder_self, l, 0.0);
      CHECK(edges.size() == static_cast<std::size_t>(t * t));
      std::vector<double> incoming(static_cast<std::size_t>(t), 0.0);
      for (const auto& e : edges) {
        CHECK(e.from.layer == l);
        CHECK(e.to.layer == l + 1);
        incoming[static_cast<std::size_t>(e.to.word)] += e.weight;
      }
      for (double v : incoming) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("edge weight is the head average") {
    const auto edges = sankey_edges(s, AttnType::encoder_self, 1, 0.0);
    const auto records = s.layer(AttnType::encoder_self, 2);
    for (const auto& e : edges) {
      double mean = 0.0;
      for (const auto& r : records) mean += r.weights(e.to.word, e.from.word);
      mean /= static_cast<double>(records.size());
      CHECK(e.weight == doctest::Approx(mean).epsilon(1e-14));
    }
  }
  SUBCASE("pruning drops light edges") {
    const auto all = sankey_flow(s, AttnType::encoder_self, 0.0);
    const auto pruned = sankey_flow(s, AttnType::encoder_self, 0.2);
    CHECK(all.size() == static_cast<std::size_t>(4 * t * t));
    CHECK(pruned.size() < all.size());
    for (const auto& e : pruned) CHECK(e.weight >= 0.2);
  }
  SUBCASE("decoder self flow uses target tokens") {
    const auto edges = sankey_edges(s, AttnType::decoder_self, 0, 0.0);
    const auto n = s.target_tokens->size();
    CHECK(edges.size() == n * n);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(sankey_edges(s, AttnType::encoder_decoder, 0), Error);
    try {
      sankey_edges(s, AttnType::encoder_self, 4);
      FAIL("expected a range error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::range);
    }
  }
}
