#include <cmath>
#include <random>

#include <doctest.h>

#include "attn_atlas/errors.hpp"
#include "attn_atlas/model.hpp"
#include "attn_atlas/weights_io.hpp"
#include "oracles.hpp"

using namespace attn_atlas;

namespace {

AttentionWeights random_attention(std::mt19937_64& rng, int d_model, int n_heads) {
  const int d_k = d_model / n_heads;
  AttentionWeights w;
  for (int h = 0; h < n_heads; ++h) {
    w.heads.push_back({oracle::random_matrix(rng, d_model, d_k),
                       oracle::random_matrix(rng, d_model, d_k),
                       oracle::random_matrix(rng, d_model, d_k)});
  }
  w.w_o = oracle::random_matrix(rng, d_model, d_model);
  return w;
}

bool rows_stochastic(const Matrix& a, double tol) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (std::abs(a.row(i).sum() - 1.0) > tol) return false;
    if ((a.row(i).array() < 0.0).any()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("positional encoding interleaves sine and cosine") {
  const Vector pe0 = positional_encoding(0, 4);
  CHECK(pe0(0) == 0.0);
  CHECK(pe0(1) == 1.0);
  CHECK(pe0(2) == 0.0);
  CHECK(pe0(3) == 1.0);
  CHECK(positional_encoding(1, 2)(0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(positional_encoding(1, 4)(2) == doctest::Approx(std::sin(1.0 / 100.0)).epsilon(1e-15));
  CHECK(positional_encoding(1, 4)(3) == doctest::Approx(std::cos(1.0 / 100.0)).epsilon(1e-15));
  CHECK_THROWS_AS(positional_encoding(-1, 4), Error);
}

TEST_CASE("embedding adds positional codes to token rows") {
  ModelConfig config;
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 8;
  WeightSet w = init_weights(config, 5);
  const std::vector<int> tokens{3, 1, 3};
  const Matrix x = embed_sequence(tokens, w);
  REQUIRE(x.rows() == 3);
  const Vector diff = (x.row(0) - x.row(2)).transpose();
  const Vector expected = positional_encoding(0, 8) - positional_encoding(2, 8);
  CHECK((diff - expected).cwiseAbs().maxCoeff() < 1e-15);

  w.embedding.setZero();
  const Matrix pure = embed_sequence(tokens, w);
  for (int t = 0; t < 3; ++t) {
    CHECK((pure.row(t).transpose() - positional_encoding(t, 8)).cwiseAbs().maxCoeff() == 0.0);
  }
  const std::vector<int> bad{7};
  CHECK_THROWS_AS(embed_sequence(bad, w), Error);
}

TEST_CASE("scaled dot attention on hand-checked inputs") {
  SUBCASE("equal scores give a uniform row") {
    const Matrix zero = Matrix::Zero(3, 2);
    const auto r = scaled_dot_attention(zero, zero, Matrix::Identity(3, 3), 1.0);
    CHECK((r.weights.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("single key") {
    const Matrix one = Matrix::Ones(1, 2);
    const auto r = scaled_dot_attention(one, one, one, 2.0);
    CHECK(r.weights(0, 0) == 1.0);
  }
  SUBCASE("identity queries and keys with scale 2") {
    const Matrix eye = Matrix::Identity(2, 2);
    const auto r = scaled_dot_attention(eye, eye, eye, 2.0);
    const double e = std::exp(0.5);
    CHECK(r.weights(0, 0) == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
    CHECK(r.weights(0, 0) == doctest::Approx(0.62246).epsilon(1e-5));
    CHECK(r.weights(0, 1) == doctest::Approx(0.37754).epsilon(1e-5));
  }
  SUBCASE("masked entries are exactly zero and rows renormalise") {
    std::mt19937_64 rng(3);
    const Matrix q = oracle::random_matrix(rng, 4, 3);
    const auto r = scaled_dot_attention(q, q, q, 1.0, nullptr);
    const BoolMatrix mask = causal_mask(4);
    const auto m = scaled_dot_attention(q, q, q, 1.0, &mask);
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) CHECK(m.weights(i, j) == 0.0);
      CHECK(m.weights.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(rows_stochastic(r.weights, 1e-12));
  }
  SUBCASE("fully blocked row is an error") {
    const Matrix q = Matrix::Ones(2, 2);
    BoolMatrix mask = BoolMatrix::Constant(2, 2, false);
    mask.row(1).setConstant(true);
    try {
      scaled_dot_attention(q, q, q, 1.0, &mask);
      FAIL("expected a degenerate row error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::degenerate_row);
    }
  }
  SUBCASE("mismatched widths") {
    CHECK_THROWS_AS(scaled_dot_attention(Matrix::Ones(2, 2), Matrix::Ones(2, 3),
                                         Matrix::Ones(2, 2), 1.0),
                    Error);
  }
}

TEST_CASE("multi-head attention matches per-head composition") {
  SUBCASE("d_model 4, two heads, seed 7") {
    std::mt19937_64 rng(7);
    const AttentionWeights w = random_attention(rng, 4, 2);
    const Matrix x = oracle::random_matrix(rng, 3, 4);
    const auto got = multi_head_attention(x, x, w, 2.0);
    const auto want = oracle::multi_head(oracle::to_grid(x), oracle::to_grid(x), w, 2.0);
    CHECK(oracle::max_abs_diff(got.output, want.output) < 1e-12);
    for (int h = 0; h < 2; ++h) CHECK(oracle::max_abs_diff(got.heads[h].weights, want.weights[h]) < 1e-12);
  }
  SUBCASE("random small instances with masks") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
      const int heads = 1 + static_cast<int>(rng() % 4);
      const int d_model = heads * (1 + static_cast<int>(rng() % 2));
      if (d_model > 8) continue;
      const int t = 1 + static_cast<int>(rng() % 6);
      const AttentionWeights w = random_attention(rng, d_model, heads);
      const Matrix x = oracle::random_matrix(rng, t, d_model);
      const BoolMatrix mask = causal_mask(t);
      std::vector<std::vector<bool>> grid(t, std::vector<bool>(t));
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) grid[i][j] = mask(i, j);
      const auto got = multi_head_attention(x, x, w, std::sqrt(d_model), &mask);
      const auto want = oracle::multi_head(oracle::to_grid(x), oracle::to_grid(x), w,
                                           std::sqrt(d_model), &grid);
      CHECK(oracle::max_abs_diff(got.output, want.output) < 1e-12);
    }
  }
  SUBCASE("one head equals attention times W_o") {
    std::mt19937_64 rng(5);
    const AttentionWeights w = random_attention(rng, 4, 1);
    const Matrix x = oracle::random_matrix(rng, 3, 4);
    const auto got = multi_head_attention(x, x, w, 2.0);
    const auto single = scaled_dot_attention(x * w.heads[0].w_q, x * w.heads[0].w_k,
                                             x * w.heads[0].w_v, 2.0);
    CHECK(((single.output * w.w_o) - got.output).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("rectangular query and key inputs") {
    std::mt19937_64 rng(9);
    const AttentionWeights w = random_attention(rng, 4, 2);
    const auto got = multi_head_attention(oracle::random_matrix(rng, 2, 4),
                                          oracle::random_matrix(rng, 5, 4), w, 2.0);
    for (const auto& h : got.heads) {
      CHECK(h.weights.rows() == 2);
      CHECK(h.weights.cols() == 5);
      CHECK(h.queries.rows() == 2);
      CHECK(h.keys.rows() == 5);
    }
  }
  SUBCASE("permuting keys, values and mask columns leaves the output unchanged") {
    std::mt19937_64 rng(21);
    const Matrix q = oracle::random_matrix(rng, 3, 2);
    const Matrix k = oracle::random_matrix(rng, 4, 2);
    const Matrix v = oracle::random_matrix(rng, 4, 3);
    BoolMatrix mask = BoolMatrix::Constant(3, 4, false);
    mask(0, 1) = true;
    mask(2, 3) = true;
    const std::vector<int> perm{2, 0, 3, 1};
    Matrix kp(4, 2), vp(4, 3);
    BoolMatrix mp(3, 4);
    for (int j = 0; j < 4; ++j) {
      kp.row(j) = k.row(perm[j]);
      vp.row(j) = v.row(perm[j]);
      mp.col(j) = mask.col(perm[j]);
    }
    const auto a = scaled_dot_attention(q, k, v, 1.5, &mask);
    const auto b = scaled_dot_attention(q, kp, vp, 1.5, &mp);
    CHECK((a.output - b.output).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("dimension mismatch is an input error") {
    std::mt19937_64 rng(1);
    const AttentionWeights w = random_attention(rng, 4, 2);
    try {
      multi_head_attention(Matrix::Ones(2, 3), Matrix::Ones(2, 3), w, 2.0);
      FAIL("expected an input error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::input);
    }
  }
}

TEST_CASE("model configuration") {
  ModelConfig config;
  CHECK_NOTHROW(config.validate());
  CHECK(config.d_k() == 8);
  CHECK(config.ff_width() == 256);
  CHECK(config.attention_scale() == doctest::Approx(8.0));
  config.scale_mode = ScaleMode::sqrt_d_k;
  CHECK(config.attention_scale() == doctest::Approx(std::sqrt(8.0)));
  config.d_model = 60;
  CHECK_THROWS_AS(config.validate(), Error);
  config.d_model = 64;
  config.n_layers = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  CHECK(parse_scale_mode("sqrt_d_k") == ScaleMode::sqrt_d_k);
  CHECK_FALSE(parse_scale_mode("sqrt").has_value());
}

TEST_CASE("encoder and decoder passes") {
  ModelConfig config;
  config.n_layers = 2;
  config.n_heads = 4;
  config.d_model = 16;
  config.seed = 42;
  const WeightSet w = init_weights(config, 12);
  const std::vector<int> source{1, 2, 3, 4, 5, 6};

  const auto enc = encoder_forward(source, w, "s1");
  REQUIRE(enc.records.size() == 8);
  for (const auto& r : enc.records) {
    CHECK(r.type == AttnType::encoder_self);
    CHECK(r.sentence_id == "s1");
    CHECK(r.weights.rows() == 6);
    CHECK(r.weights.cols() == 6);
    CHECK(r.queries.cols() == 4);
    CHECK(rows_stochastic(r.weights, 1e-9));
  }
  CHECK(enc.records[5].layer == 2);
  CHECK(enc.records[5].head == 2);

  const auto again = encoder_forward(source, w, "s1");
  for (std::size_t i = 0; i < enc.records.size(); ++i) {
    CHECK((enc.records[i].weights.array() == again.records[i].weights.array()).all());
  }

  const std::vector<int> shorter{1, 2, 3, 4, 5};
  const auto enc5 = encoder_forward(shorter, w);
  const std::vector<int> target{7, 8, 9};
  const auto dec = decoder_forward(target, enc5.states, w);
  REQUIRE(dec.self_records.size() == 8);
  REQUIRE(dec.cross_records.size() == 8);
  for (const auto& r : dec.self_records) {
    CHECK(r.type == AttnType::decoder_self);
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) CHECK(r.weights(i, j) == 0.0);
  }
  for (const auto& r : dec.cross_records) {
    CHECK(r.type == AttnType::encoder_decoder);
    CHECK(r.weights.rows() == 3);
    CHECK(r.weights.cols() == 5);
    CHECK(r.keys.rows() == 5);
    CHECK(rows_stochastic(r.weights, 1e-9));
  }

  const std::vector<int> one{4};
  const auto single = decoder_forward(one, enc5.states, w);
  CHECK(single.self_records.front().weights(0, 0) == 1.0);

  const std::vector<int> empty;
  CHECK_THROWS_AS(encoder_forward(empty, w), Error);
  CHECK_THROWS_AS(decoder_forward(empty, enc5.states, w), Error);
}

TEST_CASE("seeded initialisation") {
  ModelConfig config;
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 4;
  config.seed = 9;
  const WeightSet a = init_weights(config, 3);
  const WeightSet b = init_weights(config, 3);
  CHECK((a.embedding.array() == b.embedding.array()).all());
  CHECK(a.embedding.cwiseAbs().maxCoeff() <= 0.5);
  CHECK((a.encoder[0].norm_attention.gain.array() == 1.0).all());
  CHECK((a.encoder[0].feed_forward.b_in.array() == 0.0).all());
  config.seed = 10;
  const WeightSet c = init_weights(config, 3);
  CHECK_FALSE((a.embedding.array() == c.embedding.array()).all());
  CHECK_NOTHROW(a.check_shapes());
}

TEST_CASE("weight files round-trip exactly") {
  ModelConfig config;
  config.n_layers = 2;
  config.n_heads = 2;
  config.d_model = 8;
  config.d_ff = 12;
  config.scale_mode = ScaleMode::sqrt_d_k;
  config.seed = 77;
  const WeightSet w = init_weights(config, 6);
  const WeightSet back = weights_from_json(nlohmann::json::parse(weights_to_json(w).dump()));
  CHECK(back.config.scale_mode == ScaleMode::sqrt_d_k);
  CHECK(back.config.d_ff == 12);
  CHECK(back.vocab_size() == 6);
  CHECK((back.embedding.array() == w.embedding.array()).all());
  CHECK((back.decoder[1].cross_attention.heads[1].w_k.array() ==
         w.decoder[1].cross_attention.heads[1].w_k.array())
            .all());
  const std::vector<int> tokens{0, 5, 2};
  const auto x = encoder_forward(tokens, w);
  const auto y = encoder_forward(tokens, back);
  CHECK((x.states.array() == y.states.array()).all());

  nlohmann::json broken = weights_to_json(w);
  broken["weights"]["encoder.1.self.w_o"]["shape"] = {8, 7};
  CHECK_THROWS_AS(weights_from_json(broken), Error);
}
