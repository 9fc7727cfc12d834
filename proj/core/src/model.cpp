#include "attn_atlas/model.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "attn_atlas/errors.hpp"

namespace attn_atlas {
namespace {

constexpr double kLayerNormEpsilon = 1e-6;

class UniformSource {
 public:
  UniformSource(std::uint64_t seed, double bound) : engine_(seed), bound_(bound) {}

  double next() {
    const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return -bound_ + 2.0 * bound_ * unit;
  }

  Matrix matrix(int rows, int cols) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = next();
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double bound_;
};

AttentionWeights draw_attention(UniformSource& rng, const ModelConfig& cfg) {
  AttentionWeights w;
  w.heads.reserve(cfg.n_heads);
  for (int h = 0; h < cfg.n_heads; ++h) {
    HeadProjection p;
    p.w_q = rng.matrix(cfg.d_model, cfg.d_k());
    p.w_k = rng.matrix(cfg.d_model, cfg.d_k());
    p.w_v = rng.matrix(cfg.d_model, cfg.d_k());
    w.heads.push_back(std::move(p));
  }
  w.w_o = rng.matrix(cfg.d_model, cfg.d_model);
  return w;
}

FeedForwardWeights draw_feed_forward(UniformSource& rng, const ModelConfig& cfg) {
  FeedForwardWeights ff;
  ff.w_in = rng.matrix(cfg.d_model, cfg.ff_width());
  ff.b_in = Vector::Zero(cfg.ff_width());
  ff.w_out = rng.matrix(cfg.ff_width(), cfg.d_model);
  ff.b_out = Vector::Zero(cfg.d_model);
  return ff;
}

LayerNormWeights unit_norm(int d_model) {
  return {Vector::Ones(d_model), Vector::Zero(d_model)};
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                  const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::config, name + " has shape " + std::to_string(m.rows()) +
                                "x" + std::to_string(m.cols()) + ", expected " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void expect_size(const Vector& v, Eigen::Index n, const std::string& name) {
  if (v.size() != n) {
    fail(ErrorKind::config, name + " has length " + std::to_string(v.size()) +
                                ", expected " + std::to_string(n));
  }
}

void check_attention(const AttentionWeights& w, const ModelConfig& cfg,
                     const std::string& prefix) {
  if (static_cast<int>(w.heads.size()) != cfg.n_heads) {
    fail(ErrorKind::config, prefix + " has " + std::to_string(w.heads.size()) +
                                " heads, expected " + std::to_string(cfg.n_heads));
  }
  for (std::size_t h = 0; h < w.heads.size(); ++h) {
    const auto name = prefix + ".head" + std::to_string(h + 1);
    expect_shape(w.heads[h].w_q, cfg.d_model, cfg.d_k(), name + ".w_q");
    expect_shape(w.heads[h].w_k, cfg.d_model, cfg.d_k(), name + ".w_k");
    expect_shape(w.heads[h].w_v, cfg.d_model, cfg.d_k(), name + ".w_v");
  }
  expect_shape(w.w_o, cfg.d_model, cfg.d_model, prefix + ".w_o");
}

void check_feed_forward(const FeedForwardWeights& ff, const ModelConfig& cfg,
                        const std::string& prefix) {
  expect_shape(ff.w_in, cfg.d_model, cfg.ff_width(), prefix + ".w_in");
  expect_size(ff.b_in, cfg.ff_width(), prefix + ".b_in");
  expect_shape(ff.w_out, cfg.ff_width(), cfg.d_model, prefix + ".w_out");
  expect_size(ff.b_out, cfg.d_model, prefix + ".b_out");
}

void check_norm(const LayerNormWeights& n, const ModelConfig& cfg,
                const std::string& prefix) {
  expect_size(n.gain, cfg.d_model, prefix + ".gain");
  expect_size(n.bias, cfg.d_model, prefix + ".bias");
}

void append_records(std::vector<AttentionRecord>& out, MultiHeadResult&& mha,
                    const std::string& sentence_id, AttnType type, int layer) {
  for (std::size_t h = 0; h < mha.heads.size(); ++h) {
    AttentionRecord rec;
    rec.sentence_id = sentence_id;
    rec.type = type;
    rec.layer = layer;
    rec.head = static_cast<int>(h) + 1;
    rec.weights = std::move(mha.heads[h].weights);
    rec.queries = std::move(mha.heads[h].queries);
    rec.keys = std::move(mha.heads[h].keys);
    out.push_back(std::move(rec));
  }
}

}  // namespace

std::string_view to_string(ScaleMode mode) {
  return mode == ScaleMode::sqrt_d_k ? "sqrt_d_k" : "sqrt_d_model";
}

std::optional<ScaleMode> parse_scale_mode(std::string_view text) {
  if (text == "sqrt_d_model") return ScaleMode::sqrt_d_model;
  if (text == "sqrt_d_k") return ScaleMode::sqrt_d_k;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (n_layers <= 0) fail(ErrorKind::config, "n_layers must be positive");
  if (n_heads <= 0) fail(ErrorKind::config, "n_heads must be positive");
  if (d_model <= 0) fail(ErrorKind::config, "d_model must be positive");
  if (d_ff < 0) fail(ErrorKind::config, "d_ff must be positive (or 0 for 4*d_model)");
  if (d_model % n_heads != 0) {
    fail(ErrorKind::config, "d_model (" + std::to_string(d_model) +
                                ") is not divisible by n_heads (" +
                                std::to_string(n_heads) + ")");
  }
}

double ModelConfig::attention_scale() const {
  return std::sqrt(static_cast<double>(scale_mode == ScaleMode::sqrt_d_k ? d_k() : d_model));
}

void WeightSet::check_shapes() const {
  config.validate();
  if (embedding.rows() <= 0) fail(ErrorKind::config, "embedding table is empty");
  expect_shape(embedding, embedding.rows(), config.d_model, "embedding");
  if (static_cast<int>(encoder.size()) != config.n_layers ||
      static_cast<int>(decoder.size()) != config.n_layers) {
    fail(ErrorKind::config, "layer count does not match n_layers");
  }
  for (int l = 0; l < config.n_layers; ++l) {
    const auto enc = "encoder" + std::to_string(l + 1);
    check_attention(encoder[l].self_attention, config, enc + ".self");
    check_norm(encoder[l].norm_attention, config, enc + ".norm_attention");
    check_feed_forward(encoder[l].feed_forward, config, enc + ".ff");
    check_norm(encoder[l].norm_feed_forward, config, enc + ".norm_ff");

    const auto dec = "decoder" + std::to_string(l + 1);
    check_attention(decoder[l].self_attention, config, dec + ".self");
    check_norm(decoder[l].norm_self, config, dec + ".norm_self");
    check_attention(decoder[l].cross_attention, config, dec + ".cross");
    check_norm(decoder[l].norm_cross, config, dec + ".norm_cross");
    check_feed_forward(decoder[l].feed_forward, config, dec + ".ff");
    check_norm(decoder[l].norm_feed_forward, config, dec + ".norm_ff");
  }
}

WeightSet init_weights(const ModelConfig& config, int vocab_size) {
  config.validate();
  if (vocab_size <= 0) fail(ErrorKind::config, "vocabulary size must be positive");

  UniformSource rng(config.seed, 1.0 / std::sqrt(static_cast<double>(config.d_model)));
  WeightSet w;
  w.config = config;
  w.embedding = rng.matrix(vocab_size, config.d_model);

  w.encoder.reserve(config.n_layers);
  for (int l = 0; l < config.n_layers; ++l) {
    EncoderLayerWeights layer;
    layer.self_attention = draw_attention(rng, config);
    layer.norm_attention = unit_norm(config.d_model);
    layer.feed_forward = draw_feed_forward(rng, config);
    layer.norm_feed_forward = unit_norm(config.d_model);
    w.encoder.push_back(std::move(layer));
  }
  w.decoder.reserve(config.n_layers);
  for (int l = 0; l < config.n_layers; ++l) {
    DecoderLayerWeights layer;
    layer.self_attention = draw_attention(rng, config);
    layer.norm_self = unit_norm(config.d_model);
    layer.cross_attention = draw_attention(rng, config);
    layer.norm_cross = unit_norm(config.d_model);
    layer.feed_forward = draw_feed_forward(rng, config);
    layer.norm_feed_forward = unit_norm(config.d_model);
    w.decoder.push_back(std::move(layer));
  }
  return w;
}

Vector positional_encoding(int position, int d_model) {
  if (position < 0) fail(ErrorKind::input, "position must be non-negative");
  if (d_model <= 0) fail(ErrorKind::input, "d_model must be positive");
  Vector pe(d_model);
  for (int i = 0; 2 * i < d_model; ++i) {
    const double angle =
        position / std::pow(10000.0, (2.0 * i) / static_cast<double>(d_model));
    pe(2 * i) = std::sin(angle);
    if (2 * i + 1 < d_model) pe(2 * i + 1) = std::cos(angle);
  }
  return pe;
}

Matrix embed_sequence(std::span<const int> tokens, const WeightSet& weights) {
  const int d_model = weights.config.d_model;
  Matrix x(static_cast<Eigen::Index>(tokens.size()), d_model);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int id = tokens[t];
    if (id < 0 || id >= weights.vocab_size()) {
      fail(ErrorKind::input, "token id " + std::to_string(id) +
                                 " outside vocabulary of size " +
                                 std::to_string(weights.vocab_size()));
    }
    x.row(t) = weights.embedding.row(id) +
               positional_encoding(static_cast<int>(t), d_model).transpose();
  }
  return x;
}

AttentionResult scaled_dot_attention(const Matrix& queries, const Matrix& keys,
                                     const Matrix& values, double scale,
                                     const BoolMatrix* blocked) {
  if (queries.cols() != keys.cols()) {
    fail(ErrorKind::input, "query and key widths differ");
  }
  if (keys.rows() != values.rows()) {
    fail(ErrorKind::input, "key and value row counts differ");
  }
  if (!(scale > 0.0)) fail(ErrorKind::input, "attention scale must be positive");
  if (blocked && (blocked->rows() != queries.rows() || blocked->cols() != keys.rows())) {
    fail(ErrorKind::input, "mask shape does not match T_q x T_k");
  }

  const Matrix scores = (queries * keys.transpose()) / scale;
  Matrix probs = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (blocked && (*blocked)(i, j)) continue;
      row_max = std::max(row_max, scores(i, j));
    }
    if (row_max == -std::numeric_limits<double>::infinity()) {
      fail(ErrorKind::degenerate_row,
           "attention row " + std::to_string(i) + " has no unmasked entry");
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (blocked && (*blocked)(i, j)) continue;
      probs(i, j) = std::exp(scores(i, j) - row_max);
      total += probs(i, j);
    }
    probs.row(i) /= total;
  }
  Matrix out = probs * values;
  return {std::move(probs), std::move(out)};
}

MultiHeadResult multi_head_attention(const Matrix& query_input,
                                     const Matrix& key_value_input,
                                     const AttentionWeights& weights,
                                     double scale, const BoolMatrix* blocked) {
  if (weights.heads.empty()) fail(ErrorKind::input, "attention block has no heads");
  const Eigen::Index d_model = weights.w_o.rows();
  if (query_input.cols() != d_model || key_value_input.cols() != d_model) {
    fail(ErrorKind::input, "input width does not match d_model");
  }
  const Eigen::Index d_k = weights.heads.front().w_q.cols();
  if (d_k * static_cast<Eigen::Index>(weights.heads.size()) != d_model) {
    fail(ErrorKind::input, "heads * d_k does not match d_model");
  }

  MultiHeadResult result;
  result.heads.reserve(weights.heads.size());
  Matrix concat(query_input.rows(), d_model);
  for (std::size_t h = 0; h < weights.heads.size(); ++h) {
    const HeadProjection& p = weights.heads[h];
    Matrix q = query_input * p.w_q;
    Matrix k = key_value_input * p.w_k;
    const Matrix v = key_value_input * p.w_v;
    AttentionResult att = scaled_dot_attention(q, k, v, scale, blocked);
    concat.middleCols(static_cast<Eigen::Index>(h) * d_k, d_k) = att.output;
    result.heads.push_back({std::move(att.weights), std::move(q), std::move(k)});
  }
  result.output = concat * weights.w_o;
  return result;
}

BoolMatrix causal_mask(int length) {
  BoolMatrix mask(length, length);
  for (int i = 0; i < length; ++i)
    for (int j = 0; j < length; ++j) mask(i, j) = j > i;
  return mask;
}

Matrix layer_norm(const Matrix& x, const LayerNormWeights& norm) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    y.row(r) = ((x.row(r).array() - mean) * inv).matrix().cwiseProduct(norm.gain.transpose()) +
               norm.bias.transpose();
  }
  return y;
}

Matrix feed_forward(const Matrix& x, const FeedForwardWeights& ff) {
  Matrix hidden = (x * ff.w_in).rowwise() + ff.b_in.transpose();
  hidden = hidden.cwiseMax(0.0);
  return (hidden * ff.w_out).rowwise() + ff.b_out.transpose();
}

EncoderResult encoder_forward(std::span<const int> tokens, const WeightSet& weights,
                              const std::string& sentence_id) {
  if (tokens.empty()) fail(ErrorKind::input, "encoder input is empty");
  const ModelConfig& cfg = weights.config;
  const double scale = cfg.attention_scale();

  EncoderResult result;
  result.records.reserve(static_cast<std::size_t>(cfg.n_layers * cfg.n_heads));
  Matrix x = embed_sequence(tokens, weights);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const EncoderLayerWeights& layer = weights.encoder[l];
    MultiHeadResult mha = multi_head_attention(x, x, layer.self_attention, scale);
    x = layer_norm(x + mha.output, layer.norm_attention);
    x = layer_norm(x + feed_forward(x, layer.feed_forward), layer.norm_feed_forward);
    append_records(result.records, std::move(mha), sentence_id, AttnType::encoder_self, l + 1);
  }
  result.states = std::move(x);
  return result;
}

DecoderResult decoder_forward(std::span<const int> target_tokens,
                              const Matrix& encoder_states, const WeightSet& weights,
                              const std::string& sentence_id) {
  if (target_tokens.empty()) fail(ErrorKind::input, "decoder target is empty");
  if (encoder_states.rows() == 0) fail(ErrorKind::input, "encoder states are empty");
  const ModelConfig& cfg = weights.config;
  if (encoder_states.cols() != cfg.d_model) {
    fail(ErrorKind::input, "encoder state width does not match d_model");
  }
  const double scale = cfg.attention_scale();
  const BoolMatrix mask = causal_mask(static_cast<int>(target_tokens.size()));

  DecoderResult result;
  Matrix y = embed_sequence(target_tokens, weights);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const DecoderLayerWeights& layer = weights.decoder[l];
    MultiHeadResult self = multi_head_attention(y, y, layer.self_attention, scale, &mask);
    y = layer_norm(y + self.output, layer.norm_self);
    MultiHeadResult cross =
        multi_head_attention(y, encoder_states, layer.cross_attention, scale);
    y = layer_norm(y + cross.output, layer.norm_cross);
    y = layer_norm(y + feed_forward(y, layer.feed_forward), layer.norm_feed_forward);
    append_records(result.self_records, std::move(self), sentence_id,
                   AttnType::decoder_self, l + 1);
    append_records(result.cross_records, std::move(cross), sentence_id,
                   AttnType::encoder_decoder, l + 1);
  }
  result.states = std::move(y);
  return result;
}

}  // namespace attn_atlas
