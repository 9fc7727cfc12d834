#pragma once

// Untrained multi-head attention encoder/decoder used to produce attention
// matrices and query/key vectors for analysis. Nothing here is trained: the
// weights are seeded random draws or loaded from a weight file.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attn_atlas/types.hpp"

namespace attn_atlas {

enum class ScaleMode {
  sqrt_d_model,  // divide scores by sqrt(d_model)
  sqrt_d_k,      // divide by sqrt(d_k), the usual Transformer convention
};

std::string_view to_string(ScaleMode mode);
std::optional<ScaleMode> parse_scale_mode(std::string_view text);

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 8;
  int d_model = 64;
  int d_ff = 0;  // 0 selects 4 * d_model
  ScaleMode scale_mode = ScaleMode::sqrt_d_model;
  std::uint64_t seed = 0;

  /// Throws Error(config) unless all sizes are positive and d_model is a
  /// multiple of n_heads.
  void validate() const;

  int d_k() const { return d_model / n_heads; }
  int ff_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  double attention_scale() const;
};

struct HeadProjection {
  Matrix w_q;  // d_model x d_k
  Matrix w_k;  // d_model x d_k
  Matrix w_v;  // d_model x d_k
};

struct AttentionWeights {
  std::vector<HeadProjection> heads;
  Matrix w_o;  // d_model x d_model
};

struct FeedForwardWeights {
  Matrix w_in;   // d_model x d_ff
  Vector b_in;   // d_ff
  Matrix w_out;  // d_ff x d_model
  Vector b_out;  // d_model
};

struct LayerNormWeights {
  Vector gain;
  Vector bias;
};

struct EncoderLayerWeights {
  AttentionWeights self_attention;
  LayerNormWeights norm_attention;
  FeedForwardWeights feed_forward;
  LayerNormWeights norm_feed_forward;
};

struct DecoderLayerWeights {
  AttentionWeights self_attention;
  LayerNormWeights norm_self;
  AttentionWeights cross_attention;
  LayerNormWeights norm_cross;
  FeedForwardWeights feed_forward;
  LayerNormWeights norm_feed_forward;
};

struct WeightSet {
  ModelConfig config;
  Matrix embedding;  // vocab x d_model, shared by source and target
  std::vector<EncoderLayerWeights> encoder;
  std::vector<DecoderLayerWeights> decoder;

  int vocab_size() const { return static_cast<int>(embedding.rows()); }

  /// Throws Error(config) if any matrix disagrees with `config`.
  void check_shapes() const;
};

/// Seeded initialisation. Every matrix entry is drawn uniformly from
/// [-1/sqrt(d_model), +1/sqrt(d_model)] using a 64-bit Mersenne Twister
/// seeded with `config.seed`; the 53 high bits of each draw are mapped to
/// [0, 1) so results do not depend on the standard library's distribution
/// implementation. Draw order: embedding (row-major), then each encoder
/// layer (W_q, W_k, W_v per head, W_o, W_in, W_out), then each decoder
/// layer (self attention, cross attention, feed-forward, same order).
/// Biases start at 0, layer-norm gains at 1.
WeightSet init_weights(const ModelConfig& config, int vocab_size);

/// Sinusoidal position code: entry 2i is sin(pos / 10000^(2i/d_model)) and
/// entry 2i+1 the cosine of the same argument.
Vector positional_encoding(int position, int d_model);

/// Token embeddings plus positional encodings, one row per token.
Matrix embed_sequence(std::span<const int> tokens, const WeightSet& weights);

struct AttentionResult {
  Matrix weights;  // T_q x T_k
  Matrix output;   // T_q x d_v
};

/// Row softmax of Q K^T / scale, then weights * V. Entries where `blocked`
/// is true receive probability exactly 0. A row with every entry blocked
/// throws Error(degenerate_row).
AttentionResult scaled_dot_attention(const Matrix& queries, const Matrix& keys,
                                     const Matrix& values, double scale,
                                     const BoolMatrix* blocked = nullptr);

/// Per-head attention output of one multi-head block.
struct HeadAttention {
  Matrix weights;
  Matrix queries;
  Matrix keys;
};

struct MultiHeadResult {
  Matrix output;  // T_q x d_model
  std::vector<HeadAttention> heads;
};

MultiHeadResult multi_head_attention(const Matrix& query_input,
                                     const Matrix& key_value_input,
                                     const AttentionWeights& weights,
                                     double scale,
                                     const BoolMatrix* blocked = nullptr);

/// Causal mask: entry (i, j) is blocked iff j > i.
BoolMatrix causal_mask(int length);

Matrix layer_norm(const Matrix& x, const LayerNormWeights& norm);
Matrix feed_forward(const Matrix& x, const FeedForwardWeights& ff);

struct EncoderResult {
  Matrix states;  // T x d_model
  std::vector<AttentionRecord> records;  // layer-major, then head
};

EncoderResult encoder_forward(std::span<const int> tokens,
                              const WeightSet& weights,
                              const std::string& sentence_id = {});

struct DecoderResult {
  Matrix states;
  std::vector<AttentionRecord> self_records;
  std::vector<AttentionRecord> cross_records;
};

/// Teacher-forced decoder pass over known target tokens.
DecoderResult decoder_forward(std::span<const int> target_tokens,
                              const Matrix& encoder_states,
                              const WeightSet& weights,
                              const std::string& sentence_id = {});

}  // namespace attn_atlas
