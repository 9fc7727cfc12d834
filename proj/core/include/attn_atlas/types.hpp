#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace attn_atlas {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class AttnType { encoder_self, decoder_self, encoder_decoder };

inline constexpr AttnType kAllAttnTypes[] = {
    AttnType::encoder_self, AttnType::decoder_self, AttnType::encoder_decoder};

std::string_view to_string(AttnType type);
std::optional<AttnType> parse_attn_type(std::string_view text);

/// One head's attention for one sentence, layer, and attention type.
///
/// `weights` is T_q x T_k and row-stochastic. `queries` (T_q x d_k) and
/// `keys` (T_k x d_k) are empty when the source dump carried no vectors.
struct AttentionRecord {
  std::string sentence_id;
  AttnType type = AttnType::encoder_self;
  int layer = 1;  // 1-based
  int head = 1;   // 1-based
  Matrix weights;
  Matrix queries;
  Matrix keys;

  bool has_vectors() const { return queries.size() > 0 || keys.size() > 0; }
};

}  // namespace attn_atlas
