#include "attn_atlas/types.hpp"

namespace attn_atlas {

std::string_view to_string(AttnType type) {
  switch (type) {
    case AttnType::encoder_self: return "encoder_self";
    case AttnType::decoder_self: return "decoder_self";
    case AttnType::encoder_decoder: return "encoder_decoder";
  }
  return "encoder_self";
}

std::optional<AttnType> parse_attn_type(std::string_view text) {
  for (AttnType t : kAllAttnTypes) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

}  // namespace attn_atlas
