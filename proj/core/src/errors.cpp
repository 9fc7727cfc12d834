#include "attn_atlas/errors.hpp"

namespace attn_atlas {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::range: return "range";
    case ErrorKind::degenerate_row: return "degenerate_row";
    case ErrorKind::unavailable: return "unavailable";
    case ErrorKind::validation: return "validation";
    case ErrorKind::conflict: return "conflict";
  }
  return "unknown";
}

}  // namespace attn_atlas
