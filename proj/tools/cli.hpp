#pragma once

#include <iosfwd>

namespace attn_atlas::cli {

/// Exit codes: 0 success, 1 operation failed (e.g. validation), 2 bad
/// arguments (unparseable flags, out-of-range layer/head/sentence).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace attn_atlas::cli
