#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attn_atlas {

enum class ErrorKind {
  config,         // invalid ModelConfig
  input,          // malformed arguments or data
  range,          // layer/head/sentence index out of bounds
  degenerate_row, // fully masked attention row
  unavailable,    // requested data not present in the corpus
  validation,     // dump failed validation
  conflict,       // corpus metadata mismatch on merge
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace attn_atlas
