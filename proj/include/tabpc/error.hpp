#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tabpc {

enum class ErrorKind {
  usage,
  io,
  parse,
  schema_mismatch,
  degenerate_column,
  infeasible_split,
  domain,
  graph,
  budget,
  unsupported,
  numeric,
  divergence,
  impossible_evidence,
  incompatible_model,
  insufficient_data,
  degenerate_target,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for every library failure; `kind()` is what callers
/// (the CLI in particular) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tabpc
