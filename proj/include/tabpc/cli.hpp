#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tabpc/error.hpp"

namespace tabpc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind);

/// Entry point of `tabgen`; args[0] is the program name.  Results go to
/// `out`, error JSON to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tabpc::cli
