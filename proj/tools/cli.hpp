#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsqr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kSchemaVersion = 1;

/// 64-bit FNV-1a.
[[nodiscard]] std::uint64_t fnv1a(const std::string& bytes) noexcept;

/// Runs one subcommand; never throws. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tsqr::cli
