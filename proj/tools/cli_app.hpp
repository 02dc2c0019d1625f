#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seqgeo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// Runs the seqgeo command line. args excludes the program name. Exit codes:
// 0 success, 1 domain error, 2 usage or I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqgeo::cli
