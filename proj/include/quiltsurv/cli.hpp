#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace quiltsurv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one subcommand (simulate, ingest, quantize, history, train, predict, evaluate,
/// effects) and returns its exit code. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace quiltsurv::cli
