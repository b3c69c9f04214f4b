#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace sfc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidRun = 1,
  kExitUsage = 2,
  kExitBackend = 3,
};

// Entry point of the `sfc` tool. Everything printed goes to `out` / `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  std::size_t instances = 1000;
  std::size_t max_choices = 4;
  double step = 0.01;
  std::uint64_t seed = 0;
  bool residual_zero = false;
};

struct SimulateStats {
  std::size_t instances = 0;
  std::size_t tight_holds = 0;
  std::size_t simple_holds = 0;
  std::size_t soundness_violations = 0;
  std::size_t tight_fails = 0;
  std::size_t completeness_hits = 0;
  std::uint64_t assignments_checked = 0;
};

SimulateStats simulate_bounds(const SimulateOptions& options);
void print_simulation(const SimulateStats& stats, std::ostream& out);
void print_worked_example(std::ostream& out);

}  // namespace sfc::cli
