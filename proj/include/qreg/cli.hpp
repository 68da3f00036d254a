#pragma once

#include "qreg/scenario.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qreg {

// Command-line overrides applied on top of the scenario file.
struct CliFlags {
  std::vector<double> horizon;  // {t_end} or {t0, t_end}
  std::optional<double> step;
  std::optional<double> tol_res;
  std::optional<double> slope_tol;
  std::optional<std::string> output_dir;
  std::string format = "csv";  // sample tables: csv or json
};

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUnsolvable = 2;
constexpr int kExitInconclusive = 3;

struct RunResult {
  int exit_code = kExitOk;
  std::string report;      // JSON
  std::string table;       // solution or trace samples in the chosen format (solve/simulate)
  std::string table_kind;  // "solution" or "trace"
  std::string error;
};

Scenario apply_flags(Scenario s, const CliFlags& flags);

// One scenario, no file output. command is check, solve or simulate.
RunResult run(const std::string& command, const Scenario& scenario, const CliFlags& flags);

// Loads and runs every path concurrently. With an output directory each
// scenario writes <stem>.report.json and <stem>.<table_kind>.<format>
// atomically; otherwise reports and tables go to `out` in input order.
// Returns 1 if any scenario failed, else the largest verdict code.
int run_paths(const std::string& command, const std::vector<std::string>& paths, const CliFlags& flags,
              std::ostream& out, std::ostream& err);

// Full command line: qreg <check|solve|simulate> <scenario.json>... [flags].
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qreg
