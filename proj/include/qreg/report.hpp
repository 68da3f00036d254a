#pragma once

#include "qreg/scenario.hpp"
#include "qreg/solver.hpp"

#include <optional>
#include <string>

namespace qreg {

// %.17g, with "nan", "inf" and "-inf" for non-finite values.
std::string format_number(double v);

// Pretty-printed JSON report with the full verdict chain.
std::string report_json(const Scenario& scenario, const SolvabilityReport& report, const std::string& command,
                        const SimTrace* trace = nullptr);

// Header t,side,Pi_i_j...,Delta_j with one row per sample.
std::string solution_csv(const RegulatorSolution& sol);
// Header t,side,e,x_1..x_n,u,omega_1..omega_nu.
std::string trace_csv(const SimTrace& trace);

// Same tables as {"columns": [...], "rows": [[...], ...]}.
std::string solution_table_json(const RegulatorSolution& sol);
std::string trace_table_json(const SimTrace& trace);

}  // namespace qreg
