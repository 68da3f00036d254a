#pragma once

#include "qreg/exogen.hpp"
#include "qreg/plant.hpp"
#include "qreg/smoothness.hpp"
#include "qreg/solvability.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qreg {

struct SolveOptions {
  double tol_res = 1e-6;
  // Re-differentiation residual of Psi_x' = A Psi_x + (B Delta + P) Lambda,
  // relative to 1 + sup of the right-hand side.
  double tol_ode = 1e-5;
  double slope_tol = 1e-3;
  int windows = 10;
  // Auto switches to the stable/unstable split when the reduced matrix has
  // eigenvalues in the open right half plane.
  enum class Propagation { Auto, Forward, Dichotomy } propagation = Propagation::Auto;
};

struct RegulatorSolution {
  std::string construction;  // "unitary-relative-degree" or "feedthrough"
  TimeGrid grid{0.0, 1.0, 1.0};
  std::vector<Sample> samples;
  // Per sample (one-sided values at breakpoints).
  std::vector<Matrix> Pi_x;
  std::vector<Matrix> Delta;
  std::vector<Matrix> Psi_x;
  std::vector<Matrix> Pi_reduced;  // Pi_z of the normal form, or Pi of the feedthrough case
  std::vector<double> residual_trace;

  Matrix initial;  // Pi_reduced(t0) actually used
  bool dichotomy = false;
  double max_residual = 0.0;      // off breakpoints
  double max_residual_all = 0.0;  // including one-sided breakpoint samples
  double ode_residual = 0.0;
  double sup_Pi = 0.0;
  double sup_Delta = 0.0;
  GrowthFit growth;
  bool certified = false;
  std::string failure;

  // Dense output between nodes (cubic Hermite on Psi).
  Matrix pi_x_at(double t, Side side) const;
  Matrix delta_at(double t, Side side) const;

  struct Model;
  std::shared_ptr<const Model> model;
};

// D = 0, relative degree 1. PiZ0 is the (n-1) x nu initial value of Pi_z.
RegulatorSolution solve_unitary_rd(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                   const Matrix& piz0, const SolveOptions& options = {});

// D != 0. Pi0 is the n x nu initial value of Pi.
RegulatorSolution solve_feedthrough(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                    const Matrix& pi0, const SolveOptions& options = {});

// || C Psi_x + (D Delta + Q) Lambda || at every sample of the solution.
std::vector<double> dae_residual(const Plant& plant, const Generator& gen, const RegulatorSolution& sol);

struct SimTrace {
  std::vector<Sample> samples;
  std::vector<Vector> x;
  std::vector<double> u;
  std::vector<double> e;
  std::vector<Vector> omega;

  // Largest |e| over interior samples (and breakpoint samples when asked).
  double max_abs_error(bool include_breakpoints = false) const;
};

// Integrates the plant with x(t0) = Pi_x(t0) Lambda(t0) omega0 and
// u = Delta Lambda omega0. `grid` must lie inside the solution horizon.
SimTrace simulate_error_zeroing(const Plant& plant, const Generator& gen, const RegulatorSolution& sol,
                                const Vector& omega0, const TimeGrid& grid);

enum class Overall { Solvable, Unsolvable, Inconclusive };
enum class UnsolvableReason { None, NotLipschitz, RelativeDegreeBound, Resonant };
const char* overall_name(Overall o);
// Report label of the triggering result.
const char* reason_label(UnsolvableReason r);

struct PipelineOptions {
  SolveOptions solve;
  Assumption1Options assumption1;
  SmoothnessOptions smoothness;
  NonResonanceOptions nonresonance;
  // Initial Pi_z (D = 0) or Pi (D != 0); seeded from the non-resonance witness otherwise.
  std::optional<Matrix> initial;
};

struct SolvabilityReport {
  int relative_degree = -1;
  std::vector<std::complex<double>> zeros;
  bool minimum_phase = false;
  Assumption1Report assumption1;
  std::optional<SmoothnessProfile> profile;
  std::optional<Necessity> rd_necessity;
  std::optional<NonResonanceReport> nonresonance;
  Overall overall = Overall::Inconclusive;
  UnsolvableReason reason = UnsolvableReason::None;
  std::string explanation;
  std::optional<RegulatorSolution> solution;
};

SolvabilityReport solvability_pipeline(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                       const PipelineOptions& options = {});

}  // namespace qreg
