#pragma once

#include "qreg/exogen.hpp"
#include "qreg/plant.hpp"

#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qreg {

// Omega(t) = ((Lambda(t0) Lambda(t)^{-1})^T kron e^{Az (t - t0)}) Omega0
//          + int_{t0}^{t} (Lambda(tau) Lambda(t)^{-1})^T kron e^{Az (t - tau)} dtau,
// sampled at grid.samples() (both one-sided values at breakpoints).
std::vector<Matrix> omega_trajectory(const Matrix& az, const Generator& gen, const Matrix& omega0,
                                     const TimeGrid& grid);

// Windowed-sup growth fit: the horizon is cut into equal windows, the first
// window is discarded as transient and log(sup) is fitted by least squares.
struct GrowthFit {
  std::vector<double> window_sups;
  double sup = 0.0;
  double slope = 0.0;
  bool monotone = false;
  bool finite = true;
};

class GrowthAccumulator {
 public:
  GrowthAccumulator(double t0, double t_end, int windows);
  void add(double t, double norm);
  GrowthFit finish() const;

 private:
  double t0_;
  double t_end_;
  std::vector<double> sups_;
  bool finite_ = true;
};

enum class NonResonanceVerdict { NonResonant, Resonant, Inconclusive };
const char* verdict_name(NonResonanceVerdict v);

struct OmegaCandidate {
  std::string name;
  bool available = false;
  std::string note;
  Matrix omega0;
  GrowthFit fit;
  bool bounded = false;
  bool growing = false;
};

struct MinimumPhaseBound {
  double alpha = 0.0;
  double beta = 0.0;
  double h = 0.0;
  double bound = 0.0;     // alpha h / beta
  double measured = 0.0;  // sup of the integral term (Omega0 = 0)
};

struct NonResonanceOptions {
  double slope_tol = 1e-3;
  int windows = 10;
  ZeroRealization realization = ZeroRealization::Canonical;
  bool use_shortcut = true;
  // Uniform ratio bound h from check_assumption1; NaN when unknown.
  double ratio_bound = std::numeric_limits<double>::quiet_NaN();
};

struct NonResonanceReport {
  NonResonanceVerdict verdict = NonResonanceVerdict::Inconclusive;
  double t0 = 0.0;
  double t_end = 0.0;
  Matrix az;
  std::vector<std::complex<double>> zeros;
  std::vector<OmegaCandidate> candidates;
  int winner = -1;  // index of the first bounded candidate
  bool minimum_phase_shortcut = false;
  std::optional<MinimumPhaseBound> bound;
  // Spectral test sigma(Az) vs sigma(S) for LTI generators, reported alongside.
  std::optional<bool> classical;
  std::optional<bool> classical_agrees;
  std::string note;
};

NonResonanceReport check_nonresonance(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                      const NonResonanceOptions& options = {});

// sigma(zeros) and sigma(S) separated by more than 1e-8 (relative).
bool classical_nonresonance(const Plant& plant, const Matrix& s);

// Throws for non-minimum-phase plants or plants without finite zeros.
MinimumPhaseBound minimum_phase_bound(const Plant& plant, const Generator& gen, const TimeGrid& grid, double h,
                                      ZeroRealization realization = ZeroRealization::Canonical);

}  // namespace qreg
