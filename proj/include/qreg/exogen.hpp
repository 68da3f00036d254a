#pragma once

#include "qreg/numerics.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qreg {

// Explicit generator omega(t) = Lambda(t, t0) omega0, stored as a capability
// record. Only eval, inv and breakpoints_in are mandatory; the optional hooks
// let downstream code use exact data instead of finite differences.
struct Generator {
  std::string kind;
  Eigen::Index nu = 0;
  double t0 = 0.0;

  SidedFunction eval_fn;
  SidedFunction inv_fn;
  std::function<std::vector<double>(double, double)> breakpoints_fn;

  // S~(t) = Lambda'(t) Lambda(t)^{-1}, when the generator is an LTV system.
  SidedFunction sgen;
  // d-th derivative of Lambda, one-sided at breakpoints.
  std::function<Matrix(double, int, Side)> jet;
  // Lambda(t + period) = Lambda(t) for all t >= t0.
  std::optional<double> period;
  // Lambda(t) = e^{S (t - t0)}.
  std::optional<Matrix> lti_matrix;

  Matrix eval(double t, Side side = Side::Right) const;
  Matrix inv(double t, Side side = Side::Right) const;
  // Sorted breakpoints in [a, b].
  std::vector<double> breakpoints_in(double a, double b) const;
  // Exact jet when available, one-sided finite differences otherwise.
  Matrix derivative(double t, int order, Side side) const;
};

// Scalar waveform used by the affine carrier generator.
struct Carrier {
  std::string kind;
  double t0 = 0.0;
  double period = 1.0;  // full repetition period
  bool continuous = false;
  double sup_abs = 0.0;
  // Value and d-th derivative (d >= 1), one-sided at switching instants.
  std::function<double(double, Side)> value;
  std::function<double(double, int, Side)> derivative;
  std::function<std::vector<double>(double, double)> breakpoints;
};

// Waveforms start at t0 and are shifted so that value(t0, Right) = 0.
// sawtooth: amplitude * frac((t - t0) / period).
Carrier sawtooth_carrier(double period, double amplitude, double t0 = 0.0);
// triangular: rises from 0 to amplitude over half a period, then falls back.
Carrier triangular_carrier(double period, double amplitude, double t0 = 0.0);
// square: `high` on the first duty fraction of each period, `low` after.
Carrier square_carrier(double period, double duty, double low, double high, double t0 = 0.0);
// pwm: period k uses duties[k mod duties.size()]; levels 0 and amplitude.
Carrier pwm_carrier(double period, std::vector<double> duties, double amplitude = 1.0, double t0 = 0.0);

Generator lti_generator(const Matrix& s, double t0 = 0.0);

// Lambda = [[1, phi], [0, 1]] with t0 taken from the carrier.
Generator affine_carrier_generator(const Carrier& phi);

// State-transition matrix of omega' = S~(t) omega, cached at the nodes of
// `grid`. Evaluation outside the grid throws. `sgen_jet(t, i, side)` returns
// the i-th derivative of S~ and enables exact Lambda jets.
Generator ltv_generator(const SidedFunction& sgen, double t0, const TimeGrid& grid,
                        const std::function<Matrix(double, int, Side)>& sgen_jet = {});

// Lambda given by a matrix polynomial in local time on each segment.
// Segment k covers [knots[k], knots[k+1]) where knots = {t0, breakpoints..., inf};
// with a period the segment pattern repeats and breakpoints are offsets in (0, period).
struct PiecewisePolynomial {
  std::vector<double> breakpoints;
  std::optional<double> period;
  // segments[k][d] is the coefficient of tau^d, tau = t - segment start.
  std::vector<std::vector<Matrix>> segments;
};
Generator piecewise_generator(const PiecewisePolynomial& spec, double t0 = 0.0);

struct Assumption1Report {
  double t0 = 0.0;
  double t_end = 0.0;
  double probe_step = 0.0;
  std::size_t probe_points = 0;
  std::size_t pair_count = 0;
  bool nonsingular = false;
  double min_det = 0.0;
  bool finite_time_bounded = false;
  double max_norm = 0.0;
  double uniform_ratio_bound = 0.0;  // h
  bool passed = false;
  std::string message;
};

struct Assumption1Options {
  double probe_step = 0.01;
  double det_threshold = 1e-12;
  double ratio_limit = 1e8;
};

Assumption1Report check_assumption1(const Generator& gen, double t0, double t_end,
                                    const Assumption1Options& options = {});

}  // namespace qreg
