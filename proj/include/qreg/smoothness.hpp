#pragma once

#include "qreg/exogen.hpp"
#include "qreg/plant.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qreg {

// Differentiability class of a piecewise-smooth function at its breakpoints.
struct Degree {
  enum class Kind { Discontinuous, Finite, AtLeast };
  Kind kind = Kind::AtLeast;
  int value = 0;

  static Degree discontinuous() { return {Kind::Discontinuous, -1}; }
  static Degree finite(int k) { return {Kind::Finite, k}; }
  static Degree at_least(int k) { return {Kind::AtLeast, k}; }

  // -1 for discontinuous, the count otherwise (a lower bound for AtLeast).
  int as_int() const { return kind == Kind::Discontinuous ? -1 : value; }
  bool bounded() const { return kind != Kind::AtLeast; }
  // "discontinuous", "k" or ">=k".
  std::string str() const;

  bool operator==(const Degree& o) const { return kind == o.kind && value == o.value; }
};

struct SmoothnessEstimate {
  Degree degree;
  double mismatch = 0.0;  // size of the first detected jump (0 when none)
  double at = 0.0;        // breakpoint where it was found
};

// Finite-difference estimate: compares one-sided derivative stencils of f on
// both sides of each breakpoint for orders 0..kmax. [lo, hi] bounds the
// stencils (no evaluation outside it).
SmoothnessEstimate smoothness_degree(const TimeFunction& f, const std::vector<double>& breakpoints, int kmax,
                                     double lo, double hi, double tol = 1e-6);

// Same verdict from exact one-sided derivatives deriv(order, t, side).
SmoothnessEstimate smoothness_degree_exact(const std::function<Matrix(int, double, Side)>& deriv,
                                           const std::vector<double>& breakpoints, int kmax, double tol = 1e-6);

// V_j(t) = sum_{i=1..j} I^[i][C A^{i-1} P Lambda](t) + Q Lambda(t).
Matrix v_function(const Plant& plant, const Generator& gen, int j, double t, const TimeGrid& grid);

// Tabulated ladder V_0..V_jmax on a grid.
class VLadder {
 public:
  VLadder(const Plant& plant, const Generator& gen, const TimeGrid& grid, int jmax);

  int jmax() const { return jmax_; }
  Matrix value(int j, double t, Side side = Side::Right) const;
  // m-th derivative of V_j using generator jets (or its derivative fallback).
  Matrix derivative(int j, int m, double t, Side side) const;

 private:
  Generator gen_;
  Matrix q_;
  std::vector<Matrix> markov_;  // C A^{i-1} P, i = 1..jmax
  std::vector<RepeatedIntegralTable> tables_;
  int jmax_;
};

struct SmoothnessOptions {
  double tol = 1e-6;
  double lipschitz_probe_step = 0.01;
  double lipschitz_ratio = 2.0;
};

struct SmoothnessProfile {
  int jmax = 0;
  std::vector<Degree> degrees;       // c_0..c_jmax
  std::vector<double> mismatches;    // jump sizes behind each degree
  Degree jstar;
  bool exact_jets = false;
  bool qlambda_continuous = false;
  bool lipschitz_QLambda = false;
  double lipschitz_quotients[3] = {0.0, 0.0, 0.0};  // probe steps s, s/2, s/4
  bool assumption2 = false;
  double qlambda_bound = 0.0;
  bool cancellation_warning = false;
};

SmoothnessProfile compute_profile(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                  const SmoothnessOptions& options = {});

// d/dt (Q Lambda) Lambda^{-1}. Without a side, t must not be a breakpoint.
Matrix q_lambda(const Generator& gen, const Matrix& q, double t, std::optional<Side> side = std::nullopt);

enum class Necessity { Pass, Fail };
const char* necessity_name(Necessity v);

// Fail iff jstar is finite, jstar < n and r > jstar + 1. Requires D = 0.
Necessity check_relative_degree_necessity(const Plant& plant, const SmoothnessProfile& profile);

}  // namespace qreg
