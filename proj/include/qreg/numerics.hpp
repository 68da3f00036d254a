#pragma once

// Small dense numerics shared by every other module: matrix exponential,
// Kronecker products, breakpoint-aware quadrature and fixed-step integration.
//
// Everything here is a pure function of its arguments. Sizes in scope are
// tiny (state dimension <= 10, exogenous dimension <= 6), so Eigen's dynamic
// matrices are used throughout.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the integrators when the state stops being finite.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Which one-sided limit to take at a breakpoint. Off breakpoints both sides agree.
enum class Side { Left, Right };

// Row tag of a sampled trajectory. Interior breakpoints produce a Left row
// followed by a Right row; every other node produces a single Interior row.
enum class SampleTag { Left, Interior, Right };

struct Sample {
  double t;
  SampleTag tag;
  std::size_t node;

  Side side() const { return tag == SampleTag::Left ? Side::Left : Side::Right; }
};

// "-", "·" or "+".
const char* tag_symbol(SampleTag tag);

// Integration grid on [t0, t_end]. Nodes are built segment by segment between
// consecutive breakpoints, so every breakpoint is a node and no panel exceeds
// `step` or straddles a breakpoint.
class TimeGrid {
 public:
  TimeGrid(double t0, double t_end, double step, std::vector<double> breakpoints = {});

  double t0() const { return t0_; }
  double t_end() const { return t_end_; }
  double step() const { return step_; }

  // Breakpoints strictly inside (t0, t_end), sorted and deduplicated.
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  bool is_breakpoint_node(std::size_t i) const { return breakpoint_node_[i]; }
  std::vector<Sample> samples() const;

  // Index of the last node <= t (clamped to the valid range).
  std::size_t locate(double t) const;

  // Same grid restricted to nodes with t <= t_cut, t_cut must be a node.
  TimeGrid truncated(double t_cut) const;

 private:
  double t0_;
  double t_end_;
  double step_;
  std::vector<double> breakpoints_;
  std::vector<double> nodes_;
  std::vector<bool> breakpoint_node_;
};

bool all_finite(const Matrix& m);

// e^{M dt}. Throws on non-square or non-finite input.
Matrix expm(const Matrix& m, double dt);

Matrix kron(const Matrix& a, const Matrix& b);

// Induced 2-norm.
double spectral_norm(const Matrix& m);

// Column-major vectorization and its inverse.
Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols);

using TimeFunction = std::function<Matrix(double)>;
using SidedFunction = std::function<Matrix(double, Side)>;

// Three-point Gauss-Legendre rule on [0, 1]: abscissae and weights.
struct GaussRule {
  double x[3];
  double w[3];
};
const GaussRule& gauss3();

// k-times repeated integral of H from t0 to t, evaluated through the Cauchy
// kernel (t - s)^{k-1} / (k-1)! on the panels of `grid`. H is only sampled at
// panel interiors, so its values at breakpoints never matter.
Matrix repeated_integral(const TimeFunction& h, int k, double t0, double t, const TimeGrid& grid);

// Repeated integrals of orders 1..kmax tabulated at every grid node in one
// sweep (t0 = grid.t0()). Values between nodes are obtained from the nearest
// node on the left with the exact Taylor shift plus one local kernel panel.
class RepeatedIntegralTable {
 public:
  RepeatedIntegralTable(const TimeFunction& h, int kmax, const TimeGrid& grid);

  int kmax() const { return kmax_; }
  Matrix value(int k, double t) const;

 private:
  std::vector<Matrix> local_panels(double a, double b) const;

  TimeFunction h_;
  int kmax_;
  TimeGrid grid_;
  // table_[k-1][node]
  std::vector<std::vector<Matrix>> table_;
};

// Right-hand side of X' = f(t, X). `side` tells which one-sided limit of any
// piecewise-continuous data to use: Right at the start of a step, Left at its end.
using OdeRhs = std::function<Matrix(double, const Matrix&, Side)>;
using PostStep = std::function<void(Matrix&)>;

// Classical fourth-order Runge-Kutta on the grid nodes. Deterministic; steps
// never straddle a breakpoint. Returns one state per node.
std::vector<Matrix> integrate_ode(const OdeRhs& rhs, const Matrix& x0, const TimeGrid& grid,
                                  const PostStep& post_step = {});

// Same scheme run from t_end back to t0, starting at x_end.
std::vector<Matrix> integrate_ode_backward(const OdeRhs& rhs, const Matrix& x_end,
                                           const TimeGrid& grid, const PostStep& post_step = {});

// Solves 0 = A11 X - X S + G1 by vectorization. Throws "resonant spectra"
// when the vectorized operator is singular.
Matrix solve_sylvester(const Matrix& a11, const Matrix& s, const Matrix& g1);

// Spectral projectors of A separating eigenvalues with real part above
// `threshold` (unstable) from the rest. The projectors commute with A.
struct SpectralSplit {
  Matrix unstable;
  Matrix center_stable;
  bool has_unstable = false;
};
SpectralSplit spectral_split(const Matrix& a, double threshold);

// Estimate of the order-th derivative of f at t from one side, using a
// polynomial through the points t +/- i*h, i = 1..order+3 (t itself excluded).
Matrix one_sided_derivative(const TimeFunction& f, double t, int order, Side side, double h);

}  // namespace qreg
