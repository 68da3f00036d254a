#include "qreg/numerics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qreg {

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double time_tolerance(double a, double b) {
  return 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

const char* tag_symbol(SampleTag tag) {
  switch (tag) {
    case SampleTag::Left: return "-";
    case SampleTag::Right: return "+";
    case SampleTag::Interior: break;
  }
  return "\xC2\xB7";
}

TimeGrid::TimeGrid(double t0, double t_end, double step, std::vector<double> breakpoints)
    : t0_(t0), t_end_(t_end), step_(step) {
  if (!std::isfinite(t0) || !std::isfinite(t_end) || !(t0 < t_end)) {
    throw Error("time grid: need finite t0 < t_end");
  }
  if (!std::isfinite(step) || !(step > 0.0)) throw Error("time grid: step must be positive");

  const double tol = time_tolerance(t0, t_end);
  std::sort(breakpoints.begin(), breakpoints.end());
  for (double b : breakpoints) {
    if (!std::isfinite(b) || b < t0 - tol || b > t_end + tol) {
      std::ostringstream msg;
      msg << "time grid: breakpoint " << b << " outside [" << t0 << ", " << t_end << "]";
      throw Error(msg.str());
    }
    if (b <= t0 + tol || b >= t_end - tol) continue;
    if (!breakpoints_.empty() && b - breakpoints_.back() <= tol) continue;
    breakpoints_.push_back(b);
  }

  std::vector<double> knots;
  knots.reserve(breakpoints_.size() + 2);
  knots.push_back(t0);
  knots.insert(knots.end(), breakpoints_.begin(), breakpoints_.end());
  knots.push_back(t_end);

  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double a = knots[s];
    const double b = knots[s + 1];
    const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / step - 1e-9)));
    for (std::size_t i = 0; i < panels; ++i) {
      nodes_.push_back(i == 0 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(panels));
      breakpoint_node_.push_back(i == 0 && s > 0);
    }
  }
  nodes_.push_back(t_end);
  breakpoint_node_.push_back(false);
}

std::vector<Sample> TimeGrid::samples() const {
  std::vector<Sample> out;
  out.reserve(nodes_.size() + 2 * breakpoints_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (breakpoint_node_[i]) {
      out.push_back({nodes_[i], SampleTag::Left, i});
      out.push_back({nodes_[i], SampleTag::Right, i});
    } else {
      out.push_back({nodes_[i], SampleTag::Interior, i});
    }
  }
  return out;
}

std::size_t TimeGrid::locate(double t) const {
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  if (it == nodes_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(nodes_.begin(), it) - 1);
}

TimeGrid TimeGrid::truncated(double t_cut) const {
  std::vector<double> kept;
  for (double b : breakpoints_) {
    if (b < t_cut) kept.push_back(b);
  }
  return TimeGrid(t0_, t_cut, step_, kept);
}

bool all_finite(const Matrix& m) { return m.array().isFinite().all(); }

Matrix expm(const Matrix& m, double dt) {
  if (m.rows() != m.cols()) throw Error("expm: matrix must be square");
  if (!std::isfinite(dt) || !all_finite(m)) throw Error("expm: non-finite input");
  if (m.size() == 0) return Matrix(0, 0);
  if (m.rows() == 1) return Matrix::Constant(1, 1, std::exp(m(0, 0) * dt));
  Matrix scaled = m * dt;
  return scaled.exp();
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.size() == 1) return std::abs(m(0, 0));
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  if (m.rows() == 2 && m.cols() == 2) {
    const double a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    const double s = a * a + b * b + c * c + d * d;
    const double det = a * d - b * c;
    const double disc = std::sqrt(std::max(0.0, s * s - 4.0 * det * det));
    return std::sqrt(0.5 * (s + disc));
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw Error("unvec: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

const GaussRule& gauss3() {
  static const GaussRule rule = [] {
    const double r = std::sqrt(0.6) / 2.0;
    return GaussRule{{0.5 - r, 0.5, 0.5 + r}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
  }();
  return rule;
}

Matrix repeated_integral(const TimeFunction& h, int k, double t0, double t, const TimeGrid& grid) {
  if (k < 1) throw Error("repeated_integral: order must be positive");
  if (t < t0) throw Error("repeated_integral: t < t0");
  const double tol = time_tolerance(grid.t0(), grid.t_end());
  if (t0 < grid.t0() - tol || t > grid.t_end() + tol) {
    throw Error("repeated_integral: interval not covered by the grid");
  }
  const auto& rule = gauss3();
  const double norm = 1.0 / factorial(k - 1);

  std::vector<double> cuts{t0};
  const auto& nodes = grid.nodes();
  for (auto it = std::upper_bound(nodes.begin(), nodes.end(), t0); it != nodes.end() && *it < t; ++it) {
    cuts.push_back(*it);
  }
  cuts.push_back(t);

  Matrix acc;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double a = cuts[p];
    const double b = cuts[p + 1];
    if (!(b > a)) continue;
    for (int g = 0; g < 3; ++g) {
      const double s = a + rule.x[g] * (b - a);
      const double weight = rule.w[g] * (b - a) * norm * std::pow(t - s, k - 1);
      Matrix v = h(s);
      if (acc.size() == 0) acc = Matrix::Zero(v.rows(), v.cols());
      acc += weight * v;
    }
  }
  if (acc.size() == 0) {
    Matrix v = h(t0);
    return Matrix::Zero(v.rows(), v.cols());
  }
  return acc;
}

RepeatedIntegralTable::RepeatedIntegralTable(const TimeFunction& h, int kmax, const TimeGrid& grid)
    : h_(h), kmax_(kmax), grid_(grid) {
  if (kmax < 1) throw Error("repeated integral table: order must be positive");
  const auto& nodes = grid_.nodes();
  const Matrix probe = h_(nodes[0]);
  table_.assign(static_cast<std::size_t>(kmax), std::vector<Matrix>(nodes.size()));
  for (int k = 1; k <= kmax; ++k) table_[k - 1][0] = Matrix::Zero(probe.rows(), probe.cols());

  for (std::size_t n = 0; n + 1 < nodes.size(); ++n) {
    const double step = nodes[n + 1] - nodes[n];
    std::vector<Matrix> local = local_panels(nodes[n], nodes[n + 1]);
    for (int k = 1; k <= kmax; ++k) {
      Matrix next = std::move(local[k - 1]);
      double coeff = 1.0;
      for (int m = 0; m < k; ++m) {
        if (m > 0) coeff *= step / m;
        next += coeff * table_[k - m - 1][n];
      }
      table_[k - 1][n + 1] = std::move(next);
    }
  }
}

std::vector<Matrix> RepeatedIntegralTable::local_panels(double a, double b) const {
  const auto& rule = gauss3();
  Matrix values[3];
  for (int g = 0; g < 3; ++g) values[g] = h_(a + rule.x[g] * (b - a));
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(kmax_));
  for (int k = 1; k <= kmax_; ++k) {
    const double norm = 1.0 / factorial(k - 1);
    Matrix acc = Matrix::Zero(values[0].rows(), values[0].cols());
    for (int g = 0; g < 3; ++g) {
      const double s = a + rule.x[g] * (b - a);
      acc += (rule.w[g] * (b - a) * norm * std::pow(b - s, k - 1)) * values[g];
    }
    out.push_back(std::move(acc));
  }
  return out;
}

Matrix RepeatedIntegralTable::value(int k, double t) const {
  if (k < 1 || k > kmax_) throw Error("repeated integral table: order out of range");
  const double tol = time_tolerance(grid_.t0(), grid_.t_end());
  if (t < grid_.t0() - tol || t > grid_.t_end() + tol) {
    throw Error("repeated integral table: time outside the grid");
  }
  const std::size_t n = grid_.locate(t);
  const double a = grid_.nodes()[n];
  if (t == a) return table_[k - 1][n];
  const double step = t - a;
  Matrix out = local_panels(a, t)[k - 1];
  double coeff = 1.0;
  for (int m = 0; m < k; ++m) {
    if (m > 0) coeff *= step / m;
    out += coeff * table_[k - m - 1][n];
  }
  return out;
}

std::vector<Matrix> integrate_ode(const OdeRhs& rhs, const Matrix& x0, const TimeGrid& grid,
                                  const PostStep& post_step) {
  const auto& nodes = grid.nodes();
  std::vector<Matrix> out;
  out.reserve(nodes.size());
  Matrix x = x0;
  if (!all_finite(x)) throw BlowUpError("integrate_ode: non-finite initial state", nodes[0]);
  out.push_back(x);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double t = nodes[i];
    const double h = nodes[i + 1] - t;
    const Matrix k1 = rhs(t, x, Side::Right);
    const Matrix k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1, Side::Right);
    const Matrix k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2, Side::Right);
    const Matrix k4 = rhs(nodes[i + 1], x + h * k3, Side::Left);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (post_step) post_step(x);
    if (!all_finite(x)) {
      std::ostringstream msg;
      msg << "integrate_ode: non-finite state at t = " << nodes[i + 1];
      throw BlowUpError(msg.str(), nodes[i + 1]);
    }
    out.push_back(x);
  }
  return out;
}

std::vector<Matrix> integrate_ode_backward(const OdeRhs& rhs, const Matrix& x_end,
                                           const TimeGrid& grid, const PostStep& post_step) {
  const auto& nodes = grid.nodes();
  std::vector<Matrix> out(nodes.size());
  Matrix x = x_end;
  out.back() = x;
  for (std::size_t i = nodes.size() - 1; i > 0; --i) {
    const double t = nodes[i];
    const double h = nodes[i - 1] - t;
    const Matrix k1 = rhs(t, x, Side::Left);
    const Matrix k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1, Side::Left);
    const Matrix k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2, Side::Left);
    const Matrix k4 = rhs(nodes[i - 1], x + h * k3, Side::Right);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (post_step) post_step(x);
    if (!all_finite(x)) {
      std::ostringstream msg;
      msg << "integrate_ode_backward: non-finite state at t = " << nodes[i - 1];
      throw BlowUpError(msg.str(), nodes[i - 1]);
    }
    out[i - 1] = x;
  }
  return out;
}

Matrix solve_sylvester(const Matrix& a11, const Matrix& s, const Matrix& g1) {
  if (a11.rows() != a11.cols() || s.rows() != s.cols()) {
    throw Error("solve_sylvester: A11 and S must be square");
  }
  if (g1.rows() != a11.rows() || g1.cols() != s.rows()) {
    throw Error("solve_sylvester: G1 dimensions do not match A11 and S");
  }
  const Eigen::Index m = a11.rows();
  const Eigen::Index nu = s.rows();
  if (m == 0) return Matrix(0, nu);
  const Matrix op = kron(Matrix::Identity(nu, nu), a11) - kron(s.transpose(), Matrix::Identity(m, m));
  Eigen::FullPivLU<Matrix> lu(op);
  if (!(lu.rcond() > 1e-13)) {
    throw Error("solve_sylvester: resonant spectra (A11 and S share an eigenvalue)");
  }
  const Vector x = lu.solve(-vec(g1));
  return unvec(x, m, nu);
}

SpectralSplit spectral_split(const Matrix& a, double threshold) {
  SpectralSplit split;
  const Eigen::Index n = a.rows();
  split.unstable = Matrix::Zero(n, n);
  split.center_stable = Matrix::Identity(n, n);
  if (n == 0) return split;

  Eigen::EigenSolver<Matrix> es(a, false);
  double max_rest = -std::numeric_limits<double>::infinity();
  double min_unstable = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = es.eigenvalues()(i).real();
    if (re > threshold) {
      min_unstable = std::min(min_unstable, re);
    } else {
      max_rest = std::max(max_rest, re);
    }
  }
  if (!std::isfinite(min_unstable)) return split;
  split.has_unstable = true;
  if (!std::isfinite(max_rest)) {
    split.unstable = Matrix::Identity(n, n);
    split.center_stable = Matrix::Zero(n, n);
    return split;
  }

  // Matrix sign function of the shifted matrix by scaled Newton iteration.
  const double shift = 0.5 * (max_rest + min_unstable);
  Matrix x = a - shift * Matrix::Identity(n, n);
  bool scale = true;
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Matrix> lu(x);
    const Matrix inv = lu.inverse();
    double mu = 1.0;
    if (scale) mu = std::pow(std::abs(lu.determinant()), -1.0 / static_cast<double>(n));
    if (!std::isfinite(mu) || mu <= 0.0) mu = 1.0;
    const Matrix next = 0.5 * (mu * x + inv / mu);
    const double change = (next - x).lpNorm<1>();
    x = next;
    if (change < 1e-2 * x.lpNorm<1>()) scale = false;
    if (change <= 1e-14 * x.lpNorm<1>()) break;
  }
  split.unstable = 0.5 * (Matrix::Identity(n, n) + x);
  split.center_stable = Matrix::Identity(n, n) - split.unstable;
  return split;
}

Matrix one_sided_derivative(const TimeFunction& f, double t, int order, Side side, double h) {
  if (order < 0) throw Error("one_sided_derivative: negative order");
  if (!(h > 0.0)) throw Error("one_sided_derivative: step must be positive");
  const int m = order + 3;
  const double dir = side == Side::Left ? -1.0 : 1.0;
  Matrix v(m, m);
  for (int i = 0; i < m; ++i) {
    const double u = dir * (i + 1);
    double p = 1.0;
    for (int j = 0; j < m; ++j) {
      v(i, j) = p;
      p *= u;
    }
  }
  Vector e = Vector::Zero(m);
  e(order) = 1.0;
  const Vector weights = v.transpose().fullPivLu().solve(e);
  Matrix acc;
  for (int i = 0; i < m; ++i) {
    Matrix fi = f(t + dir * (i + 1) * h);
    if (acc.size() == 0) acc = Matrix::Zero(fi.rows(), fi.cols());
    acc += weights(i) * fi;
  }
  return acc * (factorial(order) / std::pow(h, order));
}

}  // namespace qreg
