#include "qreg/smoothness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qreg {

namespace {

std::vector<Matrix> markov_parameters(const Plant& plant, int jmax) {
  std::vector<Matrix> out;
  Matrix row = plant.C;
  for (int i = 1; i <= jmax; ++i) {
    out.push_back(row * plant.P);
    row = row * plant.A;
  }
  return out;
}

std::vector<double> interior_breakpoints(const Generator& gen, double a, double b) {
  std::vector<double> out;
  for (double t : gen.breakpoints_in(a, b)) {
    if (t > a && t < b) out.push_back(t);
  }
  return out;
}

// Largest difference quotient of f on the uniform grid t0 + i * step.
double max_quotient(const TimeFunction& f, double t0, double t_end, double step) {
  const auto count = static_cast<std::size_t>(std::ceil((t_end - t0) / step - 1e-9));
  double q = 0.0;
  Matrix prev = f(t0);
  double t_prev = t0;
  for (std::size_t i = 1; i <= count; ++i) {
    const double t = i == count ? t_end : t0 + static_cast<double>(i) * step;
    Matrix cur = f(t);
    q = std::max(q, (cur - prev).norm() / (t - t_prev));
    prev = std::move(cur);
    t_prev = t;
  }
  return q;
}

}  // namespace

std::string Degree::str() const {
  switch (kind) {
    case Kind::Discontinuous: return "discontinuous";
    case Kind::Finite: return std::to_string(value);
    case Kind::AtLeast: break;
  }
  return ">=" + std::to_string(value);
}

SmoothnessEstimate smoothness_degree(const TimeFunction& f, const std::vector<double>& breakpoints, int kmax,
                                     double lo, double hi, double tol) {
  std::vector<double> bps;
  for (double b : breakpoints) {
    if (b > lo && b < hi) bps.push_back(b);
  }
  std::sort(bps.begin(), bps.end());
  for (int k = 0; k <= kmax; ++k) {
    for (std::size_t i = 0; i < bps.size(); ++i) {
      const double b = bps[i];
      const double prev = i == 0 ? lo : bps[i - 1];
      const double next = i + 1 == bps.size() ? hi : bps[i + 1];
      const double gap = std::min(b - prev, next - b);
      const double h = std::min(0.05, gap / (2.0 * (k + 4)));
      const Matrix l1 = one_sided_derivative(f, b, k, Side::Left, h);
      const Matrix r1 = one_sided_derivative(f, b, k, Side::Right, h);
      const Matrix l2 = one_sided_derivative(f, b, k, Side::Left, h / 2.0);
      const Matrix r2 = one_sided_derivative(f, b, k, Side::Right, h / 2.0);
      const double err = std::max((l1 - l2).norm(), (r1 - r2).norm());
      const double diff = (l2 - r2).norm();
      const double scale = std::max({1.0, l2.norm(), r2.norm()});
      if (diff > std::max(tol * scale, 10.0 * err)) {
        return {k == 0 ? Degree::discontinuous() : Degree::finite(k - 1), diff, b};
      }
    }
  }
  return {Degree::at_least(kmax), 0.0, 0.0};
}

SmoothnessEstimate smoothness_degree_exact(const std::function<Matrix(int, double, Side)>& deriv,
                                           const std::vector<double>& breakpoints, int kmax, double tol) {
  for (int k = 0; k <= kmax; ++k) {
    for (double b : breakpoints) {
      const Matrix l = deriv(k, b, Side::Left);
      const Matrix r = deriv(k, b, Side::Right);
      const double diff = (r - l).norm();
      if (diff > tol * std::max({1.0, l.norm(), r.norm()})) {
        return {k == 0 ? Degree::discontinuous() : Degree::finite(k - 1), diff, b};
      }
    }
  }
  return {Degree::at_least(kmax), 0.0, 0.0};
}

Matrix v_function(const Plant& plant, const Generator& gen, int j, double t, const TimeGrid& grid) {
  validate(plant);
  if (j < 0 || j > plant.n()) throw Error("v_function: j must lie in [0, n]");
  if (t < gen.t0) throw Error("v_function: t < t0");
  Matrix out = plant.Q * gen.eval(t, Side::Right);
  const auto markov = markov_parameters(plant, j);
  for (int i = 1; i <= j; ++i) {
    const Matrix m = markov[static_cast<std::size_t>(i - 1)];
    out += repeated_integral([&gen, m](double s) { return Matrix(m * gen.eval(s, Side::Right)); }, i, gen.t0, t,
                             grid);
  }
  return out;
}

VLadder::VLadder(const Plant& plant, const Generator& gen, const TimeGrid& grid, int jmax)
    : gen_(gen), q_(plant.Q), markov_(markov_parameters(plant, jmax)), jmax_(jmax) {
  if (jmax < 0) throw Error("v ladder: negative depth");
  tables_.reserve(static_cast<std::size_t>(jmax));
  for (int i = 1; i <= jmax; ++i) {
    const Matrix m = markov_[static_cast<std::size_t>(i - 1)];
    const Generator g = gen;
    tables_.emplace_back([g, m](double s) { return Matrix(m * g.eval(s, Side::Right)); }, i, grid);
  }
}

Matrix VLadder::value(int j, double t, Side side) const { return derivative(j, 0, t, side); }

Matrix VLadder::derivative(int j, int m, double t, Side side) const {
  if (j < 0 || j > jmax_) throw Error("v ladder: j out of range");
  Matrix out = q_ * gen_.derivative(t, m, side);
  for (int i = 1; i <= j; ++i) {
    const auto idx = static_cast<std::size_t>(i - 1);
    if (m >= i) {
      out += markov_[idx] * gen_.derivative(t, m - i, side);
    } else {
      out += tables_[idx].value(i - m, t);
    }
  }
  return out;
}

SmoothnessProfile compute_profile(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                  const SmoothnessOptions& options) {
  validate(plant);
  if (plant.nu() != gen.nu) throw Error("compute_profile: plant and generator dimensions differ");
  const int n = static_cast<int>(plant.n());
  const double t0 = grid.t0();
  const double t_end = grid.t_end();
  const auto bps = interior_breakpoints(gen, t0, t_end);
  const auto markov = markov_parameters(plant, n);

  SmoothnessProfile prof;
  prof.jmax = n;
  prof.exact_jets = static_cast<bool>(gen.jet);

  if (prof.exact_jets) {
    // One-sided jets of Lambda at every breakpoint, orders 0..n.
    std::vector<std::vector<Matrix>> left(bps.size()), right(bps.size());
    for (std::size_t b = 0; b < bps.size(); ++b) {
      for (int d = 0; d <= n; ++d) {
        left[b].push_back(gen.derivative(bps[b], d, Side::Left));
        right[b].push_back(gen.derivative(bps[b], d, Side::Right));
      }
    }
    for (int j = 0; j <= n; ++j) {
      SmoothnessEstimate est{Degree::at_least(n), 0.0, 0.0};
      bool found = false;
      for (int m = 0; m <= n && !found; ++m) {
        for (std::size_t b = 0; b < bps.size() && !found; ++b) {
          Matrix l = plant.Q * left[b][static_cast<std::size_t>(m)];
          Matrix r = plant.Q * right[b][static_cast<std::size_t>(m)];
          for (int i = 1; i <= std::min(j, m); ++i) {
            const Matrix& mk = markov[static_cast<std::size_t>(i - 1)];
            l += mk * left[b][static_cast<std::size_t>(m - i)];
            r += mk * right[b][static_cast<std::size_t>(m - i)];
          }
          const double diff = (r - l).norm();
          if (diff > options.tol * std::max({1.0, l.norm(), r.norm()})) {
            est = {m == 0 ? Degree::discontinuous() : Degree::finite(m - 1), diff, bps[b]};
            found = true;
          }
        }
      }
      prof.degrees.push_back(est.degree);
      prof.mismatches.push_back(est.mismatch);
    }
  } else {
    const VLadder ladder(plant, gen, grid, n);
    for (int j = 0; j <= n; ++j) {
      const auto est = smoothness_degree([&ladder, j](double t) { return ladder.value(j, t); }, bps, n, t0, t_end,
                                         options.tol);
      prof.degrees.push_back(est.degree);
      prof.mismatches.push_back(est.mismatch);
    }
  }
  prof.jstar = prof.degrees.back();
  prof.qlambda_continuous = prof.degrees.front().kind != Degree::Kind::Discontinuous;

  const TimeFunction qlam = [&](double t) { return Matrix(plant.Q * gen.eval(t, Side::Right)); };
  double s = options.lipschitz_probe_step;
  for (double& q : prof.lipschitz_quotients) {
    q = max_quotient(qlam, t0, t_end, s);
    s /= 2.0;
  }
  const double q1 = prof.lipschitz_quotients[0];
  const double q4 = prof.lipschitz_quotients[2];
  const bool stable = std::isfinite(q4) && (q4 <= 1e-12 || q4 < options.lipschitz_ratio * q1);
  prof.lipschitz_QLambda = stable && prof.qlambda_continuous;

  double bound = 0.0;
  const TimeGrid probe(t0, t_end, options.lipschitz_probe_step, bps);
  for (const auto& smp : probe.samples()) {
    bound = std::max(bound, q_lambda(gen, plant.Q, smp.t, smp.side()).norm());
    if (!std::isfinite(bound)) break;
  }
  prof.qlambda_bound = bound;
  prof.assumption2 = prof.qlambda_continuous && prof.lipschitz_QLambda && std::isfinite(bound);

  if (plant.D == 0.0 && prof.jstar.bounded() && !bps.empty()) {
    const int js = prof.jstar.as_int();
    int r = 0;
    try {
      r = relative_degree(plant);
    } catch (const Error&) {
      r = -1;
    }
    if (js >= 0 && r == js + 1 && js + 1 <= n) {
      // Difference quotients of V_{j*+1}^{(j*)} straddling breakpoints should
      // stay bounded under refinement; growth hints at an infinite derivative.
      const VLadder ladder(plant, gen, grid, js + 1);
      const std::size_t count = std::min<std::size_t>(bps.size(), 10);
      for (std::size_t b = 0; b < count && !prof.cancellation_warning; ++b) {
        const double prev = b == 0 ? t0 : bps[b - 1];
        const double next = b + 1 == bps.size() ? t_end : bps[b + 1];
        const double h = std::min(1e-2, 0.5 * std::min(bps[b] - prev, next - bps[b]));
        auto quotient = [&](double step) {
          const Matrix a = ladder.derivative(js + 1, js, bps[b] + step, Side::Right);
          const Matrix c = ladder.derivative(js + 1, js, bps[b] - step, Side::Right);
          return (a - c).norm() / (2.0 * step);
        };
        const double coarse = quotient(h);
        const double fine = quotient(h / 4.0);
        if (fine > 2.0 * coarse + 1e-9) prof.cancellation_warning = true;
      }
    }
  }
  return prof;
}

Matrix q_lambda(const Generator& gen, const Matrix& q, double t, std::optional<Side> side) {
  if (q.rows() != 1 || q.cols() != gen.nu) throw Error("q_lambda: Q must be 1 x nu");
  if (!side) {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    if (!gen.breakpoints_in(t - tol, t + tol).empty()) {
      std::ostringstream msg;
      msg << "q_lambda: t = " << t << " is a breakpoint; a side must be selected";
      throw Error(msg.str());
    }
  }
  const Side s = side.value_or(Side::Right);
  if (gen.sgen) return q * gen.sgen(t, s);
  return q * gen.derivative(t, 1, s) * gen.inv(t, s);
}

const char* necessity_name(Necessity v) { return v == Necessity::Pass ? "pass" : "fail"; }

Necessity check_relative_degree_necessity(const Plant& plant, const SmoothnessProfile& profile) {
  if (plant.D != 0.0) throw Error("relative-degree necessity test requires D = 0");
  const int n = static_cast<int>(plant.n());
  if (!profile.jstar.bounded()) return Necessity::Pass;
  const int js = profile.jstar.as_int();
  if (js >= n) return Necessity::Pass;
  return relative_degree(plant) > js + 1 ? Necessity::Fail : Necessity::Pass;
}

}  // namespace qreg
