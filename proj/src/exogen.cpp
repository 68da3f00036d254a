#include "qreg/exogen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qreg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Phase {
  double k;
  double frac;  // in [0, 1]; 1 only for a Left limit at a period boundary
};

double snap_tolerance(double f) { return 64.0 * kEps * std::max(1.0, std::abs(f)); }

Phase phase_of(double s, double period, Side side) {
  const double f = s / period;
  double k = std::floor(f);
  double frac = f - k;
  const double snap = snap_tolerance(f);
  if (frac < snap) {
    frac = 0.0;
  } else if (1.0 - frac < snap) {
    k += 1.0;
    frac = 0.0;
  }
  if (frac == 0.0 && side == Side::Left) {
    k -= 1.0;
    frac = 1.0;
  }
  return {k, frac};
}

// True when the one-sided limit at `frac` lies before the switching fraction x.
bool before(double frac, double x, Side side, double scale) {
  if (std::abs(frac - x) < snap_tolerance(scale)) return side == Side::Left;
  return frac < x;
}

// Switching instants t0 + (k + offset) * period within [a, b], excluding t0.
std::vector<double> periodic_instants(double t0, double period, const std::vector<double>& offsets,
                                      double a, double b,
                                      const std::function<bool(long long, double)>& keep = {}) {
  std::vector<double> out;
  if (b < a) return out;
  const auto k_lo = static_cast<long long>(std::max(0.0, std::floor((a - t0) / period) - 1.0));
  const auto k_hi = static_cast<long long>(std::ceil((b - t0) / period) + 1.0);
  for (long long k = k_lo; k <= k_hi; ++k) {
    for (double off : offsets) {
      const double t = t0 + (static_cast<double>(k) + off) * period;
      if (!(t > t0) || t < a || t > b) continue;
      if (keep && !keep(k, off)) continue;
      out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void require_period(double period, const char* what) {
  if (!std::isfinite(period) || !(period > 0.0)) {
    throw Error(std::string(what) + ": period must be positive and finite");
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(std::string(what) + ": carrier parameters must be finite");
}

Matrix guarded_inverse(const Matrix& m, double t, const char* what) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > 1e12) {
    std::ostringstream msg;
    msg << what << " at t = " << t;
    throw Error(msg.str());
  }
  return m.partialPivLu().inverse();
}

double falling_factorial(int d, int k) {
  double out = 1.0;
  for (int i = 0; i < k; ++i) out *= d - i;
  return out;
}

double binomial(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

}  // namespace

Matrix Generator::eval(double t, Side side) const { return eval_fn(t, side); }

Matrix Generator::inv(double t, Side side) const { return inv_fn(t, side); }

std::vector<double> Generator::breakpoints_in(double a, double b) const {
  if (!breakpoints_fn) return {};
  return breakpoints_fn(a, b);
}

Matrix Generator::derivative(double t, int order, Side side) const {
  if (order == 0) return eval(t, side);
  if (jet) return jet(t, order, side);
  if (order == 1 && sgen) return sgen(t, side) * eval(t, side);
  // Stay inside [t0, ...) and away from neighbouring breakpoints.
  double h = 1e-3;
  const auto near = breakpoints_in(t - 0.1, t + 0.1);
  for (double b : near) {
    if (b != t) h = std::min(h, std::abs(b - t) / (2.0 * (order + 4)));
  }
  Side use = side;
  if (use == Side::Left && t - (order + 3) * h < t0) use = Side::Right;
  return one_sided_derivative([this, use](double s) { return eval(s, use); }, t, order, use, h);
}

Carrier sawtooth_carrier(double period, double amplitude, double t0) {
  require_period(period, "sawtooth");
  require_finite(amplitude, "sawtooth");
  Carrier c;
  c.kind = "sawtooth";
  c.t0 = t0;
  c.period = period;
  c.continuous = false;
  c.sup_abs = std::abs(amplitude);
  c.value = [=](double t, Side side) { return amplitude * phase_of(t - t0, period, side).frac; };
  c.derivative = [=](double, int d, Side) { return d == 1 ? amplitude / period : 0.0; };
  c.breakpoints = [=](double a, double b) { return periodic_instants(t0, period, {0.0}, a, b); };
  return c;
}

Carrier triangular_carrier(double period, double amplitude, double t0) {
  require_period(period, "triangular");
  require_finite(amplitude, "triangular");
  Carrier c;
  c.kind = "triangular";
  c.t0 = t0;
  c.period = period;
  c.continuous = true;
  c.sup_abs = std::abs(amplitude);
  const double slope = 2.0 * amplitude / period;
  c.value = [=](double t, Side side) {
    const double frac = phase_of(t - t0, period, side).frac;
    return frac < 0.5 ? 2.0 * amplitude * frac : 2.0 * amplitude * (1.0 - frac);
  };
  c.derivative = [=](double t, int d, Side side) {
    if (d != 1) return 0.0;
    const double f = (t - t0) / period;
    return before(phase_of(t - t0, period, side).frac, 0.5, side, f) ? slope : -slope;
  };
  c.breakpoints = [=](double a, double b) { return periodic_instants(t0, period, {0.0, 0.5}, a, b); };
  return c;
}

Carrier square_carrier(double period, double duty, double low, double high, double t0) {
  require_period(period, "square");
  require_finite(low, "square");
  require_finite(high, "square");
  if (!(duty >= 0.0 && duty <= 1.0)) throw Error("square: duty must lie in [0, 1]");
  Carrier c;
  c.kind = "square";
  c.t0 = t0;
  c.period = period;
  const double base = duty > 0.0 ? high : low;
  const bool flat = duty == 0.0 || duty == 1.0 || low == high;
  c.continuous = flat;
  c.sup_abs = std::max(std::abs(high - base), std::abs(low - base));
  c.value = [=](double t, Side side) {
    const double f = (t - t0) / period;
    const bool on = duty > 0.0 && before(phase_of(t - t0, period, side).frac, duty, side, f);
    return (on ? high : low) - base;
  };
  c.derivative = [](double, int, Side) { return 0.0; };
  c.breakpoints = [=](double a, double b) {
    if (flat) return std::vector<double>{};
    return periodic_instants(t0, period, {0.0, duty}, a, b);
  };
  return c;
}

Carrier pwm_carrier(double period, std::vector<double> duties, double amplitude, double t0) {
  require_period(period, "pwm");
  require_finite(amplitude, "pwm");
  if (duties.empty()) throw Error("pwm: duty sequence must not be empty");
  for (double d : duties) {
    if (!(d >= 0.0 && d <= 1.0)) throw Error("pwm: every duty must lie in [0, 1]");
  }
  const auto len = static_cast<long long>(duties.size());
  auto duty_of = [duties, len](long long k) {
    return duties[static_cast<std::size_t>(((k % len) + len) % len)];
  };
  Carrier c;
  c.kind = "pwm";
  c.t0 = t0;
  c.period = period * static_cast<double>(len);
  const double base = duties[0] > 0.0 ? amplitude : 0.0;
  c.continuous = amplitude == 0.0 || std::all_of(duties.begin(), duties.end(), [&](double d) {
                   return d == duties[0] && (d == 0.0 || d == 1.0);
                 });
  c.sup_abs = std::abs(amplitude);
  c.value = [=](double t, Side side) {
    const double f = (t - t0) / period;
    const Phase p = phase_of(t - t0, period, side);
    const double d = duty_of(static_cast<long long>(p.k));
    const bool on = d > 0.0 && before(p.frac, d, side, f);
    return (on ? amplitude : 0.0) - base;
  };
  c.derivative = [](double, int, Side) { return 0.0; };
  c.breakpoints = [=](double a, double b) {
    std::vector<double> out;
    if (amplitude == 0.0 || b < a) return out;
    const auto k_lo = static_cast<long long>(std::max(0.0, std::floor((a - t0) / period) - 1.0));
    const auto k_hi = static_cast<long long>(std::ceil((b - t0) / period) + 1.0);
    for (long long k = k_lo; k <= k_hi; ++k) {
      const double d = duty_of(k);
      const double start = t0 + static_cast<double>(k) * period;
      if (k > 0) {
        const bool end_on = duty_of(k - 1) >= 1.0;
        const bool start_on = d > 0.0;
        if (end_on != start_on && start >= a && start <= b) out.push_back(start);
      }
      const double mid = t0 + (static_cast<double>(k) + d) * period;
      if (d > 0.0 && d < 1.0 && mid > t0 && mid >= a && mid <= b) out.push_back(mid);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  return c;
}

Generator lti_generator(const Matrix& s, double t0) {
  if (s.rows() != s.cols() || s.rows() < 1) throw Error("lti generator: S must be square and non-empty");
  if (!all_finite(s)) throw Error("lti generator: S must be finite");
  Generator g;
  g.kind = "lti";
  g.nu = s.rows();
  g.t0 = t0;
  g.eval_fn = [s, t0](double t, Side) { return expm(s, t - t0); };
  g.inv_fn = [s, t0](double t, Side) { return expm(s, t0 - t); };
  g.breakpoints_fn = [](double, double) { return std::vector<double>{}; };
  g.sgen = [s](double, Side) { return s; };
  g.jet = [s, t0](double t, int d, Side) {
    Matrix out = expm(s, t - t0);
    for (int i = 0; i < d; ++i) out = s * out;
    return out;
  };
  g.lti_matrix = s;
  return g;
}

Generator affine_carrier_generator(const Carrier& phi) {
  if (!phi.value || !std::isfinite(phi.sup_abs)) throw Error("affine carrier: unbounded carrier");
  Generator g;
  g.kind = phi.kind;
  g.nu = 2;
  g.t0 = phi.t0;
  auto checked = [phi](double t, Side side) {
    const double v = phi.value(t, side);
    if (!std::isfinite(v)) throw Error("affine carrier: non-finite carrier sample");
    return v;
  };
  g.eval_fn = [checked](double t, Side side) {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 1) = checked(t, side);
    return m;
  };
  g.inv_fn = [checked](double t, Side side) {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 1) = -checked(t, side);
    return m;
  };
  g.breakpoints_fn = phi.breakpoints;
  g.jet = [phi, checked](double t, int d, Side side) {
    if (d == 0) {
      Matrix m = Matrix::Identity(2, 2);
      m(0, 1) = checked(t, side);
      return m;
    }
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = phi.derivative(t, d, side);
    return m;
  };
  if (phi.continuous) {
    g.sgen = [phi](double t, Side side) {
      Matrix m = Matrix::Zero(2, 2);
      m(0, 1) = phi.derivative(t, 1, side);
      return m;
    };
  }
  g.period = phi.period;
  return g;
}

namespace {

struct LtvData {
  SidedFunction sgen;
  std::function<Matrix(double, int, Side)> sgen_jet;
  TimeGrid grid;
  std::vector<Matrix> nodes;

  Matrix eval(double t) const {
    const double tol = 1e-12 * std::max({1.0, std::abs(grid.t0()), std::abs(grid.t_end())});
    if (t < grid.t0() - tol || t > grid.t_end() + tol) {
      std::ostringstream msg;
      msg << "ltv generator: t = " << t << " outside [" << grid.t0() << ", " << grid.t_end() << "]";
      throw Error(msg.str());
    }
    const std::size_t i = grid.locate(t);
    const double a = grid.nodes()[i];
    if (t <= a || i + 1 == grid.size()) return nodes[i];
    const double h = t - a;
    const Matrix& x = nodes[i];
    const Matrix k1 = sgen(a, Side::Right) * x;
    const Matrix k2 = sgen(a + 0.5 * h, Side::Right) * (x + (0.5 * h) * k1);
    const Matrix k3 = sgen(a + 0.5 * h, Side::Right) * (x + (0.5 * h) * k2);
    const Matrix k4 = sgen(t, Side::Left) * (x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
};

}  // namespace

Generator ltv_generator(const SidedFunction& sgen, double t0, const TimeGrid& grid,
                        const std::function<Matrix(double, int, Side)>& sgen_jet) {
  if (!sgen) throw Error("ltv generator: missing S~");
  if (std::abs(grid.t0() - t0) > 1e-12 * std::max(1.0, std::abs(t0))) {
    throw Error("ltv generator: grid must start at t0");
  }
  const Matrix s0 = sgen(t0, Side::Right);
  if (s0.rows() != s0.cols() || s0.rows() < 1) throw Error("ltv generator: S~ must be square");
  auto data = std::make_shared<LtvData>(LtvData{sgen, sgen_jet, grid, {}});
  const Eigen::Index nu = s0.rows();
  data->nodes = integrate_ode([&sgen](double t, const Matrix& x, Side side) { return Matrix(sgen(t, side) * x); },
                              Matrix::Identity(nu, nu), grid);

  Generator g;
  g.kind = "ltv";
  g.nu = nu;
  g.t0 = t0;
  g.eval_fn = [data](double t, Side) { return data->eval(t); };
  g.inv_fn = [data](double t, Side) { return guarded_inverse(data->eval(t), t, "near-singular transition matrix"); };
  g.breakpoints_fn = [data](double a, double b) {
    std::vector<double> out;
    for (double bp : data->grid.breakpoints()) {
      if (bp >= a && bp <= b) out.push_back(bp);
    }
    return out;
  };
  g.sgen = sgen;
  if (sgen_jet) {
    g.jet = [data](double t, int d, Side side) {
      std::vector<Matrix> lam{data->eval(t)};
      for (int k = 0; k < d; ++k) {
        Matrix next = Matrix::Zero(lam[0].rows(), lam[0].cols());
        for (int i = 0; i <= k; ++i) {
          const Matrix si = i == 0 ? data->sgen(t, side) : data->sgen_jet(t, i, side);
          next += binomial(k, i) * si * lam[static_cast<std::size_t>(k - i)];
        }
        lam.push_back(std::move(next));
      }
      return lam.back();
    };
  }
  return g;
}

namespace {

struct PiecewiseData {
  PiecewisePolynomial spec;
  double t0;
  Eigen::Index nu;

  // Segment index and local time for a one-sided evaluation at t.
  std::pair<std::size_t, double> locate(double t, Side side) const {
    const auto& bps = spec.breakpoints;
    if (spec.period) {
      const double p = *spec.period;
      const double f = (t - t0) / p;
      const Phase ph = phase_of(t - t0, p, side);
      std::size_t j = 0;
      for (double b : bps) {
        if (!before(ph.frac, b / p, side, f)) ++j;
      }
      const double start = j == 0 ? 0.0 : bps[j - 1];
      return {j, ph.frac * p - start};
    }
    std::size_t j = 0;
    for (double b : bps) {
      const bool passed = side == Side::Right ? b <= t : b < t;
      if (passed) ++j;
    }
    const double start = j == 0 ? t0 : bps[j - 1];
    return {j, t - start};
  }

  Matrix jet(double t, int d, Side side) const {
    const auto [j, tau] = locate(t, side);
    const auto& coeffs = spec.segments[j];
    Matrix out = Matrix::Zero(nu, nu);
    double power = 1.0;
    for (std::size_t k = static_cast<std::size_t>(d); k < coeffs.size(); ++k) {
      out += falling_factorial(static_cast<int>(k), d) * power * coeffs[k];
      power *= tau;
    }
    return out;
  }
};

}  // namespace

Generator piecewise_generator(const PiecewisePolynomial& spec, double t0) {
  if (spec.segments.size() != spec.breakpoints.size() + 1) {
    throw Error("custom-piecewise: need exactly one segment more than breakpoints");
  }
  if (spec.segments.empty() || spec.segments[0].empty()) {
    throw Error("custom-piecewise: segments must carry at least one coefficient matrix");
  }
  const Eigen::Index nu = spec.segments[0][0].rows();
  if (nu < 1) throw Error("custom-piecewise: empty coefficient matrix");
  for (const auto& seg : spec.segments) {
    if (seg.empty()) throw Error("custom-piecewise: empty segment");
    for (const auto& c : seg) {
      if (c.rows() != nu || c.cols() != nu) throw Error("custom-piecewise: coefficient matrices must be nu x nu");
      if (!all_finite(c)) throw Error("custom-piecewise: coefficients must be finite");
    }
  }
  for (std::size_t i = 0; i < spec.breakpoints.size(); ++i) {
    const double b = spec.breakpoints[i];
    if (!std::isfinite(b) || (i > 0 && !(b > spec.breakpoints[i - 1]))) {
      throw Error("custom-piecewise: breakpoints must be finite and strictly increasing");
    }
    if (spec.period ? !(b > 0.0 && b < *spec.period) : !(b > t0)) {
      throw Error(spec.period ? "custom-piecewise: breakpoint offsets must lie in (0, period)"
                              : "custom-piecewise: breakpoints must lie after t0");
    }
  }
  if (spec.period) require_period(*spec.period, "custom-piecewise");

  auto data = std::make_shared<PiecewiseData>(PiecewiseData{spec, t0, nu});
  Generator g;
  g.kind = "custom-piecewise";
  g.nu = nu;
  g.t0 = t0;
  g.eval_fn = [data](double t, Side side) { return data->jet(t, 0, side); };
  g.inv_fn = [data](double t, Side side) {
    return guarded_inverse(data->jet(t, 0, side), t, "near-singular generator matrix");
  };
  g.breakpoints_fn = [data](double a, double b) {
    if (!data->spec.period) {
      std::vector<double> out;
      for (double bp : data->spec.breakpoints) {
        if (bp >= a && bp <= b) out.push_back(bp);
      }
      return out;
    }
    const double p = *data->spec.period;
    std::vector<double> offsets{0.0};
    for (double bp : data->spec.breakpoints) offsets.push_back(bp / p);
    return periodic_instants(data->t0, p, offsets, a, b);
  };
  g.jet = [data](double t, int d, Side side) { return data->jet(t, d, side); };
  g.period = spec.period;
  return g;
}

Assumption1Report check_assumption1(const Generator& gen, double t0, double t_end,
                                    const Assumption1Options& options) {
  Assumption1Report rep;
  rep.t0 = t0;
  rep.t_end = t_end;
  rep.probe_step = options.probe_step;
  const TimeGrid probe(t0, t_end, options.probe_step, gen.breakpoints_in(t0, t_end));
  const auto samples = probe.samples();
  rep.probe_points = samples.size();

  std::vector<Matrix> lam(samples.size());
  std::vector<Matrix> lam_inv(samples.size());
  double min_det = std::numeric_limits<double>::infinity();
  double max_norm = 0.0;
  bool finite = true;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    lam[i] = gen.eval(s.t, s.side());
    lam_inv[i] = gen.inv(s.t, s.side());
    if (!all_finite(lam[i]) || !all_finite(lam_inv[i])) {
      finite = false;
      continue;
    }
    const double norm = spectral_norm(lam[i]);
    max_norm = std::max(max_norm, norm);
    const double scale = std::max(1.0, std::pow(norm, static_cast<double>(gen.nu)));
    min_det = std::min(min_det, std::abs(lam[i].determinant()) / scale);
  }
  rep.min_det = min_det;
  rep.max_norm = max_norm;
  rep.finite_time_bounded = finite && std::isfinite(max_norm);
  rep.nonsingular = finite && min_det > options.det_threshold;

  double h = 0.0;
  std::size_t pairs = 0;
  if (finite) {
    const auto stride = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(samples.size()))));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const bool anchor = i % stride == 0 || samples[i].tag != SampleTag::Interior || i + 1 == samples.size();
      if (!anchor) continue;
      for (std::size_t j = i; j < samples.size(); ++j) {
        const double r = spectral_norm(lam[i] * lam_inv[j]);
        ++pairs;
        if (!std::isfinite(r)) {
          h = std::numeric_limits<double>::infinity();
          break;
        }
        h = std::max(h, r);
      }
      if (!std::isfinite(h)) break;
    }
  } else {
    h = std::numeric_limits<double>::infinity();
  }
  rep.pair_count = pairs;
  rep.uniform_ratio_bound = h;
  rep.passed = rep.nonsingular && rep.finite_time_bounded && std::isfinite(h) && h <= options.ratio_limit;
  if (!rep.finite_time_bounded) {
    rep.message = "generator is not finite on the probe grid";
  } else if (!rep.nonsingular) {
    rep.message = "generator is near-singular on the probe grid";
  } else if (!rep.passed) {
    rep.message = "ratio Lambda(tau) Lambda(t)^{-1} exceeds the uniform bound limit";
  }
  return rep;
}

}  // namespace qreg
