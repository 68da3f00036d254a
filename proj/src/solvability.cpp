#include "qreg/solvability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qreg {

namespace {

// Exponential integrator for W = (Lambda^T kron I) Omega, which obeys
//   W' = (I kron Az) W + (Lambda^T kron proj).
// proj restricts the forcing to an Az-invariant subspace (identity for the
// plain Omega recursion).
class OmegaPropagator {
 public:
  OmegaPropagator(const Matrix& az, const Generator& gen, const Matrix& proj)
      : az_(az), gen_(gen), proj_(proj), m_(az.rows()), nu_(gen.nu) {}

  Eigen::Index dim() const { return m_ * nu_; }

  Matrix step(const Matrix& w, double a, double b) {
    const double h = b - a;
    refresh(h);
    Matrix out(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < nu_; ++i) out.middleRows(i * m_, m_) = e_full_ * w.middleRows(i * m_, m_);
    const auto& rule = gauss3();
    for (int g = 0; g < 3; ++g) {
      const Matrix lam = gen_.eval(a + rule.x[g] * h, Side::Right);
      out += (rule.w[g] * h) * kron(lam.transpose(), e_gauss_[g]);
    }
    return out;
  }

  // Restricts every block row of W to the range of proj.
  void project(Matrix& w) const {
    for (Eigen::Index i = 0; i < nu_; ++i) w.middleRows(i * m_, m_) = proj_ * w.middleRows(i * m_, m_);
  }

  Matrix omega(const Matrix& w, double t, Side side) const {
    return kron(gen_.inv(t, side).transpose(), Matrix::Identity(m_, m_)) * w;
  }

  Matrix lift(double t, const Matrix& omega0) const {
    return kron(gen_.eval(t, Side::Right).transpose(), Matrix::Identity(m_, m_)) * omega0;
  }

 private:
  void refresh(double h) {
    if (have_cache_ && h == cached_h_) return;
    const auto& rule = gauss3();
    e_full_ = expm(az_, h);
    for (int g = 0; g < 3; ++g) e_gauss_[g] = expm(az_, (1.0 - rule.x[g]) * h) * proj_;
    cached_h_ = h;
    have_cache_ = true;
  }

  Matrix az_;
  const Generator& gen_;
  Matrix proj_;
  Eigen::Index m_;
  Eigen::Index nu_;
  bool have_cache_ = false;
  double cached_h_ = 0.0;
  Matrix e_full_;
  Matrix e_gauss_[3];
};

// Visits every sample of `grid` with the Omega value there. Returns false as
// soon as W stops being finite.
template <class Visit>
bool sweep_forward(OmegaPropagator& prop, Matrix w, const TimeGrid& grid, Visit&& visit) {
  const auto& nodes = grid.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!all_finite(w)) return false;
    if (grid.is_breakpoint_node(i)) {
      visit(nodes[i], SampleTag::Left, prop.omega(w, nodes[i], Side::Left));
      visit(nodes[i], SampleTag::Right, prop.omega(w, nodes[i], Side::Right));
    } else {
      visit(nodes[i], SampleTag::Interior, prop.omega(w, nodes[i], Side::Right));
    }
    if (i + 1 < nodes.size()) w = prop.step(w, nodes[i], nodes[i + 1]);
  }
  return true;
}

void classify(OmegaCandidate& c, double slope_tol) {
  c.bounded = c.fit.finite && std::isfinite(c.fit.sup) && c.fit.slope < slope_tol;
  c.growing = !c.fit.finite || (c.fit.slope > slope_tol && c.fit.monotone);
}

OmegaCandidate zero_candidate(const Matrix& az, const Generator& gen, const TimeGrid& grid,
                              const NonResonanceOptions& options, double* measured) {
  OmegaCandidate c;
  c.name = "zero";
  c.available = true;
  const Eigen::Index dim = az.rows() * gen.nu;
  c.omega0 = Matrix::Zero(dim, dim);
  OmegaPropagator prop(az, gen, Matrix::Identity(az.rows(), az.rows()));
  GrowthAccumulator acc(grid.t0(), grid.t_end(), options.windows);
  double spectral = 0.0;
  const bool ok = sweep_forward(prop, Matrix::Zero(dim, dim), grid, [&](double t, SampleTag, const Matrix& om) {
    acc.add(t, om.norm());
    if (measured) spectral = std::max(spectral, spectral_norm(om));
  });
  if (!ok) acc.add(grid.t_end(), std::numeric_limits<double>::infinity());
  c.fit = acc.finish();
  if (measured) *measured = ok ? spectral : std::numeric_limits<double>::infinity();
  classify(c, options.slope_tol);
  return c;
}

OmegaCandidate lti_candidate(const Matrix& az, const Generator& gen, const TimeGrid& grid,
                             const NonResonanceOptions& options) {
  OmegaCandidate c;
  c.name = "lti-fixed-point";
  if (!gen.lti_matrix) {
    c.note = "generator is not LTI";
    return c;
  }
  const Matrix& s = *gen.lti_matrix;
  const Eigen::Index m = az.rows();
  const Eigen::Index nu = s.rows();
  const Matrix as = kron(Matrix::Identity(nu, nu), az) - kron(s.transpose(), Matrix::Identity(m, m));
  // Scale-relative singularity test, matching classical_nonresonance.
  const Eigen::JacobiSVD<Matrix> svd(as);
  const double scale = 1.0 + spectral_norm(az) + spectral_norm(s);
  if (!(svd.singularValues().minCoeff() > 1e-8 * scale)) {
    c.note = "A_S is singular";
    return c;
  }
  c.available = true;
  c.omega0 = -as.inverse();
  // Omega' = A_S Omega + I for Lambda = e^{S (t - t0)}, so Omega0 = -A_S^{-1}
  // is an equilibrium: Omega(t) = e^{A_S (t - t0)} (Omega0 - Omega_fix) + Omega_fix.
  const double residual = (as * c.omega0 + Matrix::Identity(as.rows(), as.cols())).norm();
  const double norm = c.omega0.norm();
  GrowthAccumulator acc(grid.t0(), grid.t_end(), options.windows);
  for (const double t : grid.nodes()) acc.add(t, norm);
  c.fit = acc.finish();
  std::ostringstream note;
  note << "constant trajectory, equilibrium residual " << residual;
  c.note = note.str();
  classify(c, options.slope_tol);
  return c;
}

OmegaCandidate periodic_candidate(const Matrix& az, const Generator& gen, const TimeGrid& grid,
                                  const NonResonanceOptions& options) {
  OmegaCandidate c;
  c.name = "periodic-fixed-point";
  if (!gen.period) {
    c.note = "generator declares no period";
    return c;
  }
  const double t0 = grid.t0();
  const double period = *gen.period;
  const Eigen::Index m = az.rows();
  const Eigen::Index dim = m * gen.nu;
  const TimeGrid one(t0, t0 + period, grid.step(), gen.breakpoints_in(t0, t0 + period));
  OmegaPropagator prop(az, gen, Matrix::Identity(m, m));

  // Forced response over one period from W = 0.
  Matrix g = Matrix::Zero(dim, dim);
  const auto& nodes = one.nodes();
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) g = prop.step(g, nodes[i], nodes[i + 1]);
  const Matrix f = kron(Matrix::Identity(gen.nu, gen.nu), expm(az, period));
  Eigen::FullPivLU<Matrix> lu(Matrix::Identity(dim, dim) - f);
  if (!all_finite(g) || !(lu.rcond() > 1e-12)) {
    c.note = "I - e^{Az T} is singular";
    return c;
  }
  const Matrix w0 = lu.solve(g);
  c.available = true;
  c.omega0 = prop.omega(w0, t0, Side::Right);

  GrowthAccumulator acc(t0, t0 + period, 1);
  Matrix w_end;
  const bool ok = sweep_forward(prop, w0, one, [&](double t, SampleTag, const Matrix& om) { acc.add(t, om.norm()); });
  if (ok) {
    w_end = w0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) w_end = prop.step(w_end, nodes[i], nodes[i + 1]);
  }
  const GrowthFit one_period = acc.finish();
  const double closure = ok ? (w_end - w0).norm() : std::numeric_limits<double>::infinity();
  std::ostringstream note;
  note << "one-period closure error " << closure;
  c.note = note.str();
  // A closed orbit repeats, so every window of the horizon sees the same sup.
  GrowthAccumulator full(grid.t0(), grid.t_end(), options.windows);
  if (ok && closure <= 1e-6 * (1.0 + w0.norm())) {
    for (const double t : grid.nodes()) full.add(t, one_period.sup);
  } else {
    full.add(grid.t_end(), std::numeric_limits<double>::infinity());
  }
  c.fit = full.finish();
  classify(c, options.slope_tol);
  return c;
}

// Bounded solution of the W recursion split along the spectrum of Az: the
// centre-stable part runs forward from zero, the unstable part backward from
// a far horizon with zero terminal value.
OmegaCandidate dichotomy_candidate(const Matrix& az, const Generator& gen, const TimeGrid& grid,
                                   const NonResonanceOptions& options) {
  OmegaCandidate c;
  c.name = "dichotomy";
  const SpectralSplit split = spectral_split(az, 1e-9);
  if (!split.has_unstable) {
    c.note = "Az has no unstable eigenvalues";
    return c;
  }
  double lambda_u = std::numeric_limits<double>::infinity();
  for (const auto& z : sorted_eigenvalues(az)) {
    if (z.real() > 1e-9) lambda_u = std::min(lambda_u, z.real());
  }
  const double tail = std::clamp(40.0 / lambda_u, 1.0, 100.0);
  const double t0 = grid.t0();
  const double t_end = grid.t_end();
  const double t1 = t_end + tail;
  const double t2 = t_end + 2.0 * tail;
  std::vector<double> bps;
  try {
    bps = gen.breakpoints_in(t0, t2);
    gen.eval(t2, Side::Left);
  } catch (const Error& e) {
    c.note = std::string("generator not available beyond the horizon: ") + e.what();
    return c;
  }
  bps.push_back(t_end);
  bps.push_back(t1);
  const TimeGrid ext(t0, t2, grid.step(), bps);
  const auto& nodes = ext.nodes();
  const std::size_t i_end = ext.locate(t_end);
  const std::size_t i_t1 = ext.locate(t1);
  const Eigen::Index m = az.rows();
  const Eigen::Index dim = m * gen.nu;

  OmegaPropagator unstable(az, gen, split.unstable);
  const std::size_t stride = std::max<std::size_t>(1, (i_end + 1) / 20000 + 1);
  std::vector<std::pair<std::size_t, Matrix>> stored;
  Matrix w = Matrix::Zero(dim, dim);
  Matrix w_t1_start;
  for (std::size_t i = nodes.size() - 1; i > 0; --i) {
    if (i <= i_end && (i % stride == 0 || ext.is_breakpoint_node(i) || i == i_end)) stored.emplace_back(i, w);
    w = unstable.step(w, nodes[i], nodes[i - 1]);
    unstable.project(w);
    if (!all_finite(w)) break;
  }
  stored.emplace_back(0, w);
  const Matrix wu0 = w;

  Matrix v = Matrix::Zero(dim, dim);
  for (std::size_t i = i_t1; i > 0; --i) {
    v = unstable.step(v, nodes[i], nodes[i - 1]);
    unstable.project(v);
  }
  const double gap = (v - wu0).norm();
  std::ostringstream note;
  note << "tail " << tail << ", terminal sensitivity " << gap;
  c.note = note.str();
  c.available = true;
  c.omega0 = unstable.omega(wu0, t0, Side::Right);
  if (!all_finite(wu0) || !(gap <= 1e-8 * (1.0 + wu0.norm()))) {
    c.fit.finite = false;
    c.fit.sup = std::numeric_limits<double>::infinity();
    c.fit.slope = std::numeric_limits<double>::infinity();
    classify(c, options.slope_tol);
    return c;
  }
  std::reverse(stored.begin(), stored.end());

  OmegaPropagator stable(az, gen, split.center_stable);
  GrowthAccumulator acc(t0, t_end, options.windows);
  Matrix ws = Matrix::Zero(dim, dim);
  std::size_t k = 0;
  for (std::size_t i = 0; i <= i_end; ++i) {
    if (k < stored.size() && stored[k].first == i) {
      const Matrix total = ws + stored[k].second;
      if (ext.is_breakpoint_node(i) && i != i_end) {
        acc.add(nodes[i], stable.omega(total, nodes[i], Side::Left).norm());
        acc.add(nodes[i], stable.omega(total, nodes[i], Side::Right).norm());
      } else {
        acc.add(nodes[i], stable.omega(total, nodes[i], i == i_end ? Side::Left : Side::Right).norm());
      }
      ++k;
    }
    if (i < i_end) {
      ws = stable.step(ws, nodes[i], nodes[i + 1]);
      stable.project(ws);
      if (!all_finite(ws)) {
        acc.add(t_end, std::numeric_limits<double>::infinity());
        break;
      }
    }
  }
  c.fit = acc.finish();
  classify(c, options.slope_tol);
  return c;
}

}  // namespace

std::vector<Matrix> omega_trajectory(const Matrix& az, const Generator& gen, const Matrix& omega0,
                                     const TimeGrid& grid) {
  if (az.rows() != az.cols()) throw Error("omega_trajectory: Az must be square");
  const Eigen::Index dim = az.rows() * gen.nu;
  if (omega0.rows() != dim || omega0.cols() != dim) {
    throw Error("omega_trajectory: Omega0 must be (n-r) nu x (n-r) nu");
  }
  OmegaPropagator prop(az, gen, Matrix::Identity(az.rows(), az.rows()));
  std::vector<Matrix> out;
  double last = grid.t0();
  const bool ok = sweep_forward(prop, prop.lift(grid.t0(), omega0), grid, [&](double t, SampleTag, const Matrix& om) {
    out.push_back(om);
    last = t;
  });
  if (!ok) {
    std::ostringstream msg;
    msg << "omega_trajectory: non-finite Omega after t = " << last;
    throw BlowUpError(msg.str(), last);
  }
  return out;
}

GrowthAccumulator::GrowthAccumulator(double t0, double t_end, int windows)
    : t0_(t0), t_end_(t_end), sups_(static_cast<std::size_t>(std::max(1, windows)), 0.0) {}

void GrowthAccumulator::add(double t, double norm) {
  if (!std::isfinite(norm)) {
    finite_ = false;
    return;
  }
  const auto w = sups_.size();
  double pos = (t - t0_) / (t_end_ - t0_) * static_cast<double>(w);
  auto idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(w) - 0.5));
  sups_[idx] = std::max(sups_[idx], norm);
}

GrowthFit GrowthAccumulator::finish() const {
  GrowthFit fit;
  fit.finite = finite_;
  fit.window_sups = sups_;
  if (!finite_) {
    fit.sup = std::numeric_limits<double>::infinity();
    fit.slope = std::numeric_limits<double>::infinity();
    fit.monotone = true;
    return fit;
  }
  fit.sup = *std::max_element(sups_.begin(), sups_.end());
  const std::size_t first = sups_.size() > 2 ? 1 : 0;
  const double width = (t_end_ - t0_) / static_cast<double>(sups_.size());
  const double floor = std::max(1e-300, 1e-12 * fit.sup);
  std::vector<double> xs, ys;
  for (std::size_t i = first; i < sups_.size(); ++i) {
    xs.push_back(t0_ + (static_cast<double>(i) + 0.5) * width);
    ys.push_back(std::log(std::max(sups_[i], floor)));
  }
  fit.monotone = true;
  for (std::size_t i = first + 1; i < sups_.size(); ++i) {
    if (sups_[i] < sups_[i - 1] * (1.0 - 1e-9)) fit.monotone = false;
  }
  if (xs.size() < 2) {
    fit.slope = 0.0;
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / n;
    my += ys[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return fit;
}

const char* verdict_name(NonResonanceVerdict v) {
  switch (v) {
    case NonResonanceVerdict::NonResonant: return "NonResonant";
    case NonResonanceVerdict::Resonant: return "Resonant";
    case NonResonanceVerdict::Inconclusive: break;
  }
  return "Inconclusive";
}

bool classical_nonresonance(const Plant& plant, const Matrix& s) {
  if (s.rows() != s.cols()) throw Error("classical_nonresonance: S must be square");
  const auto zeros = transmission_zeros(plant);
  const auto eig = sorted_eigenvalues(s);
  double scale = 1.0;
  for (const auto& z : zeros) scale = std::max(scale, std::abs(z));
  for (const auto& e : eig) scale = std::max(scale, std::abs(e));
  for (const auto& z : zeros) {
    for (const auto& e : eig) {
      if (std::abs(z - e) <= 1e-8 * scale) return false;
    }
  }
  return true;
}

namespace {

// alpha and beta of the exponential estimate ||e^{Az s}|| <= alpha e^{-beta s}.
MinimumPhaseBound bound_constants(const std::vector<std::complex<double>>& zeros, const Matrix& az,
                                  double horizon, double h) {
  MinimumPhaseBound out;
  double max_re = -std::numeric_limits<double>::infinity();
  for (const auto& z : zeros) max_re = std::max(max_re, z.real());
  out.beta = 0.9 * std::abs(max_re);
  out.h = h;
  const double ds = 1e-3 / std::max(1.0, spectral_norm(az));
  const auto steps = static_cast<std::size_t>(std::min(2e6, std::ceil(horizon / ds)));
  const double step = horizon / static_cast<double>(std::max<std::size_t>(steps, 1));
  const Matrix e_step = expm(az, step);
  Matrix e = Matrix::Identity(az.rows(), az.cols());
  double alpha = 1.0;
  for (std::size_t i = 1; i <= steps; ++i) {
    e = e * e_step;
    alpha = std::max(alpha, spectral_norm(e) * std::exp(out.beta * step * static_cast<double>(i)));
  }
  out.alpha = alpha;
  out.bound = alpha * h / out.beta;
  return out;
}

}  // namespace

MinimumPhaseBound minimum_phase_bound(const Plant& plant, const Generator& gen, const TimeGrid& grid, double h,
                                      ZeroRealization realization) {
  if (!is_minimum_phase(plant)) throw Error("minimum_phase_bound: plant is not minimum phase");
  const auto zeros = transmission_zeros(plant);
  if (zeros.empty()) throw Error("minimum_phase_bound: plant has no finite transmission zeros");
  const Matrix az = zero_dynamics_matrix(plant, realization);
  MinimumPhaseBound out = bound_constants(zeros, az, grid.t_end() - grid.t0(), h);
  double measured = 0.0;
  zero_candidate(az, gen, grid, NonResonanceOptions{}, &measured);
  out.measured = measured;
  return out;
}

NonResonanceReport check_nonresonance(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                      const NonResonanceOptions& options) {
  validate(plant);
  if (plant.nu() != gen.nu) throw Error("check_nonresonance: plant and generator dimensions differ");
  NonResonanceReport rep;
  rep.t0 = grid.t0();
  rep.t_end = grid.t_end();
  rep.zeros = transmission_zeros(plant);
  rep.az = zero_dynamics_matrix(plant, options.realization);
  if (gen.lti_matrix) rep.classical = classical_nonresonance(plant, *gen.lti_matrix);

  auto finish = [&rep]() {
    if (rep.classical && rep.verdict != NonResonanceVerdict::Inconclusive) {
      rep.classical_agrees = *rep.classical == (rep.verdict == NonResonanceVerdict::NonResonant);
    }
    return rep;
  };

  if (rep.az.rows() == 0) {
    rep.verdict = NonResonanceVerdict::NonResonant;
    rep.note = "no finite transmission zeros; Omega is empty";
    return finish();
  }

  const bool min_phase = is_minimum_phase(plant);
  const double h = options.ratio_bound;
  if (min_phase && options.use_shortcut && std::isfinite(h)) {
    rep.minimum_phase_shortcut = true;
    rep.verdict = NonResonanceVerdict::NonResonant;
    double measured = 0.0;
    rep.candidates.push_back(zero_candidate(rep.az, gen, grid, options, &measured));
    rep.winner = 0;
    MinimumPhaseBound b = bound_constants(rep.zeros, rep.az, grid.t_end() - grid.t0(), h);
    b.measured = measured;
    rep.bound = b;
    rep.note = "minimum phase";
    return finish();
  }

  rep.candidates.push_back(zero_candidate(rep.az, gen, grid, options, nullptr));
  rep.candidates.push_back(lti_candidate(rep.az, gen, grid, options));
  rep.candidates.push_back(periodic_candidate(rep.az, gen, grid, options));
  rep.candidates.push_back(dichotomy_candidate(rep.az, gen, grid, options));

  bool all_growing = true;
  bool any_available = false;
  for (std::size_t i = 0; i < rep.candidates.size(); ++i) {
    const auto& c = rep.candidates[i];
    if (!c.available) continue;
    any_available = true;
    if (c.bounded && rep.winner < 0) rep.winner = static_cast<int>(i);
    if (!c.growing) all_growing = false;
  }
  if (rep.winner >= 0) {
    rep.verdict = NonResonanceVerdict::NonResonant;
  } else if (any_available && all_growing) {
    rep.verdict = NonResonanceVerdict::Resonant;
  } else {
    rep.verdict = NonResonanceVerdict::Inconclusive;
  }
  return finish();
}

}  // namespace qreg
