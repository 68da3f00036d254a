#include "qreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qreg {

struct RegulatorSolution::Model {
  Generator gen;
  Matrix M;  // reduced dynamics
  Matrix F;  // reduced forcing
  TimeGrid grid;
  std::vector<Matrix> psi;  // reduced Psi at the nodes
  // Pi_reduced, t, side -> (Pi_x, Delta)
  std::function<std::pair<Matrix, Matrix>(const Matrix&, double, Side)> reconstruct;

  Matrix rhs(double t, const Matrix& x, Side side) const { return M * x + F * gen.eval(t, side); }

  Matrix psi_at(double t) const {
    const auto& nodes = grid.nodes();
    const double tol = 1e-12 * std::max({1.0, std::abs(grid.t0()), std::abs(grid.t_end())});
    if (t < grid.t0() - tol || t > grid.t_end() + tol) {
      std::ostringstream msg;
      msg << "solution: t = " << t << " outside [" << grid.t0() << ", " << grid.t_end() << "]";
      throw Error(msg.str());
    }
    const std::size_t i = grid.locate(t);
    if (t <= nodes[i] || i + 1 == nodes.size()) return psi[i];
    const double a = nodes[i];
    const double b = nodes[i + 1];
    const double h = b - a;
    const double s = (t - a) / h;
    const Matrix d0 = rhs(a, psi[i], Side::Right);
    const Matrix d1 = rhs(b, psi[i + 1], Side::Left);
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * psi[i] + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * psi[i + 1] +
           (s3 - s2) * h * d1;
  }

  std::pair<Matrix, Matrix> at(double t, Side side) const {
    return reconstruct(psi_at(t) * gen.inv(t, side), t, side);
  }
};

Matrix RegulatorSolution::pi_x_at(double t, Side side) const {
  if (!model) throw Error("solution: no dense model attached");
  return model->at(t, side).first;
}

Matrix RegulatorSolution::delta_at(double t, Side side) const {
  if (!model) throw Error("solution: no dense model attached");
  return model->at(t, side).second;
}

namespace {

double unstable_tail(const Matrix& m) {
  double lambda_u = std::numeric_limits<double>::infinity();
  for (const auto& z : sorted_eigenvalues(m)) {
    if (z.real() > 1e-9) lambda_u = std::min(lambda_u, z.real());
  }
  return std::clamp(40.0 / lambda_u, 1.0, 100.0);
}

RegulatorSolution construct(std::shared_ptr<RegulatorSolution::Model> model, const Plant& plant,
                            const Matrix& pi0, const SolveOptions& options, const std::string& name) {
  const Generator& gen = model->gen;
  const TimeGrid& grid = model->grid;
  const double t0 = grid.t0();
  const double t_end = grid.t_end();
  const Eigen::Index m = model->M.rows();
  if (pi0.rows() != m || pi0.cols() != gen.nu) {
    std::ostringstream msg;
    msg << name << ": initial value must be " << m << "x" << gen.nu;
    throw Error(msg.str());
  }

  const Matrix x0 = pi0 * gen.eval(t0, Side::Right);
  const SpectralSplit split = spectral_split(model->M, 1e-9);
  const bool dichotomy = options.propagation == SolveOptions::Propagation::Dichotomy ||
                         (options.propagation == SolveOptions::Propagation::Auto && split.has_unstable);

  RegulatorSolution sol;
  sol.construction = name;
  sol.grid = grid;
  sol.dichotomy = dichotomy;
  if (!dichotomy) {
    model->psi = integrate_ode([&](double t, const Matrix& x, Side side) { return model->rhs(t, x, side); }, x0,
                               grid);
  } else {
    const Matrix& ps = split.center_stable;
    const Matrix& pu = split.unstable;
    const Matrix fs = ps * model->F;
    const Matrix fu = pu * model->F;
    const Matrix& mm = model->M;
    auto stable = integrate_ode(
        [&](double t, const Matrix& x, Side side) { return Matrix(mm * x + fs * gen.eval(t, side)); }, ps * x0, grid,
        [&ps](Matrix& x) { x = ps * x; });
    const double tail = unstable_tail(mm);
    std::vector<double> bps = grid.breakpoints();
    for (double b : gen.breakpoints_in(t_end, t_end + tail)) bps.push_back(b);
    bps.push_back(t_end);
    const TimeGrid ext(t0, t_end + tail, grid.step(), bps);
    auto unstable = integrate_ode_backward(
        [&](double t, const Matrix& x, Side side) { return Matrix(mm * x + fu * gen.eval(t, side)); },
        Matrix::Zero(m, gen.nu), ext, [&pu](Matrix& x) { x = pu * x; });
    if (ext.size() < grid.size() || std::abs(ext.nodes()[grid.size() - 1] - t_end) > 1e-9 * (1.0 + std::abs(t_end))) {
      throw Error(name + ": extended grid does not align with the solution grid");
    }
    model->psi.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) model->psi[i] = stable[i] + unstable[i];
  }
  sol.initial = model->psi[0] * gen.inv(t0, Side::Right);

  sol.samples = grid.samples();
  const std::size_t count = sol.samples.size();
  sol.Pi_x.reserve(count);
  sol.Delta.reserve(count);
  sol.Psi_x.reserve(count);
  sol.Pi_reduced.reserve(count);
  for (const auto& smp : sol.samples) {
    const Side side = smp.side();
    const Matrix lam = gen.eval(smp.t, side);
    const Matrix pir = model->psi[smp.node] * gen.inv(smp.t, side);
    auto [pix, delta] = model->reconstruct(pir, smp.t, side);
    sol.Psi_x.push_back(pix * lam);
    sol.Pi_x.push_back(std::move(pix));
    sol.Delta.push_back(std::move(delta));
    sol.Pi_reduced.push_back(pir);
  }
  sol.model = model;

  sol.residual_trace = dae_residual(plant, gen, sol);
  for (std::size_t k = 0; k < count; ++k) {
    const double r = sol.residual_trace[k];
    sol.max_residual_all = std::max(sol.max_residual_all, r);
    if (sol.samples[k].tag == SampleTag::Interior) sol.max_residual = std::max(sol.max_residual, r);
    sol.sup_Pi = std::max(sol.sup_Pi, sol.Pi_x[k].norm());
    sol.sup_Delta = std::max(sol.sup_Delta, sol.Delta[k].norm());
  }

  // Re-differentiate Psi_x at interior nodes and compare with the DAE right-hand side.
  const auto& nodes = grid.nodes();
  std::vector<const Matrix*> node_psi(nodes.size(), nullptr);
  std::vector<std::size_t> node_sample(nodes.size(), 0);
  for (std::size_t k = 0; k < count; ++k) {
    if (sol.samples[k].tag == SampleTag::Left) continue;
    node_psi[sol.samples[k].node] = &sol.Psi_x[k];
    node_sample[sol.samples[k].node] = k;
  }
  double worst = 0.0;
  double rhs_scale = 0.0;
  for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
    if (grid.is_breakpoint_node(i)) continue;
    const double h1 = nodes[i] - nodes[i - 1];
    const double h2 = nodes[i + 1] - nodes[i];
    const Matrix diff = (h1 * h1 * *node_psi[i + 1] - h2 * h2 * *node_psi[i - 1] +
                         (h2 * h2 - h1 * h1) * *node_psi[i]) /
                        (h1 * h2 * (h1 + h2));
    const std::size_t k = node_sample[i];
    const Matrix lam = gen.eval(nodes[i], Side::Right);
    const Matrix rhs = plant.A * sol.Psi_x[k] + (plant.B * sol.Delta[k] + plant.P) * lam;
    worst = std::max(worst, (diff - rhs).norm());
    rhs_scale = std::max(rhs_scale, rhs.norm());
  }
  sol.ode_residual = worst / (1.0 + rhs_scale);

  GrowthAccumulator acc(t0, t_end, options.windows);
  for (std::size_t k = 0; k < count; ++k) acc.add(sol.samples[k].t, sol.Pi_x[k].norm());
  sol.growth = acc.finish();

  std::ostringstream why;
  if (!std::isfinite(sol.sup_Pi) || !std::isfinite(sol.sup_Delta)) why << "unbounded samples; ";
  if (!(sol.max_residual <= options.tol_res)) why << "algebraic residual " << sol.max_residual << " > " << options.tol_res << "; ";
  if (!(sol.ode_residual <= options.tol_ode)) why << "differential residual " << sol.ode_residual << " > " << options.tol_ode << "; ";
  if (!(sol.growth.slope < options.slope_tol)) why << "growth slope " << sol.growth.slope << " >= " << options.slope_tol << "; ";
  sol.failure = why.str();
  if (!sol.failure.empty()) sol.failure.resize(sol.failure.size() - 2);
  sol.certified = sol.failure.empty();
  return sol;
}

}  // namespace

RegulatorSolution solve_unitary_rd(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                   const Matrix& piz0, const SolveOptions& options) {
  validate(plant);
  if (plant.nu() != gen.nu) throw Error("solve_unitary_rd: plant and generator dimensions differ");
  if (plant.D != 0.0) throw Error("solve_unitary_rd: requires D = 0");
  const NormalForm nf = normal_form(plant);
  const Eigen::Index n = plant.n();
  auto model = std::make_shared<RegulatorSolution::Model>(RegulatorSolution::Model{gen, nf.A11, nf.G1, grid, {}, {}});
  const Matrix q = plant.Q;
  model->reconstruct = [nf, q, n, gen](const Matrix& piz, double t, Side side) {
    Matrix stacked(n, q.cols());
    stacked.topRows(n - 1) = piz;
    stacked.bottomRows(1) = -q;
    Matrix pix = nf.T_inv * stacked;
    Matrix delta = -(q_lambda(gen, q, t, side) + nf.G2 + nf.A21 * piz) / nf.b;
    return std::make_pair(std::move(pix), std::move(delta));
  };
  return construct(model, plant, piz0, options, "unitary-relative-degree");
}

RegulatorSolution solve_feedthrough(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                    const Matrix& pi0, const SolveOptions& options) {
  validate(plant);
  if (plant.nu() != gen.nu) throw Error("solve_feedthrough: plant and generator dimensions differ");
  if (plant.D == 0.0) throw Error("solve_feedthrough: requires D != 0");
  const Matrix a_pi = plant.A - plant.B * plant.C / plant.D;
  const Matrix p_pi = plant.P - plant.B * plant.Q / plant.D;
  auto model = std::make_shared<RegulatorSolution::Model>(RegulatorSolution::Model{gen, a_pi, p_pi, grid, {}, {}});
  const Matrix c = plant.C;
  const Matrix q = plant.Q;
  const double d = plant.D;
  model->reconstruct = [c, q, d](const Matrix& pi, double, Side) {
    Matrix delta = -(c * pi + q) / d;
    return std::make_pair(pi, std::move(delta));
  };
  return construct(model, plant, pi0, options, "feedthrough");
}

std::vector<double> dae_residual(const Plant& plant, const Generator& gen, const RegulatorSolution& sol) {
  std::vector<double> out;
  out.reserve(sol.samples.size());
  for (std::size_t k = 0; k < sol.samples.size(); ++k) {
    const auto& smp = sol.samples[k];
    const Matrix lam = gen.eval(smp.t, smp.side());
    const Matrix r = plant.C * sol.Psi_x[k] + (plant.D * sol.Delta[k] + plant.Q) * lam;
    out.push_back(r.norm());
  }
  return out;
}

double SimTrace::max_abs_error(bool include_breakpoints) const {
  double worst = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (!include_breakpoints && samples[k].tag != SampleTag::Interior) continue;
    worst = std::max(worst, std::abs(e[k]));
  }
  return worst;
}

SimTrace simulate_error_zeroing(const Plant& plant, const Generator& gen, const RegulatorSolution& sol,
                                const Vector& omega0, const TimeGrid& grid) {
  validate(plant);
  if (omega0.size() != gen.nu) throw Error("simulate: omega0 must have nu entries");
  if (!sol.model) throw Error("simulate: solution carries no dense model");
  auto input = [&](double t, Side side) {
    return (sol.delta_at(t, side) * gen.eval(t, side) * omega0)(0, 0);
  };
  const Matrix x0 = sol.pi_x_at(grid.t0(), Side::Right) * gen.eval(grid.t0(), Side::Right) * omega0;
  const auto xs = integrate_ode(
      [&](double t, const Matrix& x, Side side) {
        const Matrix lam = gen.eval(t, side);
        return Matrix(plant.A * x + plant.B * input(t, side) + plant.P * lam * omega0);
      },
      x0, grid);

  SimTrace tr;
  tr.samples = grid.samples();
  for (const auto& smp : tr.samples) {
    const Side side = smp.side();
    const Vector w = gen.eval(smp.t, side) * omega0;
    const double u = input(smp.t, side);
    const Vector x = xs[smp.node];
    const double e = (plant.C * x)(0) + plant.D * u + (plant.Q * w)(0);
    tr.x.push_back(x);
    tr.u.push_back(u);
    tr.e.push_back(e);
    tr.omega.push_back(w);
  }
  return tr;
}

const char* overall_name(Overall o) {
  switch (o) {
    case Overall::Solvable: return "Solvable";
    case Overall::Unsolvable: return "Unsolvable";
    case Overall::Inconclusive: break;
  }
  return "Inconclusive";
}

const char* reason_label(UnsolvableReason r) {
  switch (r) {
    case UnsolvableReason::NotLipschitz: return "Theorem 1";
    case UnsolvableReason::RelativeDegreeBound: return "Proposition 1";
    case UnsolvableReason::Resonant: return "Resonant";
    case UnsolvableReason::None: break;
  }
  return "";
}

SolvabilityReport solvability_pipeline(const Plant& plant, const Generator& gen, const TimeGrid& grid,
                                       const PipelineOptions& options) {
  validate(plant);
  if (plant.nu() != gen.nu) throw Error("pipeline: plant.P has " + std::to_string(plant.nu()) +
                                        " columns but the generator has dimension " + std::to_string(gen.nu));
  SolvabilityReport rep;
  auto inconclusive = [&rep](const std::string& why) {
    rep.overall = Overall::Inconclusive;
    rep.explanation = why;
    return rep;
  };
  auto unsolvable = [&rep](UnsolvableReason reason, const std::string& why) {
    rep.overall = Overall::Unsolvable;
    rep.reason = reason;
    rep.explanation = why;
    return rep;
  };

  try {
    rep.relative_degree = relative_degree(plant);
    rep.zeros = transmission_zeros(plant);
    rep.minimum_phase = is_minimum_phase(plant);
  } catch (const Error& e) {
    return inconclusive(std::string("plant structure: ") + e.what());
  }

  rep.assumption1 = check_assumption1(gen, grid.t0(), grid.t_end(), options.assumption1);
  if (!rep.assumption1.passed) return inconclusive("generator check failed: " + rep.assumption1.message);

  const int r = rep.relative_degree;
  if (plant.D == 0.0) {
    rep.profile = compute_profile(plant, gen, grid, options.smoothness);
    if (!rep.profile->lipschitz_QLambda) {
      return unsolvable(UnsolvableReason::NotLipschitz, "Q*Lambda not locally Lipschitz while D = 0");
    }
    rep.rd_necessity = check_relative_degree_necessity(plant, *rep.profile);
    if (*rep.rd_necessity == Necessity::Fail) {
      std::ostringstream msg;
      msg << "relative degree " << r << " exceeds j* + 1 = " << rep.profile->jstar.as_int() + 1;
      return unsolvable(UnsolvableReason::RelativeDegreeBound, msg.str());
    }
  }

  NonResonanceOptions nr = options.nonresonance;
  nr.ratio_bound = rep.assumption1.uniform_ratio_bound;
  rep.nonresonance = check_nonresonance(plant, gen, grid, nr);

  if (plant.D == 0.0 && r >= 2) {
    return inconclusive("relative degree " + std::to_string(r) +
                        " with D = 0: necessity passes but no constructive result covers r >= 2");
  }
  if (plant.D == 0.0 && !rep.profile->assumption2) {
    return inconclusive("Q*Lambda is not piecewise differentiable with bounded Q_Lambda");
  }
  if (rep.nonresonance->verdict == NonResonanceVerdict::Resonant) {
    return unsolvable(UnsolvableReason::Resonant, "every candidate Omega trajectory grows");
  }
  if (rep.nonresonance->verdict == NonResonanceVerdict::Inconclusive) {
    return inconclusive("non-resonance could not be decided on the horizon");
  }

  const Matrix forcing = plant.D == 0.0 ? normal_form(plant).G1 : Matrix(plant.P - plant.B * plant.Q / plant.D);
  const Eigen::Index m = forcing.rows();
  Matrix init = Matrix::Zero(m, plant.nu());
  if (options.initial) {
    init = *options.initial;
  } else if (nr.realization == ZeroRealization::Canonical && rep.nonresonance->winner >= 0 && m > 0) {
    const Matrix& omega0 = rep.nonresonance->candidates[static_cast<std::size_t>(rep.nonresonance->winner)].omega0;
    init = unvec(omega0 * vec(forcing), m, plant.nu());
  }

  try {
    RegulatorSolution sol = plant.D == 0.0 ? solve_unitary_rd(plant, gen, grid, init, options.solve)
                                           : solve_feedthrough(plant, gen, grid, init, options.solve);
    if (!sol.certified) return inconclusive("constructed solution failed certification: " + sol.failure);
    rep.solution = std::move(sol);
  } catch (const BlowUpError& e) {
    return inconclusive(std::string("construction blew up: ") + e.what());
  }
  rep.overall = Overall::Solvable;
  rep.explanation = plant.D == 0.0 ? "non-resonant, relative degree 1" : "non-resonant, D != 0";
  return rep;
}

}  // namespace qreg
