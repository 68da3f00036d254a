#include "support.hpp"

#include "qreg/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace qreg;
using qreg::testing::mat;
using qreg::testing::plant_a;
using qreg::testing::plant_b;

namespace {

TimeGrid grid_for(const Generator& g, double t_end, double step = 1e-3) {
  return TimeGrid(g.t0, t_end, step, g.breakpoints_in(g.t0, t_end));
}

Generator triangular() { return affine_carrier_generator(triangular_carrier(2.0, 1.0)); }
Generator square() { return affine_carrier_generator(square_carrier(2.0, 0.5, -1.0, 1.0)); }

// Classical regulator equations Pi S = A Pi + B Gamma + P, 0 = C Pi + D Gamma + Q,
// solved as one linear system in (vec Pi, vec Gamma).
std::pair<Matrix, Matrix> classical_regulator(const Plant& p, const Matrix& s) {
  const Eigen::Index n = p.A.rows();
  const Eigen::Index nu = s.rows();
  const Matrix in = Matrix::Identity(n, n);
  const Matrix inu = Matrix::Identity(nu, nu);
  Matrix sys = Matrix::Zero(n * nu + nu, n * nu + nu);
  sys.topLeftCorner(n * nu, n * nu) = kron(inu, p.A) - kron(s.transpose(), in);
  sys.topRightCorner(n * nu, nu) = kron(inu, p.B);
  sys.bottomLeftCorner(nu, n * nu) = kron(inu, p.C);
  sys.bottomRightCorner(nu, nu) = p.D * inu;
  Vector rhs(n * nu + nu);
  rhs << -vec(p.P), -vec(p.Q);
  const Vector x = sys.fullPivLu().solve(rhs);
  return {unvec(x.head(n * nu), n, nu), unvec(x.tail(nu), 1, nu)};
}

double max_offbreak(const std::vector<double>& trace, const RegulatorSolution& sol) {
  double m = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (sol.samples[i].tag == SampleTag::Interior) m = std::max(m, trace[i]);
  }
  return m;
}

}  // namespace

TEST(Feedthrough, ScalarSquareCarrierClosedForm) {
  const double q = 0.8;
  Plant p;
  p.A = mat({{-1}});
  p.B = mat({{1}});
  p.C = mat({{1}});
  p.D = 1.0;
  p.P = mat({{0, 0}});
  p.Q = mat({{q, 0}});
  const Carrier c = square_carrier(2.0, 0.5, -1.0, 1.0);
  const Generator g = affine_carrier_generator(c);
  const TimeGrid grid = grid_for(g, 20.0);
  const RegulatorSolution sol = solve_feedthrough(p, g, grid, Matrix::Zero(1, 2));
  EXPECT_TRUE(sol.certified) << sol.failure;
  EXPECT_EQ(sol.construction, "feedthrough");
  EXPECT_LE(sol.max_residual, 1e-6);
  // Psi' = -2 Psi + [-q, -q phi] from Psi(0) = 0, solved segment by segment.
  double seg_start = 0.0;
  double psi2_start = 0.0;
  auto psi2 = [&](double t) {
    const double phi = c.value(t, Side::Left);
    const double e = std::exp(-2.0 * (t - seg_start));
    return e * psi2_start - q * phi * (1.0 - e) / 2.0;
  };
  std::vector<double> bps = g.breakpoints_in(0.0, 20.0);
  std::size_t next = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < sol.samples.size(); ++i) {
    const Sample& s = sol.samples[i];
    if (next < bps.size() && s.t > bps[next] - 1e-12 && s.tag != SampleTag::Left) {
      psi2_start = psi2(bps[next]);
      seg_start = bps[next];
      ++next;
    }
    const double psi1 = -q * (1.0 - std::exp(-2.0 * s.t)) / 2.0;
    const double phi = c.value(s.t, s.side());
    const Matrix pi = mat({{psi1, psi2(s.t) - psi1 * phi}});
    worst = std::max(worst, (sol.Pi_x[i] - pi).norm());
    const Matrix delta = -(pi + p.Q);
    worst = std::max(worst, (sol.Delta[i] - delta).norm());
  }
  EXPECT_LE(worst, 1e-8);
  EXPECT_LT(sol.sup_Pi, 1.0);
}

TEST(Feedthrough, ZeroDataGivesZeroSolution) {
  Plant p = plant_b(Matrix::Zero(2, 2), Matrix::Zero(1, 2));
  p.D = 1.0;
  const Generator g = square();
  const RegulatorSolution sol = solve_feedthrough(p, g, grid_for(g, 10.0), Matrix::Zero(2, 2));
  for (std::size_t i = 0; i < sol.samples.size(); ++i) {
    EXPECT_EQ(sol.Pi_x[i].norm(), 0.0);
    EXPECT_EQ(sol.Delta[i].norm(), 0.0);
  }
  EXPECT_TRUE(sol.certified);
}

TEST(Feedthrough, SylvesterSeedStaysConstant) {
  Plant p = plant_b(mat({{0.5, -1}, {1, 0.3}}), mat({{1, 0.4}}));
  p.D = 1.0;
  const Matrix s = qreg::testing::rotation(1.5);
  const auto [pi, gamma] = classical_regulator(p, s);
  const Generator g = lti_generator(s, 0.0);
  const RegulatorSolution sol = solve_feedthrough(p, g, grid_for(g, 10.0), pi);
  EXPECT_TRUE(sol.certified) << sol.failure;
  for (std::size_t i = 0; i < sol.samples.size(); ++i) {
    EXPECT_LE((sol.Pi_x[i] - pi).norm(), 1e-6);
    EXPECT_LE((sol.Delta[i] - gamma).norm(), 1e-6);
  }
}

TEST(UnitaryRd, ZeroDataGivesZeroSolution) {
  const Plant p = plant_b(Matrix::Zero(2, 2), Matrix::Zero(1, 2));
  const Generator g = triangular();
  const RegulatorSolution sol = solve_unitary_rd(p, g, grid_for(g, 10.0), Matrix::Zero(1, 2));
  for (std::size_t i = 0; i < sol.samples.size(); ++i) {
    EXPECT_LE(sol.Pi_x[i].norm(), 1e-300);
    EXPECT_LE(sol.Delta[i].norm(), 1e-300);
  }
}

TEST(UnitaryRd, SylvesterSeedMatchesClassicalRegulator) {
  const Plant p = plant_b(mat({{0.5, -1}, {1, 0.3}}), mat({{1, 0.4}}));
  const Matrix s = qreg::testing::rotation();
  const NormalForm nf = normal_form(p);
  const Matrix piz0 = solve_sylvester(nf.A11, s, nf.G1);
  EXPECT_LE((nf.A11 * piz0 - piz0 * s + nf.G1).norm(), 1e-12);
  const Generator g = lti_generator(s, 0.0);
  const RegulatorSolution sol = solve_unitary_rd(p, g, grid_for(g, 10.0), piz0);
  EXPECT_TRUE(sol.certified) << sol.failure;
  EXPECT_EQ(sol.construction, "unitary-relative-degree");
  const auto [pi, gamma] = classical_regulator(p, s);
  for (std::size_t i = 0; i < sol.samples.size(); i += 7) {
    EXPECT_LE((sol.Pi_reduced[i] - piz0).norm(), 1e-6);
    EXPECT_LE((sol.Pi_x[i] - pi).norm(), 1e-6);
    EXPECT_LE((sol.Delta[i] - gamma).norm(), 1e-6);
  }
}

TEST(UnitaryRd, TriangularPlantBCertifiesWithJumpsAtKinks) {
  const Generator g = triangular();
  const TimeGrid grid = grid_for(g, 50.0);
  const RegulatorSolution sol = solve_unitary_rd(plant_b(), g, grid, Matrix::Zero(1, 2));
  ASSERT_TRUE(sol.certified) << sol.failure;
  EXPECT_LE(sol.max_residual, 1e-6);
  EXPECT_LT(sol.growth.slope, 1e-3);
  const auto& bps = grid.breakpoints();
  std::size_t jumps = 0;
  // t_end = 50 is itself a kink; the last sample carries the right limit there.
  for (std::size_t i = 0; i + 2 < sol.samples.size(); ++i) {
    const Sample& a = sol.samples[i];
    const Sample& b = sol.samples[i + 1];
    const double d = (sol.Delta[i + 1] - sol.Delta[i]).norm();
    if (a.tag == SampleTag::Left && b.tag == SampleTag::Right) {
      EXPECT_GT(d, 0.1) << "no jump at " << a.t;
      ++jumps;
    } else {
      EXPECT_LT(d, 0.05) << "unexpected jump near " << a.t;
    }
  }
  EXPECT_EQ(jumps, bps.size());
}

TEST(UnitaryRd, PsiIsPiTimesLambda) {
  const Generator g = triangular();
  const RegulatorSolution sol = solve_unitary_rd(plant_b(), g, grid_for(g, 20.0), mat({{0.3, -0.2}}));
  for (std::size_t i = 0; i < sol.samples.size(); ++i) {
    const Sample& s = sol.samples[i];
    EXPECT_LE((sol.Psi_x[i] - sol.Pi_x[i] * g.eval(s.t, s.side())).norm(), 1e-8) << s.t;
  }
}

TEST(UnitaryRd, DenseOutputMatchesSamples) {
  const Generator g = triangular();
  const RegulatorSolution sol = solve_unitary_rd(plant_b(), g, grid_for(g, 10.0), Matrix::Zero(1, 2));
  for (std::size_t i = 0; i < sol.samples.size(); i += 113) {
    const Sample& s = sol.samples[i];
    EXPECT_LE((sol.pi_x_at(s.t, s.side()) - sol.Pi_x[i]).norm(), 1e-10);
    EXPECT_LE((sol.delta_at(s.t, s.side()) - sol.Delta[i]).norm(), 1e-10);
  }
}

TEST(UnitaryRd, RejectsWrongStructure) {
  const Generator g = triangular();
  EXPECT_THROW(solve_unitary_rd(plant_a(), g, grid_for(g, 5.0), Matrix::Zero(1, 2)), Error);
  EXPECT_THROW(solve_unitary_rd(plant_b(), g, grid_for(g, 5.0), Matrix::Zero(2, 2)), Error);
  EXPECT_THROW(solve_feedthrough(plant_b(), g, grid_for(g, 5.0), Matrix::Zero(2, 2)), Error);
}

TEST(UnitaryRd, NonUniqueSolutionsBothCertify) {
  const Generator g = triangular();
  const TimeGrid grid = grid_for(g, 50.0);
  const RegulatorSolution a = solve_unitary_rd(plant_b(), g, grid, Matrix::Zero(1, 2));
  const RegulatorSolution b = solve_unitary_rd(plant_b(), g, grid, mat({{1.0, -1.0}}));
  EXPECT_TRUE(a.certified) << a.failure;
  EXPECT_TRUE(b.certified) << b.failure;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) diff = std::max(diff, (a.Pi_reduced[i] - b.Pi_reduced[i]).norm());
  EXPECT_GT(diff, 0.1);
}

TEST(DaeResidual, DetectsPerturbation) {
  const Generator g = triangular();
  const Plant p = plant_b();
  RegulatorSolution sol = solve_unitary_rd(p, g, grid_for(g, 10.0), Matrix::Zero(1, 2));
  const auto clean = dae_residual(p, g, sol);
  ASSERT_EQ(clean.size(), sol.samples.size());
  EXPECT_LE(max_offbreak(clean, sol), 1e-6);
  const std::size_t k = sol.samples.size() / 2;
  sol.Psi_x[k](0, 0) += 1e-3;
  const auto dirty = dae_residual(p, g, sol);
  EXPECT_NEAR(dirty[k], 1e-3, 1e-6);
}

TEST(Simulation, ErrorIsZeroedOnTriangularPlantB) {
  const Generator g = triangular();
  const TimeGrid grid = grid_for(g, 50.0);
  const Plant p = plant_b();
  const RegulatorSolution sol = solve_unitary_rd(p, g, grid, Matrix::Zero(1, 2));
  Vector w0(2);
  w0 << 0.0, 1.0;
  const SimTrace tr = simulate_error_zeroing(p, g, sol, w0, grid);
  ASSERT_EQ(tr.samples.size(), tr.e.size());
  EXPECT_LE(tr.max_abs_error(), 1e-5);
  // The state stays on the manifold x = Pi_x omega.
  for (std::size_t i = 0; i < tr.samples.size(); i += 97) {
    EXPECT_LE((tr.x[i] - sol.Pi_x[i] * tr.omega[i]).norm(), 1e-5);
  }
}

TEST(Simulation, SquareFeedthrough) {
  Plant p = plant_b(Matrix::Zero(2, 2));
  p.D = 1.0;
  const Generator g = square();
  const TimeGrid grid = grid_for(g, 50.0);
  const RegulatorSolution sol = solve_feedthrough(p, g, grid, Matrix::Zero(2, 2));
  Vector w0(2);
  w0 << 0.0, 1.0;
  EXPECT_LE(simulate_error_zeroing(p, g, sol, w0, grid).max_abs_error(), 1e-5);
}

TEST(Simulation, ZeroExogenousStateGivesZeroTrajectory) {
  const Generator g = triangular();
  const TimeGrid grid = grid_for(g, 10.0);
  const Plant p = plant_b();
  const RegulatorSolution sol = solve_unitary_rd(p, g, grid, Matrix::Zero(1, 2));
  const SimTrace tr = simulate_error_zeroing(p, g, sol, Vector::Zero(2), grid);
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    EXPECT_EQ(tr.x[i].norm(), 0.0);
    EXPECT_EQ(tr.e[i], 0.0);
    EXPECT_EQ(tr.u[i], 0.0);
  }
}

TEST(Pipeline, SquareCarrierWithoutFeedthroughFailsTheLipschitzGate) {
  const Generator g = square();
  const SolvabilityReport rep = solvability_pipeline(plant_b(), g, grid_for(g, 50.0));
  EXPECT_EQ(rep.overall, Overall::Unsolvable);
  EXPECT_EQ(rep.reason, UnsolvableReason::NotLipschitz);
  EXPECT_STREQ(reason_label(rep.reason), "Theorem 1");
  EXPECT_FALSE(rep.solution.has_value());
}

TEST(Pipeline, SquareCarrierWithFeedthroughIsSolvable) {
  Plant p = plant_b(Matrix::Zero(2, 2));
  p.D = 1.0;
  const Generator g = square();
  const SolvabilityReport rep = solvability_pipeline(p, g, grid_for(g, 50.0));
  EXPECT_EQ(rep.overall, Overall::Solvable) << rep.explanation;
  ASSERT_TRUE(rep.solution.has_value());
  EXPECT_LE(rep.solution->max_residual, 1e-6);
}

TEST(Pipeline, RelativeDegreeGate) {
  const Generator g = triangular();
  const SolvabilityReport a = solvability_pipeline(plant_a(), g, grid_for(g, 50.0));
  EXPECT_EQ(a.overall, Overall::Unsolvable);
  EXPECT_EQ(a.reason, UnsolvableReason::RelativeDegreeBound);
  EXPECT_STREQ(reason_label(a.reason), "Proposition 1");
  const SolvabilityReport b = solvability_pipeline(plant_b(), g, grid_for(g, 50.0));
  EXPECT_EQ(b.overall, Overall::Solvable) << b.explanation;
  ASSERT_TRUE(b.solution.has_value());
  EXPECT_TRUE(b.solution->certified);
}

TEST(Pipeline, ResonantPlant) {
  Plant p = plant_b(mat({{1}, {1}}), mat({{1}}));
  p.C = mat({{0, 1}});
  const Generator g = lti_generator(mat({{0}}), 0.0);
  const SolvabilityReport rep = solvability_pipeline(p, g, grid_for(g, 100.0, 1e-2));
  EXPECT_EQ(rep.overall, Overall::Unsolvable);
  EXPECT_EQ(rep.reason, UnsolvableReason::Resonant);
}

TEST(Pipeline, HigherRelativeDegreeWithSmoothGeneratorIsInconclusive) {
  const Generator g = lti_generator(qreg::testing::rotation(), 0.0);
  const SolvabilityReport rep = solvability_pipeline(plant_a(), g, grid_for(g, 20.0));
  EXPECT_EQ(rep.overall, Overall::Inconclusive);
  EXPECT_EQ(rep.reason, UnsolvableReason::None);
}

TEST(Pipeline, UserInitialIsUsed) {
  const Generator g = triangular();
  PipelineOptions opt;
  opt.initial = mat({{0.5, 0.25}});
  const SolvabilityReport rep = solvability_pipeline(plant_b(), g, grid_for(g, 50.0), opt);
  ASSERT_TRUE(rep.solution.has_value());
  EXPECT_EQ(rep.solution->initial, *opt.initial);
}
