#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace qreg;
using qreg::testing::mat;

namespace {

double square_wave(double t, Side side) {
  // +1 on [2k, 2k+1), -1 on [2k+1, 2k+2).
  double ph = std::fmod(t, 2.0);
  const bool at_edge = std::abs(ph - std::round(ph)) < 1e-12;
  if (at_edge && side == Side::Left) ph = std::round(ph) == 0.0 ? 2.0 - 1e-9 : std::round(ph) - 1e-9;
  return ph < 1.0 ? 1.0 : -1.0;
}

double square_antiderivative(double t) {
  const double k = std::floor(t / 2.0);
  const double ph = t - 2.0 * k;
  return ph < 1.0 ? ph : 2.0 - ph;
}

}  // namespace

TEST(TimeGrid, BreakpointsAreNodes) {
  const TimeGrid g(0.0, 2.0, 0.3, {0.5, 1.25, 0.5});
  ASSERT_EQ(g.breakpoints().size(), 2u);
  for (double b : g.breakpoints()) {
    bool found = false;
    for (double t : g.nodes()) found = found || t == b;
    EXPECT_TRUE(found) << b;
  }
  for (std::size_t i = 1; i < g.size(); ++i) {
    EXPECT_GT(g.nodes()[i], g.nodes()[i - 1]);
    EXPECT_LE(g.nodes()[i] - g.nodes()[i - 1], 0.3 + 1e-12);
  }
  EXPECT_EQ(g.nodes().front(), 0.0);
  EXPECT_EQ(g.nodes().back(), 2.0);
}

TEST(TimeGrid, SamplesTagBothSidesOfInteriorBreakpoints) {
  const TimeGrid g(0.0, 1.0, 0.25, {0.5});
  const auto s = g.samples();
  ASSERT_EQ(s.size(), g.size() + 1);
  int left = 0;
  int right = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k].tag == SampleTag::Left) {
      ++left;
      ASSERT_LT(k + 1, s.size());
      EXPECT_EQ(s[k + 1].tag, SampleTag::Right);
      EXPECT_EQ(s[k].t, 0.5);
    }
    if (s[k].tag == SampleTag::Right) ++right;
  }
  EXPECT_EQ(left, 1);
  EXPECT_EQ(right, 1);
  EXPECT_STREQ(tag_symbol(SampleTag::Left), "-");
  EXPECT_STREQ(tag_symbol(SampleTag::Interior), "·");
  EXPECT_STREQ(tag_symbol(SampleTag::Right), "+");
}

TEST(TimeGrid, RejectsBadInput) {
  EXPECT_THROW(TimeGrid(1.0, 0.0, 0.1), Error);
  EXPECT_THROW(TimeGrid(0.0, 1.0, 0.0), Error);
  EXPECT_THROW(TimeGrid(0.0, 1.0, 0.1, {2.0}), Error);
}

TEST(Expm, ZeroMatrixGivesIdentity) {
  EXPECT_TRUE(expm(Matrix::Zero(2, 2), 5.0).isApprox(Matrix::Identity(2, 2), 1e-15));
}

TEST(Expm, DiagonalCase) {
  const Matrix e = expm(mat({{-1, 0}, {0, 2}}), 1.0);
  EXPECT_NEAR(e(0, 0), std::exp(-1.0), 1e-12 * std::exp(-1.0));
  EXPECT_NEAR(e(1, 1), std::exp(2.0), 1e-12 * std::exp(2.0));
  EXPECT_NEAR(e(0, 1), 0.0, 1e-15);
}

TEST(Expm, QuarterRotation) {
  const Matrix e = expm(qreg::testing::rotation(), std::numbers::pi / 2);
  EXPECT_LE((e - mat({{0, 1}, {-1, 0}})).norm(), 1e-12);
}

TEST(Expm, SemigroupProperty) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = qreg::testing::random_matrix(rng, 3, 3);
    m *= 2.0 / std::max(1.0, m.norm());
    const double a = u(rng);
    const double b = u(rng);
    EXPECT_LE((expm(m, a + b) - expm(m, a) * expm(m, b)).norm(), 1e-10 * expm(m, a + b).norm());
  }
}

TEST(Expm, RejectsNonSquareOrNonFinite) {
  EXPECT_THROW(expm(Matrix::Zero(2, 3), 1.0), Error);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(expm(bad, 1.0), Error);
}

TEST(Kron, IdentityAbsorption) { EXPECT_EQ(kron(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), Matrix(Matrix::Identity(6, 6))); }

TEST(Kron, ScalarCase) {
  const Matrix b = mat({{1, 2}, {3, 4}});
  EXPECT_EQ(kron(mat({{2}}), b), Matrix(2 * b));
}

TEST(Kron, ByDefinition) {
  const Matrix k = kron(mat({{1, 2}, {3, 4}}), mat({{0, 1}, {1, 0}}));
  EXPECT_EQ(k, mat({{0, 1, 0, 2}, {1, 0, 2, 0}, {0, 3, 0, 4}, {3, 0, 4, 0}}));
}

TEST(Kron, MixedProductProperty) {
  std::mt19937 rng(3);
  const Matrix a = qreg::testing::random_matrix(rng, 2, 3);
  const Matrix b = qreg::testing::random_matrix(rng, 3, 2);
  const Matrix c = qreg::testing::random_matrix(rng, 3, 2);
  const Matrix d = qreg::testing::random_matrix(rng, 2, 4);
  EXPECT_LE((kron(a, b) * kron(c, d) - kron(a * c, b * d)).norm(), 1e-12);
}

TEST(Vec, RoundTripAndKronIdentity) {
  std::mt19937 rng(11);
  const Matrix a = qreg::testing::random_matrix(rng, 3, 3);
  const Matrix x = qreg::testing::random_matrix(rng, 3, 2);
  const Matrix b = qreg::testing::random_matrix(rng, 2, 2);
  EXPECT_EQ(unvec(vec(x), 3, 2), x);
  // vec(A X B) = (B^T kron A) vec(X)
  EXPECT_LE((vec(a * x * b) - kron(b.transpose(), a) * vec(x)).norm(), 1e-12);
}

TEST(RepeatedIntegral, ConstantTwice) {
  const TimeGrid g(0.0, 2.0, 0.01);
  const Matrix v = repeated_integral([](double) { return mat({{1}}); }, 2, 0.0, 2.0, g);
  EXPECT_NEAR(v(0, 0), 2.0, 1e-12);
}

TEST(RepeatedIntegral, Identity) {
  const TimeGrid g(0.0, 3.0, 0.01);
  const Matrix v = repeated_integral([](double s) { return mat({{s}}); }, 1, 0.0, 3.0, g);
  EXPECT_NEAR(v(0, 0), 4.5, 1e-12);
}

TEST(RepeatedIntegral, SawtoothMatchesNestedQuadrature) {
  const double dt = 1.0 / 1024.0;
  auto saw = [](double t, Side side) {
    double f = t - std::floor(t);
    if (side == Side::Left && f < 1e-12 && t > 0) f = 1.0;
    return f;
  };
  const auto oracle = qreg::testing::nested_integrals(saw, 2, 0.0, 3.0, dt, {1.0, 2.0});
  const TimeGrid g(0.0, 3.0, 0.01, {1.0, 2.0});
  const std::size_t i = static_cast<std::size_t>(2.5 / dt);
  for (int k = 1; k <= 2; ++k) {
    const Matrix v = repeated_integral([&](double s) { return mat({{saw(s, Side::Right)}}); }, k, 0.0, 2.5, g);
    EXPECT_NEAR(v(0, 0), oracle[static_cast<std::size_t>(k)][i], 1e-8) << "k = " << k;
  }
}

TEST(RepeatedIntegral, KernelAgreesWithOneOuterIntegration) {
  // I^[k] = I^[1] o I^[k-1] with the outer integral done by composite Gauss panels.
  auto h = [](double s) { return mat({{std::sin(3 * s) + (s < 1.3 ? 0.5 : -0.25)}}); };
  const TimeGrid g(0.0, 2.0, 0.01, {1.3});
  const GaussRule& q = gauss3();
  for (int k = 2; k <= 4; ++k) {
    double outer = 0.0;
    const auto& nodes = g.nodes();
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      const double a = nodes[i];
      const double b = nodes[i + 1];
      for (int j = 0; j < 3; ++j) {
        const double s = a + (b - a) * q.x[j];
        outer += q.w[j] * (b - a) * repeated_integral(h, k - 1, 0.0, s, g)(0, 0);
      }
    }
    EXPECT_NEAR(repeated_integral(h, k, 0.0, 2.0, g)(0, 0), outer, 1e-7) << "k = " << k;
  }
}

TEST(RepeatedIntegral, TableMatchesDirectEvaluation) {
  auto h = [](double s) { return mat({{std::cos(s), s < 0.7 ? 1.0 : 0.0}}); };
  const TimeGrid g(0.0, 2.0, 0.01, {0.7});
  const RepeatedIntegralTable table(h, 3, g);
  for (double t : {0.0, 0.33, 0.7, 1.234567, 2.0}) {
    for (int k = 1; k <= 3; ++k) {
      EXPECT_LE((table.value(k, t) - repeated_integral(h, k, 0.0, t, g)).norm(), 1e-10) << t << " " << k;
    }
  }
}

TEST(RepeatedIntegral, RejectsBadArguments) {
  const TimeGrid g(0.0, 1.0, 0.1);
  auto h = [](double) { return mat({{1}}); };
  EXPECT_THROW(repeated_integral(h, 0, 0.0, 1.0, g), Error);
  EXPECT_THROW(repeated_integral(h, 1, 0.5, 0.2, g), Error);
}

TEST(IntegrateOde, ZeroRhsKeepsInitialValue) {
  const TimeGrid g(0.0, 1.0, 0.1);
  const auto xs = integrate_ode([](double, const Matrix& x, Side) { return Matrix(Matrix::Zero(x.rows(), x.cols())); },
                                Matrix::Identity(2, 2), g);
  for (const auto& x : xs) EXPECT_EQ(x, Matrix(Matrix::Identity(2, 2)));
}

TEST(IntegrateOde, ExponentialDecay) {
  const TimeGrid g(0.0, 1.0, 1e-3);
  const auto xs = integrate_ode([](double, const Matrix& x, Side) { return Matrix(-x); }, mat({{1}}), g);
  EXPECT_NEAR(xs.back()(0, 0), std::exp(-1.0), 1e-9);
}

TEST(IntegrateOde, SquareWaveAntiderivative) {
  const TimeGrid g(0.0, 6.0, 1e-2, {1, 2, 3, 4, 5});
  const auto xs = integrate_ode([](double t, const Matrix&, Side side) { return mat({{square_wave(t, side)}}); },
                                mat({{0}}), g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(xs[i](0, 0), square_antiderivative(g.nodes()[i]), 1e-9) << g.nodes()[i];
  }
}

TEST(IntegrateOde, LinearSystemMatchesExpm) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix m = qreg::testing::random_matrix(rng, 3, 3);
    m *= 5.0 / m.norm();
    const Matrix x0 = qreg::testing::random_matrix(rng, 3, 2);
    const TimeGrid g(0.0, 1.0, 1e-3);
    const auto xs = integrate_ode([&](double, const Matrix& x, Side) { return Matrix(m * x); }, x0, g);
    EXPECT_LE((xs.back() - expm(m, 1.0) * x0).norm(), 1e-6);
  }
}

TEST(IntegrateOde, BackwardSweepInvertsForward) {
  const Matrix m = mat({{0.5, 1}, {-1, 0.2}});
  const TimeGrid g(0.0, 2.0, 1e-3, {0.75});
  const Matrix xe = mat({{1}, {2}});
  const auto xs = integrate_ode_backward([&](double, const Matrix& x, Side) { return Matrix(m * x); }, xe, g);
  EXPECT_LE((xs.back() - xe).norm(), 1e-15);
  EXPECT_LE((xs.front() - expm(m, -2.0) * xe).norm(), 1e-9);
}

TEST(IntegrateOde, ReportsBlowUpTime) {
  const TimeGrid g(0.0, 10.0, 0.1);
  try {
    integrate_ode([](double, const Matrix& x, Side) { return Matrix(x.array().square().matrix() * 100.0); },
                  mat({{1}}), g);
    FAIL() << "expected blow-up";
  } catch (const BlowUpError& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 10.0);
  }
}

TEST(IntegrateOde, Deterministic) {
  const TimeGrid g(0.0, 3.0, 1e-2, {1.0});
  auto rhs = [](double t, const Matrix& x, Side side) { return Matrix(-x + mat({{square_wave(t, side)}})); };
  const auto a = integrate_ode(rhs, mat({{0.3}}), g);
  const auto b = integrate_ode(rhs, mat({{0.3}}), g);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i](0, 0), b[i](0, 0));
}

TEST(Sylvester, ScalarCase) {
  const Matrix x = solve_sylvester(mat({{-1}}), mat({{0}}), mat({{1}}));
  EXPECT_NEAR(x(0, 0), 1.0, 1e-14);
}

TEST(Sylvester, RotationResidual) {
  const Matrix a = mat({{-2}});
  const Matrix s = qreg::testing::rotation();
  const Matrix g1 = mat({{1, 0}});
  const Matrix x = solve_sylvester(a, s, g1);
  EXPECT_LE((a * x - x * s + g1).norm(), 1e-10 * (1.0 + g1.norm()));
}

TEST(Sylvester, ResonantSpectraRejected) {
  try {
    solve_sylvester(mat({{0}}), mat({{0}}), mat({{1}}));
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("resonant spectra"), std::string::npos);
  }
}

TEST(Sylvester, RandomResiduals) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = qreg::testing::random_matrix(rng, 3, 3) - 4.0 * Matrix::Identity(3, 3);
    const Matrix s = qreg::testing::random_matrix(rng, 2, 2);
    const Matrix g1 = qreg::testing::random_matrix(rng, 3, 2);
    const Matrix x = solve_sylvester(a, s, g1);
    EXPECT_LE((a * x - x * s + g1).norm(), 1e-10 * (1.0 + g1.norm()));
  }
}

TEST(SpectralSplit, ProjectorsSeparateSpectrum) {
  const Matrix a = mat({{1, 2, 0}, {0, -1, 1}, {0, 0, -3}});
  const SpectralSplit sp = spectral_split(a, 1e-9);
  EXPECT_TRUE(sp.has_unstable);
  EXPECT_LE((sp.unstable + sp.center_stable - Matrix::Identity(3, 3)).norm(), 1e-10);
  EXPECT_LE((sp.unstable * sp.unstable - sp.unstable).norm(), 1e-10);
  EXPECT_LE((sp.unstable * a - a * sp.unstable).norm(), 1e-10);
  EXPECT_NEAR(sp.unstable.trace(), 1.0, 1e-10);
  EXPECT_FALSE(spectral_split(mat({{-1}}), 1e-9).has_unstable);
}

TEST(OneSidedDerivative, PolynomialIsExact) {
  auto f = [](double t) { return mat({{t * t * t - 2 * t}}); };
  for (Side side : {Side::Left, Side::Right}) {
    EXPECT_NEAR(one_sided_derivative(f, 1.0, 1, side, 1e-2)(0, 0), 1.0, 1e-8);
    EXPECT_NEAR(one_sided_derivative(f, 1.0, 2, side, 1e-2)(0, 0), 6.0, 1e-6);
  }
}

TEST(OneSidedDerivative, SeesOnlyOneSideOfAKink) {
  auto f = [](double t) { return mat({{std::abs(t)}}); };
  EXPECT_NEAR(one_sided_derivative(f, 0.0, 1, Side::Left, 1e-3)(0, 0), -1.0, 1e-8);
  EXPECT_NEAR(one_sided_derivative(f, 0.0, 1, Side::Right, 1e-3)(0, 0), 1.0, 1e-8);
}
