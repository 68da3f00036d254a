#pragma once

#include "qreg/exogen.hpp"
#include "qreg/numerics.hpp"
#include "qreg/plant.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace qreg::testing {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// A = [[0, 1], [-2, -3]], B = [0; 1] with the given output row.
inline Plant two_state(const Matrix& c, double d, const Matrix& p, const Matrix& q) {
  Plant pl;
  pl.A = mat({{0, 1}, {-2, -3}});
  pl.B = mat({{0}, {1}});
  pl.C = c;
  pl.D = d;
  pl.P = p;
  pl.Q = q;
  return pl;
}

// Relative degree 2, no zeros.
inline Plant plant_a(const Matrix& p = mat({{0, 0}, {1, 0}}), const Matrix& q = mat({{1, 0}})) {
  return two_state(mat({{1, 0}}), 0.0, p, q);
}
// Relative degree 1, zero at -1.
inline Plant plant_b(const Matrix& p = mat({{0, 0}, {1, 0}}), const Matrix& q = mat({{1, 0}})) {
  return two_state(mat({{1, 1}}), 0.0, p, q);
}
// Relative degree 1, zero at +1.
inline Plant plant_c(const Matrix& p = mat({{0, 0}, {1, 0}}), const Matrix& q = mat({{1, 0}})) {
  return two_state(mat({{-1, 1}}), 0.0, p, q);
}

inline Matrix rotation(double w = 1.0) { return mat({{0, w}, {-w, 0}}); }

// Nested cumulative quadrature on a uniform grid aligned with `breaks`:
// level k is integrated from level k-1 with 4-point Lagrange panels that
// never cross a break. Returns level[k][i] at nodes t0 + i*dt.
inline std::vector<std::vector<double>> nested_integrals(const std::function<double(double, Side)>& f, int kmax,
                                                         double t0, double t_end, double dt,
                                                         const std::vector<double>& breaks) {
  const auto n = static_cast<std::size_t>(std::llround((t_end - t0) / dt));
  std::vector<std::size_t> cuts{0};
  for (double b : breaks) {
    if (b > t0 && b < t_end) cuts.push_back(static_cast<std::size_t>(std::llround((b - t0) / dt)));
  }
  cuts.push_back(n);
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(kmax) + 1, std::vector<double>(n + 1, 0.0));
  auto integrate_segment = [&](const std::vector<double>& g, std::size_t a, std::size_t b,
                               std::vector<double>& out) {
    // Panel [i, i+1] uses the 4 nodes nearest to it inside [a, b].
    for (std::size_t i = a; i < b; ++i) {
      std::size_t s = i == a ? a : i - 1;
      if (s + 3 > b) s = b - 3;
      // Weights of the integral over [i, i+1] of the cubic through s..s+3.
      const double x0 = static_cast<double>(i) - static_cast<double>(s);
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) {
        // Lagrange basis L_m integrated over [x0, x0 + 1] by 3-point Gauss (exact for cubics).
        const double gx[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
        const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
        double w = 0.0;
        for (int q = 0; q < 3; ++q) {
          const double x = x0 + gx[q];
          double l = 1.0;
          for (int o = 0; o < 4; ++o)
            if (o != m) l *= (x - o) / (m - o);
          w += gw[q] * l;
        }
        acc += w * g[s + static_cast<std::size_t>(m)];
      }
      out[i + 1] = out[i] + acc * dt;
    }
  };
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const std::size_t a = cuts[c];
    const std::size_t b = cuts[c + 1];
    std::vector<double> g(n + 1, 0.0);
    for (std::size_t i = a; i <= b; ++i) {
      const double t = t0 + static_cast<double>(i) * dt;
      g[i] = f(t, i == a ? Side::Right : (i == b ? Side::Left : Side::Right));
    }
    integrate_segment(g, a, b, levels[1]);
  }
  for (int k = 2; k <= kmax; ++k) {
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      integrate_segment(levels[static_cast<std::size_t>(k - 1)], cuts[c], cuts[c + 1],
                        levels[static_cast<std::size_t>(k)]);
    }
  }
  return levels;
}

inline Matrix random_matrix(std::mt19937& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

// Random SISO plant with relative degree 1 and all zeros in Re < -0.2.
inline Plant random_minimum_phase_plant(std::mt19937& rng, Eigen::Index n, Eigen::Index nu) {
  for (;;) {
    Plant p;
    p.A = random_matrix(rng, n, n);
    p.B = random_matrix(rng, n, 1);
    p.C = random_matrix(rng, 1, n);
    p.D = 0.0;
    p.P = random_matrix(rng, n, nu);
    p.Q = random_matrix(rng, 1, nu);
    if (std::abs((p.C * p.B)(0, 0)) < 0.3) continue;
    const auto zeros = transmission_zeros(p);
    bool ok = static_cast<Eigen::Index>(zeros.size()) == n - 1;
    for (const auto& z : zeros) ok = ok && z.real() < -0.2 && std::abs(z) < 20.0;
    if (ok) return p;
  }
}

}  // namespace qreg::testing
