#include "qreg/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qreg {

namespace {

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* field) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream msg;
    msg << field << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
    throw Error(msg.str());
  }
  if (!all_finite(m)) throw Error(std::string(field) + ": entries must be finite");
}

void sort_complex(std::vector<std::complex<double>>& values) {
  for (auto& z : values) {
    if (std::abs(z.imag()) <= 1e-10 * std::max(1.0, std::abs(z))) z = {z.real(), 0.0};
  }
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

// Orthonormal rows spanning the orthogonal complement of the row space of `rows`
// (assumed full row rank). Each row is signed so its largest entry is positive.
Matrix orthogonal_complement_rows(const Matrix& rows) {
  const Eigen::Index n = rows.cols();
  const Eigen::Index r = rows.rows();
  Eigen::HouseholderQR<Matrix> qr(rows.transpose());
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  Matrix out = q.rightCols(n - r).transpose();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index arg = 0;
    out.row(i).cwiseAbs().maxCoeff(&arg);
    if (out(i, arg) < 0.0) out.row(i) *= -1.0;
  }
  return out;
}

Matrix companion(const std::vector<double>& monic) {
  const auto d = static_cast<Eigen::Index>(monic.size()) - 1;
  Matrix c = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i + 1 < d; ++i) c(i, i + 1) = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) c(d - 1, j) = -monic[static_cast<std::size_t>(j)];
  return c;
}

}  // namespace

void validate(const Plant& plant) {
  const Eigen::Index n = plant.A.rows();
  if (n < 1) throw Error("plant.A: state dimension must be at least 1");
  require_shape(plant.A, n, n, "plant.A");
  require_shape(plant.B, n, 1, "plant.B");
  require_shape(plant.C, 1, n, "plant.C");
  if (!std::isfinite(plant.D)) throw Error("plant.D: must be finite");
  const Eigen::Index nu = plant.P.cols();
  if (nu < 1) throw Error("plant.P: exogenous dimension must be at least 1");
  require_shape(plant.P, n, nu, "plant.P");
  require_shape(plant.Q, 1, nu, "plant.Q");
}

int relative_degree(const Plant& plant, const PlantTolerances& tol) {
  validate(plant);
  if (plant.D != 0.0) return 0;
  const double norm_a = spectral_norm(plant.A);
  const double base = plant.C.norm() * plant.B.norm();
  Matrix power_b = plant.B;
  for (Eigen::Index r = 1; r <= plant.n(); ++r) {
    const double markov = (plant.C * power_b)(0, 0);
    const double scale = base * std::max(1.0, std::pow(norm_a, static_cast<double>(r - 1)));
    if (std::abs(markov) > tol.relative_degree * scale) return static_cast<int>(r);
    power_b = plant.A * power_b;
  }
  throw Error("no finite relative degree: C A^i B vanishes for all i < n and D = 0");
}

std::vector<std::complex<double>> sorted_eigenvalues(const Matrix& m) {
  std::vector<std::complex<double>> out;
  if (m.size() == 0) return out;
  Eigen::EigenSolver<Matrix> es(m, false);
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(es.eigenvalues()(i));
  sort_complex(out);
  return out;
}

std::vector<double> characteristic_polynomial(const Matrix& m) {
  std::vector<std::complex<double>> coeffs{1.0};
  for (const auto& root : sorted_eigenvalues(m)) {
    std::vector<std::complex<double>> next(coeffs.size() + 1, 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      next[i + 1] += coeffs[i];
      next[i] -= root * coeffs[i];
    }
    coeffs = std::move(next);
  }
  std::vector<double> out;
  out.reserve(coeffs.size());
  for (const auto& c : coeffs) out.push_back(c.real());
  return out;
}

std::vector<double> zero_polynomial(const Plant& plant, const PlantTolerances& tol) {
  validate(plant);
  if (plant.D != 0.0) {
    auto poly = characteristic_polynomial(plant.A - plant.B * plant.C / plant.D);
    for (auto& c : poly) c *= plant.D;
    return poly;
  }
  const int r = relative_degree(plant, tol);
  // det(sI - A + BC) - det(sI - A) = C adj(sI - A) B.
  const auto closed = characteristic_polynomial(plant.A - plant.B * plant.C);
  const auto open = characteristic_polynomial(plant.A);
  const auto degree = static_cast<std::size_t>(plant.n() - r);
  std::vector<double> out(degree + 1);
  for (std::size_t i = 0; i < degree; ++i) out[i] = closed[i] - open[i];
  Matrix markov = plant.C;
  for (int i = 1; i < r; ++i) markov = markov * plant.A;
  out[degree] = (markov * plant.B)(0, 0);
  return out;
}

std::vector<std::complex<double>> transmission_zeros(const Plant& plant, const PlantTolerances& tol) {
  validate(plant);
  if (plant.D != 0.0) return sorted_eigenvalues(plant.A - plant.B * plant.C / plant.D);
  const auto poly = zero_polynomial(plant, tol);
  if (poly.size() <= 1) return {};
  std::vector<double> monic(poly.size());
  for (std::size_t i = 0; i < poly.size(); ++i) monic[i] = poly[i] / poly.back();
  return sorted_eigenvalues(companion(monic));
}

bool is_minimum_phase(const Plant& plant, const PlantTolerances& tol) {
  const auto zeros = transmission_zeros(plant, tol);
  return std::all_of(zeros.begin(), zeros.end(),
                     [&](const auto& z) { return z.real() < -tol.minimum_phase; });
}

NormalForm normal_form(const Plant& plant, const PlantTolerances& tol) {
  validate(plant);
  if (plant.D != 0.0) throw Error("normal_form: requires D = 0 (D != 0)");
  const int r = relative_degree(plant, tol);
  if (r != 1) {
    std::ostringstream msg;
    msg << "normal_form: requires relative degree 1 (r != 1, r = " << r << ")";
    throw Error(msg.str());
  }
  const Eigen::Index n = plant.n();
  NormalForm nf;
  // T1 B = 0 keeps the input out of the z equation.
  const double b = (plant.C * plant.B)(0, 0);
  const Matrix t1 = orthogonal_complement_rows(plant.B.transpose());
  nf.T.resize(n, n);
  nf.T.topRows(n - 1) = t1;
  nf.T.bottomRows(1) = plant.C;
  nf.T_inv.resize(n, n);
  nf.T_inv.leftCols(n - 1) = (Matrix::Identity(n, n) - plant.B * plant.C / b) * t1.transpose();
  nf.T_inv.rightCols(1) = plant.B / b;

  const Matrix a_bar = nf.T * plant.A * nf.T_inv;
  nf.A11 = a_bar.topLeftCorner(n - 1, n - 1);
  nf.A12 = a_bar.topRightCorner(n - 1, 1);
  nf.A21 = a_bar.bottomLeftCorner(1, n - 1);
  nf.A22 = a_bar(n - 1, n - 1);
  nf.P1 = t1 * plant.P;
  nf.P2 = plant.C * plant.P;
  nf.b = b;
  nf.G1 = nf.P1 - nf.A12 * plant.Q;
  nf.G2 = nf.P2 - nf.A22 * plant.Q;
  return nf;
}

Matrix zero_dynamics_matrix(const Plant& plant, ZeroRealization realization, const PlantTolerances& tol) {
  validate(plant);
  if (plant.D != 0.0) return plant.A - plant.B * plant.C / plant.D;
  const int r = relative_degree(plant, tol);
  const Eigen::Index m = plant.n() - r;
  if (m == 0) return Matrix(0, 0);

  if (realization == ZeroRealization::Canonical) {
    if (r == 1) return normal_form(plant, tol).A11;
    const auto poly = zero_polynomial(plant, tol);
    std::vector<double> monic(poly.size());
    for (std::size_t i = 0; i < poly.size(); ++i) monic[i] = poly[i] / poly.back();
    return companion(monic);
  }

  Matrix obs(r, plant.n());
  Matrix row = plant.C;
  for (int i = 0; i < r; ++i) {
    obs.row(i) = row;
    row = row * plant.A;
  }
  // row = C A^r here.
  const double markov = (obs.row(r - 1) * plant.B)(0, 0);
  const Matrix closed = plant.A - plant.B * row / markov;
  const Matrix basis = orthogonal_complement_rows(obs).transpose();
  return basis.transpose() * closed * basis;
}

}  // namespace qreg
