#pragma once

#include "qreg/numerics.hpp"

#include <complex>
#include <vector>

namespace qreg {

// SISO LTI plant
//   x' = A x + B u + P w
//   e  = C x + D u + Q w
struct Plant {
  Matrix A;  // n x n
  Matrix B;  // n x 1
  Matrix C;  // 1 x n
  double D = 0.0;
  Matrix P;  // n x nu
  Matrix Q;  // 1 x nu

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index nu() const { return P.cols(); }
};

// Throws Error naming the offending field when dimensions or entries are invalid.
void validate(const Plant& plant);

struct PlantTolerances {
  double relative_degree = 1e-9;
  double minimum_phase = 1e-9;
};

// 0 when D != 0, otherwise the smallest r with C A^{r-1} B != 0 (relative to scale).
int relative_degree(const Plant& plant, const PlantTolerances& tol = {});

// Real coefficients, lowest degree first, of det [[sI - A, -B], [C, D]].
// For D = 0 the polynomial is truncated to degree n - r.
std::vector<double> zero_polynomial(const Plant& plant, const PlantTolerances& tol = {});

// Finite roots of the Rosenbrock pencil, sorted by real part then imaginary part.
std::vector<std::complex<double>> transmission_zeros(const Plant& plant, const PlantTolerances& tol = {});

bool is_minimum_phase(const Plant& plant, const PlantTolerances& tol = {});

// Coordinates z = T1 x, y = C x for a plant with D = 0 and CB != 0, where the
// rows of T1 are an orthonormal basis of the complement of B, so T1 B = 0.
struct NormalForm {
  Matrix T;  // [T1; C]
  Matrix T_inv;
  Matrix A11, A12, A21;
  double A22 = 0.0;
  Matrix P1, P2;
  double b = 0.0;  // CB
  Matrix G1;       // P1 - A12 Q
  Matrix G2;       // P2 - A22 Q
};

NormalForm normal_form(const Plant& plant, const PlantTolerances& tol = {});

// Realization used for the zero-dynamics matrix A_z.
enum class ZeroRealization {
  // A11 of the normal form (r = 1), A - B C / D (r = 0), companion matrix of
  // the zero polynomial otherwise.
  Canonical,
  // Closed-loop A - B (C A^{r-1} B)^{-1} C A^r restricted to ker [C; CA; ...; CA^{r-1}].
  InvariantSubspace,
};

// (n - r) x (n - r) matrix whose spectrum is the set of transmission zeros.
Matrix zero_dynamics_matrix(const Plant& plant, ZeroRealization realization = ZeroRealization::Canonical,
                            const PlantTolerances& tol = {});

// Eigenvalues of a square matrix sorted by real part then imaginary part.
std::vector<std::complex<double>> sorted_eigenvalues(const Matrix& m);

// Monic characteristic polynomial, lowest degree first.
std::vector<double> characteristic_polynomial(const Matrix& m);

}  // namespace qreg
