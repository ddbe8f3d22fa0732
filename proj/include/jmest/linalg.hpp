#pragma once

// Dense complex linear algebra shared by the simulator, the shadow and the
// variance modules. Qubit 1 is the most significant bit of a basis index.

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>

#include "jmest/errors.hpp"

namespace jmest {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Matrix2c = Eigen::Matrix2cd;
using Vec3 = std::array<double, 3>;

inline constexpr Complex kI{0.0, 1.0};

/// Largest qubit count for which dense 2^n x 2^n matrices are formed.
inline constexpr int kMaxDenseQubits = 14;

inline std::size_t dim_of(int n) { return std::size_t{1} << n; }

inline int qubits_of_dim(Eigen::Index dim) {
  int n = 0;
  while ((Eigen::Index{1} << n) < dim) ++n;
  if ((Eigen::Index{1} << n) != dim) throw DimensionError("dimension is not a power of two");
  return n;
}

inline Matrix2c sigma_x() {
  Matrix2c m;
  m << 0, 1, 1, 0;
  return m;
}
inline Matrix2c sigma_y() {
  Matrix2c m;
  m << 0, -kI, kI, 0;
  return m;
}
inline Matrix2c sigma_z() {
  Matrix2c m;
  m << 1, 0, 0, -1;
  return m;
}

/// a*1 + b.sigma
inline Matrix2c bloch_matrix(double a, const Vec3& b) {
  return a * Matrix2c::Identity() + b[0] * sigma_x() + b[1] * sigma_y() + b[2] * sigma_z();
}

/// Inverse of bloch_matrix for a Hermitian 2x2 input: returns (a, b).
inline std::pair<double, Vec3> bloch_of(const Matrix2c& m) {
  const double a = 0.5 * (m(0, 0) + m(1, 1)).real();
  const Vec3 b{(m(0, 1) + m(1, 0)).real() * 0.5, (m(1, 0) - m(0, 1)).imag() * 0.5,
               (m(0, 0) - m(1, 1)).real() * 0.5};
  return {a, b};
}

inline double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline double hermiticity_defect(const CMatrix& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

/// Smallest eigenvalue of the Hermitian part of m.
inline double min_eigenvalue(const CMatrix& m) {
  const CMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Spectral norm of a Hermitian matrix.
inline double hermitian_norm(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Reduced 2x2 operator of the first tensor factor: tr_rest[sigma].
inline Matrix2c reduce_to_first(const CMatrix& sigma) {
  const Eigen::Index h = sigma.rows() / 2;
  Matrix2c r;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) r(a, b) = sigma.block(a * h, b * h, h, h).trace();
  return r;
}

/// tr_1[(E (x) 1) sigma]: contracts the first tensor factor of sigma against E.
inline CMatrix contract_first(const CMatrix& sigma, const Matrix2c& effect) {
  const Eigen::Index h = sigma.rows() / 2;
  CMatrix out = CMatrix::Zero(h, h);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const Complex e = effect(a, b);
      if (e != Complex{0.0, 0.0}) out.noalias() += e * sigma.block(b * h, a * h, h, h);
    }
  return out;
}

}  // namespace jmest
