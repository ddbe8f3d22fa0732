#pragma once

// Classical-shadow snapshots in closed form: local Pauli-basis snapshots,
// snapshots built from parent-measurement records, and global 2-design
// snapshots for small dimensions.

#include <cmath>
#include <string>
#include <vector>

#include "jmest/errors.hpp"
#include "jmest/linalg.hpp"
#include "jmest/pauli.hpp"
#include "jmest/simcore.hpp"

namespace jmest {

/// Trace-one Hermitian estimate of a state; not necessarily positive.
class Snapshot {
 public:
  explicit Snapshot(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionError("snapshot must be square");
    if (hermiticity_defect(m_) > 1e-12 * std::max(1.0, m_.cwiseAbs().maxCoeff()))
      throw DomainError("snapshot is not Hermitian");
    if (std::abs(m_.trace() - Complex{1.0, 0.0}) > 1e-10) throw DomainError("snapshot does not have unit trace");
  }

  Eigen::Index dim() const { return m_.rows(); }
  const CMatrix& matrix() const { return m_; }

 private:
  CMatrix m_;
};

/// Tensor product over qubits of 3 |phi_i><phi_i| - 1, where phi_i is the
/// eigenstate of letter bases[i] with eigenvalue eigs[i].
inline Snapshot local_snapshot(const std::vector<PauliLetter>& bases, const std::vector<int>& eigs) {
  if (bases.empty() || bases.size() != eigs.size()) throw DimensionError("one basis letter and one outcome per qubit required");
  if (static_cast<int>(bases.size()) > kMaxDenseQubits) throw CapabilityError("snapshot exceeds the dense qubit cap");
  CMatrix m = CMatrix::Ones(1, 1);
  for (std::size_t i = 0; i < bases.size(); ++i) {
    if (bases[i] == PauliLetter::I) throw DomainError("local snapshot basis must be X, Y or Z");
    if (eigs[i] != 1 && eigs[i] != -1) throw DomainError("outcomes must be +1 or -1");
    // 3 (1 + s P)/2 - 1
    const Matrix2c f = 0.5 * Matrix2c::Identity() + (1.5 * eigs[i]) * letter_matrix(bases[i]);
    m = kron(m, f);
  }
  return Snapshot(std::move(m));
}

/// Tensor product of 1/2 (1 + e_i . sigma) with e_i = (x_i/eta^x, y_i/eta^y, z_i/eta^z).
inline Snapshot jm_snapshot(const OutcomeRecord& rec, const Visibilities& v) {
  if (rec.size() != v.size() || rec.size() == 0) throw DimensionError("record and visibilities differ in qubit count");
  if (rec.size() > kMaxDenseQubits) throw CapabilityError("snapshot exceeds the dense qubit cap");
  CMatrix m = CMatrix::Ones(1, 1);
  for (int i = 0; i < rec.size(); ++i) {
    Vec3 e{};
    for (std::size_t a = 0; a < 3; ++a) {
      if (!(v[i][a] > 0.0)) throw UnestimableTerm("snapshot needs every visibility positive (qubit " + std::to_string(i) + ")");
      e[a] = rec[i][a] / v[i][a];
    }
    m = kron(m, bloch_matrix(0.5, {0.5 * e[0], 0.5 * e[1], 0.5 * e[2]}));
  }
  return Snapshot(std::move(m));
}

inline constexpr Eigen::Index kMaxGlobalSnapshotDim = 16;

/// (d + 1) |phi><phi| - 1 for a normalized d-dimensional vector.
inline Snapshot global_snapshot(const CVector& phi) {
  const Eigen::Index d = phi.size();
  if (d < 1 || d > kMaxGlobalSnapshotDim) throw CapabilityError("global snapshots limited to d <= 16");
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw DomainError("state vector is not normalized");
  CMatrix m = static_cast<double>(d + 1) * (phi * phi.adjoint()) - CMatrix::Identity(d, d);
  m = 0.5 * (m + m.adjoint());
  return Snapshot(std::move(m));
}

/// Re tr[O snap], asserting a negligible imaginary part.
inline double shadow_expectation(const CMatrix& o, const Snapshot& snap) {
  if (o.rows() != snap.dim() || o.cols() != snap.dim()) throw DimensionError("observable and snapshot differ in dimension");
  const Complex t = (o.transpose().cwiseProduct(snap.matrix())).sum();
  if (std::abs(t.imag()) > 1e-10 * std::max(1.0, std::abs(t.real()))) throw DomainError("tr[O snapshot] is not real");
  return t.real();
}

/// The six Pauli eigenstates of a qubit, an exact 2-design.
inline std::vector<CVector> pauli_eigenstates() {
  std::vector<CVector> out;
  const double r = 1.0 / std::sqrt(2.0);
  CVector v(2);
  v << 1, 0;
  out.push_back(v);
  v << 0, 1;
  out.push_back(v);
  v << r, r;
  out.push_back(v);
  v << r, -r;
  out.push_back(v);
  v << r, Complex(0, r);
  out.push_back(v);
  v << r, Complex(0, -r);
  out.push_back(v);
  return out;
}

/// Single-qubit snapshots 1/2 (1 + e . sigma) for the eight outcome triples.
inline std::vector<Snapshot> jm_snapshot_set(const Vec3& v) {
  std::vector<Snapshot> out;
  for (int c = 0; c < 8; ++c) out.push_back(jm_snapshot(OutcomeRecord{{triple_of_code(c)}}, Visibilities({v})));
  return out;
}

}  // namespace jmest
