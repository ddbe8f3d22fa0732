#pragma once

// Brute-force reference implementations used by the tests. They build every
// operator densely from Kronecker products of 2x2 matrices and share no code
// paths with the library beyond basic types.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include "jmest/linalg.hpp"
#include "jmest/model.hpp"
#include "jmest/simcore.hpp"

namespace oracle {

using jmest::CMatrix;
using jmest::Complex;
using jmest::Vec3;

inline CMatrix letter(char c) {
  CMatrix m(2, 2);
  const Complex i{0, 1};
  switch (c) {
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, -i, i, 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default: m << 1, 0, 0, 1; break;
  }
  return m;
}

inline CMatrix dense_kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out = CMatrix::Zero(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      for (Eigen::Index rr = 0; rr < b.rows(); ++rr)
        for (Eigen::Index cc = 0; cc < b.cols(); ++cc) out(r * b.rows() + rr, c * b.cols() + cc) = a(r, c) * b(rr, cc);
  return out;
}

inline CMatrix pauli(const std::string& word) {
  CMatrix m = CMatrix::Identity(1, 1);
  for (char c : word) m = dense_kron(m, letter(c));
  return m;
}

/// 1/8 (1 + x ex X + y ey Y + z ez Z) built from the letter matrices.
inline CMatrix parent(const std::array<int, 3>& t, const Vec3& v) {
  return 0.125 * (letter('I') + t[0] * v[0] * letter('X') + t[1] * v[1] * letter('Y') + t[2] * v[2] * letter('Z'));
}

/// Enumerates all 8^n records, in the library's index order.
inline std::vector<std::vector<std::array<int, 3>>> all_records(int n) {
  std::vector<std::vector<std::array<int, 3>>> out;
  const std::size_t count = std::size_t{1} << (3 * n);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::vector<std::array<int, 3>> rec(static_cast<std::size_t>(n));
    std::size_t k = idx;
    for (int q = n - 1; q >= 0; --q) {
      const int code = static_cast<int>(k & 7);
      k >>= 3;
      rec[static_cast<std::size_t>(q)] = {(code & 4) ? -1 : 1, (code & 2) ? -1 : 1, (code & 1) ? -1 : 1};
    }
    out.push_back(rec);
  }
  return out;
}

inline CMatrix parent_product(const std::vector<std::array<int, 3>>& rec, const jmest::Visibilities& v) {
  CMatrix m = CMatrix::Identity(1, 1);
  for (std::size_t q = 0; q < rec.size(); ++q) m = dense_kron(m, parent(rec[q], v[static_cast<int>(q)]));
  return m;
}

inline double trace_real(const CMatrix& a, const CMatrix& b) { return (a * b).trace().real(); }

/// p(x) = tr[F(x) rho] for every record.
inline std::vector<double> distribution(const CMatrix& rho, const jmest::Visibilities& v) {
  std::vector<double> p;
  for (const auto& rec : all_records(v.size())) p.push_back(trace_real(parent_product(rec, v), rho));
  return p;
}

/// Estimator value lambda_I + sum lambda_P prod(selected signs) / prod(selected visibilities).
inline double estimator(const jmest::Hamiltonian& h, const std::vector<std::array<int, 3>>& rec,
                        const jmest::Visibilities& v) {
  double acc = 0.0;
  for (const auto& [p, lambda] : h.terms()) {
    const std::string w = p.str();
    double term = lambda;
    for (std::size_t q = 0; q < w.size(); ++q) {
      const int axis = w[q] == 'X' ? 0 : w[q] == 'Y' ? 1 : w[q] == 'Z' ? 2 : -1;
      if (axis < 0) continue;
      term *= rec[q][static_cast<std::size_t>(axis)] / v[static_cast<int>(q)][static_cast<std::size_t>(axis)];
    }
    acc += term;
  }
  return acc;
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact mean and variance of the estimator by enumerating all records.
inline Moments exhaustive_moments(const jmest::Hamiltonian& h, const CMatrix& rho, const jmest::Visibilities& v) {
  const auto recs = all_records(v.size());
  const auto p = distribution(rho, v);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const double e = estimator(h, recs[k], v);
    m1 += p[k] * e;
    m2 += p[k] * e * e;
  }
  return {m1, m2 - m1 * m1};
}

inline CMatrix hamiltonian_matrix(const jmest::Hamiltonian& h) {
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << h.qubits());
  CMatrix m = CMatrix::Zero(d, d);
  for (const auto& [p, lambda] : h.terms()) m += lambda * pauli(p.str());
  return m;
}

// ---- random instance generators ----

inline CMatrix random_density(int n, std::mt19937_64& gen, int rank = -1) {
  std::normal_distribution<double> normal;
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  const Eigen::Index k = rank <= 0 ? d : rank;
  CMatrix a(d, k);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < k; ++c) a(r, c) = Complex{normal(gen), normal(gen)};
  CMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return 0.5 * (rho + rho.adjoint());
}

inline jmest::QuantumState random_state(int n, std::mt19937_64& gen) {
  return jmest::QuantumState(random_density(n, gen));
}

inline std::string random_word(int n, std::mt19937_64& gen, bool allow_identity = true) {
  static const char kLetters[] = {'I', 'X', 'Y', 'Z'};
  std::uniform_int_distribution<int> pick(allow_identity ? 0 : 1, 3);
  std::string w;
  for (int i = 0; i < n; ++i) w.push_back(kLetters[pick(gen)]);
  return w;
}

inline jmest::Hamiltonian random_hamiltonian(int n, int max_terms, std::mt19937_64& gen) {
  std::uniform_int_distribution<int> count(1, max_terms);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  jmest::Hamiltonian h(n);
  const int terms = count(gen);
  for (int t = 0; t < terms; ++t) h.add(random_word(n, gen), coeff(gen));
  return h;
}

/// Random visibilities with positive components and Bloch length in [0.2, 1].
inline jmest::Visibilities random_visibilities(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    Vec3 v{u(gen), u(gen), u(gen)};
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    std::uniform_real_distribution<double> len(0.2, 1.0);
    const double target = len(gen);
    for (double& e : v) e *= target / norm;
    out.push_back(v);
  }
  return jmest::Visibilities(out);
}

}  // namespace oracle
