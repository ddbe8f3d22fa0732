#pragma once

// Exact second moments of the joint-measurement and locally biased shadow
// estimators, and the state-independent operator-norm bound.
//
// Every pair sum below runs over the non-identity terms of H. The identity
// coefficient is a constant shift of the estimator and never contributes to
// its fluctuations.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "jmest/errors.hpp"
#include "jmest/estimate.hpp"
#include "jmest/linalg.hpp"
#include "jmest/model.hpp"
#include "jmest/pauli.hpp"
#include "jmest/simcore.hpp"

namespace jmest {

struct KappaEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double value = 0.0;
};

/// kappa_{P,Q} = eta_PQ f(P,Q) / (eta_P eta_Q) lambda_P lambda_Q over term
/// pairs with f = 1; entries are stored for both orders.
class KappaMatrix {
 public:
  KappaMatrix(std::vector<PauliString> terms, std::vector<KappaEntry> entries)
      : terms_(std::move(terms)), entries_(std::move(entries)) {
    for (std::size_t k = 0; k < entries_.size(); ++k) index_[{entries_[k].i, entries_[k].j}] = k;
  }

  const std::vector<PauliString>& terms() const { return terms_; }
  const std::vector<KappaEntry>& entries() const { return entries_; }

  /// 0 when the pair is absent (f = 0) or either string is not a term.
  double at(const PauliString& p, const PauliString& q) const {
    const auto ip = std::find(terms_.begin(), terms_.end(), p);
    const auto iq = std::find(terms_.begin(), terms_.end(), q);
    if (ip == terms_.end() || iq == terms_.end()) return 0.0;
    auto it = index_.find({static_cast<std::size_t>(ip - terms_.begin()), static_cast<std::size_t>(iq - terms_.begin())});
    return it == index_.end() ? 0.0 : entries_[it->second].value;
  }

  bool contains(const PauliString& p, const PauliString& q) const {
    const auto ip = std::find(terms_.begin(), terms_.end(), p);
    const auto iq = std::find(terms_.begin(), terms_.end(), q);
    if (ip == terms_.end() || iq == terms_.end()) return false;
    return index_.count({static_cast<std::size_t>(ip - terms_.begin()), static_cast<std::size_t>(iq - terms_.begin())}) > 0;
  }

  double diagonal_sum() const {
    double s = 0.0;
    for (const auto& e : entries_)
      if (e.i == e.j) s += e.value;
    return s;
  }

  double abs_sum() const {
    double s = 0.0;
    for (const auto& e : entries_) s += std::abs(e.value);
    return s;
  }

 private:
  std::vector<PauliString> terms_;
  std::vector<KappaEntry> entries_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index_;
};

namespace detail {

inline std::vector<std::pair<PauliString, double>> checked_terms(const Hamiltonian& h, const Visibilities& v) {
  if (v.size() != h.qubits()) throw DimensionError("Hamiltonian and visibilities differ in qubit count");
  auto terms = h.pauli_terms();
  for (const auto& [p, lambda] : terms)
    if (eta_of(p, v) <= 0.0) throw UnestimableTerm("term " + p.str() + " has zero visibility");
  return terms;
}

/// Per-qubit weight of a letter pair; the pair weight is the product over qubits.
using LetterWeight = std::function<double(int qubit, PauliLetter p, PauliLetter q)>;

inline double pair_weight(const PauliString& p, const PauliString& q, const LetterWeight& w) {
  double g = 1.0;
  for (int i = 0; i < p.size() && g != 0.0; ++i) {
    if (p[i] == PauliLetter::I || q[i] == PauliLetter::I) continue;
    g *= p[i] == q[i] ? w(i, p[i], q[i]) : 0.0;
  }
  return g;
}

/// Letter weight of the joint-measurement estimator: 1 / (eta_i^a)^2 on equal letters.
inline LetterWeight jm_letter_weight(const Visibilities& v) {
  return [v](int i, PauliLetter a, PauliLetter) {
    const double e = v.axis(i, a);
    return 1.0 / (e * e);
  };
}

}  // namespace detail

inline KappaMatrix kappa(const Hamiltonian& h, const Visibilities& v) {
  const auto terms = detail::checked_terms(h, v);
  std::vector<PauliString> strings;
  for (const auto& t : terms) strings.push_back(t.first);
  std::vector<KappaEntry> entries;
  for (std::size_t i = 0; i < terms.size(); ++i)
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const auto& [p, lp] = terms[i];
      const auto& [q, lq] = terms[j];
      if (f_factor(p, q) == 0) continue;
      const double value = eta_pq(p, q, v) / (eta_of(p, v) * eta_of(q, v)) * lp * lq;
      entries.push_back({i, j, value});
    }
  return KappaMatrix(std::move(strings), std::move(entries));
}

/// Sum of g(P,Q) lambda_P lambda_Q tr[P Q rho] over term pairs.
inline double weighted_second_moment(const Hamiltonian& h, const QuantumState& rho, const detail::LetterWeight& w) {
  const auto terms = h.pauli_terms();
  double acc = 0.0;
  for (const auto& [p, lp] : terms)
    for (const auto& [q, lq] : terms) {
      const double g = detail::pair_weight(p, q, w);
      if (g == 0.0) continue;
      const Complex t = product_expectation(rho, p, q);
      // Qubit-wise commuting pairs have a real product with phase +1.
      if (std::abs(t.imag()) > 1e-10) throw DomainError("tr[PQ rho] of a commuting pair is not real");
      acc += g * lp * lq * t.real();
    }
  return acc;
}

/// tr[(H - lambda_I) rho].
inline double traceless_expectation(const Hamiltonian& h, const QuantumState& rho) {
  double e = 0.0;
  for (const auto& [p, lambda] : h.pauli_terms()) e += lambda * expectation(rho, p);
  return e;
}

/// Sum_{P,Q} kappa_{P,Q} tr[PQ rho]: the variance without the subtracted square.
inline double state_free_bound(const Hamiltonian& h, const Visibilities& v, const QuantumState& rho) {
  detail::checked_terms(h, v);
  if (rho.qubits() != h.qubits()) throw DimensionError("state and Hamiltonian differ in qubit count");
  return weighted_second_moment(h, rho, detail::jm_letter_weight(v));
}

inline double jm_variance(const Hamiltonian& h, const Visibilities& v, const QuantumState& rho) {
  const double m2 = state_free_bound(h, v, rho);
  const double m1 = traceless_expectation(h, rho);
  return m2 - m1 * m1;
}

/// g(P,Q) of the locally biased shadow estimator.
inline double lbcs_g(const PauliString& p, const PauliString& q, const BasisDistribution& beta) {
  require_same_length(p, q);
  return detail::pair_weight(p, q, [&beta](int i, PauliLetter a, PauliLetter) {
    return 1.0 / beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis_of(a))];
  });
}

inline double lbcs_variance(const Hamiltonian& h, const BasisDistribution& beta, const QuantumState& rho) {
  const int n = h.qubits();
  if (static_cast<int>(beta.size()) != n || rho.qubits() != n) throw DimensionError("LBCS inputs differ in qubit count");
  for (const auto& [p, lambda] : h.pauli_terms())
    for (int i = 0; i < n; ++i)
      if (p[i] != PauliLetter::I && !(beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis_of(p[i]))] > 0.0))
        throw DomainError("basis distribution of qubit " + std::to_string(i) + " vanishes on a letter of " + p.str());
  const double m2 = weighted_second_moment(h, rho, [&beta](int i, PauliLetter a, PauliLetter) {
    return 1.0 / beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis_of(a))];
  });
  const double m1 = traceless_expectation(h, rho);
  return m2 - m1 * m1;
}

/// beta_i(a) = (eta_i^a)^2. A distribution when each qubit's squares sum to
/// one; the variance formulas only use 1/beta on letters present in H.
inline BasisDistribution basis_distribution_of(const Visibilities& v) {
  BasisDistribution beta;
  for (int i = 0; i < v.size(); ++i) beta.push_back({v[i][0] * v[i][0], v[i][1] * v[i][1], v[i][2] * v[i][2]});
  return beta;
}

inline double cost_diag(const Hamiltonian& h, const Visibilities& v) {
  double s = 0.0;
  for (const auto& [p, lambda] : detail::checked_terms(h, v)) {
    const double e = eta_of(p, v);
    s += lambda * lambda / (e * e);
  }
  return s;
}

/// Sum of |kappa_{P,Q}| over all pairs.
inline double cost_kappa_sum(const Hamiltonian& h, const Visibilities& v) { return kappa(h, v).abs_sum(); }

/// Sharp readout of a noisy qubit inflates the single-qubit shadow norm to
/// sqrt(3) / (alpha + beta - 1).
inline double noisy_shadow_factor(const ReadoutNoise& noise, int qubit) {
  const double t = noise[qubit].strength();
  if (!(t > 0.0)) throw DomainError("qubit " + std::to_string(qubit) + " has uninformative readout (alpha + beta <= 1)");
  return std::sqrt(3.0) / t;
}

// ---------------------------------------------------------------------------
// Operator norms of sums of Pauli products.

/// Sum_R c_R R collected from weighted term pairs g(P,Q) lambda_P lambda_Q P Q.
class PauliSum {
 public:
  explicit PauliSum(int n) : n_(n) {}

  void add(const PauliString& r, double c) {
    if (c != 0.0) terms_[r] += c;
  }

  int qubits() const { return n_; }
  const std::map<PauliString, double>& terms() const { return terms_; }

  CMatrix dense() const {
    const auto d = static_cast<Eigen::Index>(dim_of(n_));
    CMatrix m = CMatrix::Zero(d, d);
    for (const auto& [r, c] : terms_) {
      const auto xm = r.x_mask();
      const auto zm = r.z_mask();
      const Complex ph = c * Phase(r.y_count()).value();
      for (std::uint64_t col = 0; col < static_cast<std::uint64_t>(d); ++col) {
        const double sign = (std::popcount(col & zm) & 1) ? -1.0 : 1.0;
        m(static_cast<Eigen::Index>(col ^ xm), static_cast<Eigen::Index>(col)) += sign * ph;
      }
    }
    return m;
  }

  CVector apply(const CVector& x) const {
    CVector y = CVector::Zero(x.size());
    for (const auto& [r, c] : terms_) accumulate_pauli_action(r, Complex{c, 0.0}, x, y);
    return y;
  }

 private:
  int n_;
  std::map<PauliString, double> terms_;
};

inline PauliSum pair_operator(const Hamiltonian& h, const detail::LetterWeight& w) {
  PauliSum out(h.qubits());
  const auto terms = h.pauli_terms();
  for (const auto& [p, lp] : terms)
    for (const auto& [q, lq] : terms) {
      const double g = detail::pair_weight(p, q, w);
      if (g == 0.0) continue;
      auto [phase, r] = product(p, q);
      if (!(phase == Phase(0))) throw DomainError("qubit-wise commuting product with non-trivial phase");
      out.add(r, g * lp * lq);
    }
  return out;
}

/// Largest qubit count handled by the dense Hermitian eigensolver; above it a
/// matrix-free Lanczos iteration is used.
inline constexpr int kDenseEigenQubits = 10;

namespace detail {

inline double lanczos_max_eigenvalue(const PauliSum& op, double rel_tol = 1e-10, int max_iter = 400) {
  const auto d = static_cast<Eigen::Index>(dim_of(op.qubits()));
  std::mt19937_64 gen(0x5EED);
  std::normal_distribution<double> normal;
  CVector q(d);
  for (Eigen::Index i = 0; i < d; ++i) q[i] = Complex{normal(gen), normal(gen)};
  q.normalize();
  std::vector<CVector> basis{q};
  std::vector<double> alpha, beta;
  double previous = -std::numeric_limits<double>::infinity();
  const int limit = static_cast<int>(std::min<Eigen::Index>(max_iter, d));
  for (int k = 0; k < limit; ++k) {
    CVector w = op.apply(basis.back());
    alpha.push_back(basis.back().dot(w).real());
    // Full reorthogonalization, twice for stability.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) w -= b.dot(w) * b;
    const double b = w.norm();
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(alpha.size()), static_cast<Eigen::Index>(alpha.size()));
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = alpha[i];
      if (i + 1 < alpha.size()) {
        t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = beta[i];
        t(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(i)) = beta[i];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    const auto last = t.rows() - 1;
    const double theta = es.eigenvalues()[last];
    const double residual = std::abs(b * es.eigenvectors()(last, last));
    const double scale = std::max(1.0, std::abs(theta));
    if (residual <= rel_tol * scale || b <= 1e-14 * scale ||
        (k > 20 && std::abs(theta - previous) <= 1e-14 * scale && residual <= 1e-8 * scale))
      return theta;
    previous = theta;
    beta.push_back(b);
    basis.push_back(w / b);
  }
  throw SolverIndeterminate("Lanczos iteration did not converge");
}

}  // namespace detail

inline double max_eigenvalue(const PauliSum& op) {
  if (op.qubits() > kMaxDenseQubits)
    throw CapabilityError("operator norms are limited to " + std::to_string(kMaxDenseQubits) + " qubits");
  if (op.terms().empty()) return 0.0;
  if (op.qubits() <= kDenseEigenQubits) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(op.dense(), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  }
  return detail::lanczos_max_eigenvalue(op);
}

/// Largest eigenvalue of Sum kappa_{P,Q} P Q: worst-case second moment over states.
inline double jm_norm_sq(const Hamiltonian& h, const Visibilities& v) {
  detail::checked_terms(h, v);
  if (h.qubits() > kMaxDenseQubits)
    throw CapabilityError("JM norm limited to " + std::to_string(kMaxDenseQubits) + " qubits");
  return max_eigenvalue(pair_operator(h, detail::jm_letter_weight(v)));
}

/// Worst-case second moment of the local shadow estimator with readout noise:
/// equal letters on qubit i weigh noisy_shadow_factor(noise, i)^2.
inline double noisy_cs_norm_sq(const Hamiltonian& h, const ReadoutNoise& noise) {
  if (noise.size() != h.qubits()) throw DimensionError("noise model and Hamiltonian differ in qubit count");
  if (h.qubits() > kMaxDenseQubits)
    throw CapabilityError("shadow norm limited to " + std::to_string(kMaxDenseQubits) + " qubits");
  std::vector<double> f;
  for (int i = 0; i < noise.size(); ++i) f.push_back(noisy_shadow_factor(noise, i));
  return max_eigenvalue(pair_operator(h, [f](int i, PauliLetter, PauliLetter) {
    return f[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(i)];
  }));
}

struct VarianceReport {
  std::optional<double> exact_variance;
  std::optional<double> state_free_bound;
  std::optional<double> expectation;
  double jm_norm_sq = 0.0;
  double cost_diag = 0.0;
};

inline VarianceReport variance_report(const Hamiltonian& h, const Visibilities& v, const std::optional<QuantumState>& rho) {
  VarianceReport r;
  r.jm_norm_sq = jm_norm_sq(h, v);
  r.cost_diag = cost_diag(h, v);
  if (rho) {
    r.state_free_bound = state_free_bound(h, v, *rho);
    const double m1 = traceless_expectation(h, *rho);
    r.exact_variance = *r.state_free_bound - m1 * m1;
    r.expectation = m1 + h.identity_coefficient();
  }
  return r;
}

}  // namespace jmest
