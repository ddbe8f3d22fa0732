#pragma once

// Single-shot estimators built from parent-measurement records, the locally
// biased shadow estimator, and median-of-means aggregation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jmest/errors.hpp"
#include "jmest/model.hpp"
#include "jmest/pauli.hpp"
#include "jmest/simcore.hpp"

namespace jmest {

/// Product over the support of P of the record component selected by each letter.
inline int mu_of(const PauliString& p, const OutcomeRecord& rec) {
  if (p.is_identity()) throw DomainError("mu is undefined for the identity string");
  if (p.size() != rec.size()) throw DimensionError("Pauli string and record differ in qubit count");
  int s = 1;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] != PauliLetter::I) s *= rec[i][static_cast<std::size_t>(axis_of(p[i]))];
  return s;
}

inline double estimate_pauli(const PauliString& p, const OutcomeRecord& rec, const Visibilities& v) {
  const double eta = eta_of(p, v);
  if (eta <= 0.0) throw UnestimableTerm("term " + p.str() + " has zero visibility");
  return mu_of(p, rec) / eta;
}

/// Precomputed form of H-hat = lambda_I + sum_P lambda_P mu(P) / eta_P.
class HamiltonianEstimator {
 public:
  HamiltonianEstimator(const Hamiltonian& h, const Visibilities& v) : n_(h.qubits()), constant_(h.identity_coefficient()) {
    if (v.size() != n_) throw DimensionError("Hamiltonian and visibilities differ in qubit count");
    for (const auto& [p, lambda] : h.pauli_terms()) {
      const double eta = eta_of(p, v);
      if (eta <= 0.0) throw UnestimableTerm("term " + p.str() + " has zero visibility");
      Term t;
      t.weight = lambda / eta;
      for (int i = 0; i < n_; ++i)
        if (p[i] != PauliLetter::I) t.picks.emplace_back(i, axis_of(p[i]));
      terms_.push_back(std::move(t));
    }
  }

  double operator()(const OutcomeRecord& rec) const {
    if (rec.size() != n_) throw DimensionError("record has wrong qubit count");
    double acc = constant_;
    for (const auto& t : terms_) {
      int s = 1;
      for (const auto& [q, a] : t.picks) s *= rec.triples[static_cast<std::size_t>(q)][static_cast<std::size_t>(a)];
      acc += s * t.weight;
    }
    return acc;
  }

 private:
  struct Term {
    double weight = 0.0;
    std::vector<std::pair<int, int>> picks;
  };
  int n_;
  double constant_;
  std::vector<Term> terms_;
};

inline double estimate_hamiltonian(const Hamiltonian& h, const OutcomeRecord& rec, const Visibilities& v) {
  return HamiltonianEstimator(h, v)(rec);
}

/// Per-qubit probabilities (beta(X), beta(Y), beta(Z)) of the measured basis.
using BasisDistribution = std::vector<Vec3>;

inline BasisDistribution uniform_basis_distribution(int n) {
  return BasisDistribution(static_cast<std::size_t>(n), Vec3{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
}

/// Shot estimate of the locally biased shadow protocol for a measured
/// full-weight basis `sampled` with per-qubit outcomes `eigs`.
inline double lbcs_estimate(const Hamiltonian& h, const PauliString& sampled, const std::vector<int>& eigs,
                            const BasisDistribution& beta) {
  const int n = h.qubits();
  if (sampled.size() != n || static_cast<int>(eigs.size()) != n || static_cast<int>(beta.size()) != n)
    throw DimensionError("LBCS inputs differ in qubit count");
  for (int i = 0; i < n; ++i) {
    if (sampled[i] == PauliLetter::I) throw DomainError("sampled basis must not contain identity letters");
    if (beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis_of(sampled[i]))] <= 0.0)
      throw DomainError("sampled letter has zero probability on qubit " + std::to_string(i));
  }
  double acc = 0.0;
  for (const auto& [q, lambda] : h.terms()) {
    double g = 1.0;
    int zeta = 1;
    for (int i = 0; i < n && g != 0.0; ++i) {
      if (q[i] == PauliLetter::I) continue;
      if (q[i] != sampled[i]) {
        g = 0.0;
      } else {
        g /= beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis_of(q[i]))];
        zeta *= eigs[static_cast<std::size_t>(i)];
      }
    }
    acc += lambda * g * zeta;
  }
  return acc;
}

struct MomParams {
  std::size_t R = 1;
  std::size_t L = 1;
};

/// R = ceil(2 ln(2m/delta)), L = ceil(34 var_bound / epsilon^2), both at least 1.
inline MomParams mom_params_for(std::size_t m, double delta, double epsilon, double var_bound) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be positive");
  if (!(var_bound >= 0.0) || !std::isfinite(var_bound)) throw DomainError("variance bound must be non-negative");
  if (m == 0) throw DomainError("observable count must be positive");
  MomParams p;
  // Guard against 2*ln(.) landing a hair above an integer through rounding.
  const double r = 2.0 * std::log(2.0 * static_cast<double>(m) / delta);
  p.R = static_cast<std::size_t>(std::max(1.0, std::ceil(r - 1e-12)));
  const double l = 34.0 * var_bound / (epsilon * epsilon);
  p.L = static_cast<std::size_t>(std::max(1.0, std::ceil(l - 1e-12)));
  return p;
}

inline double median_of_means(std::span<const double> samples, MomParams params) {
  if (params.R == 0 || params.L == 0) throw DomainError("R and L must be positive");
  if (samples.size() < params.R * params.L)
    throw DomainError("median of means needs " + std::to_string(params.R * params.L) + " samples, got " +
                      std::to_string(samples.size()));
  std::vector<double> means(params.R);
  for (std::size_t g = 0; g < params.R; ++g) {
    double s = 0.0;
    for (std::size_t k = 0; k < params.L; ++k) s += samples[g * params.L + k];
    means[g] = s / static_cast<double>(params.L);
  }
  std::sort(means.begin(), means.end());
  const std::size_t mid = params.R / 2;
  return params.R % 2 == 1 ? means[mid] : 0.5 * (means[mid - 1] + means[mid]);
}

inline double sample_mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw DomainError("variance needs at least two samples");
  const double m = sample_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace jmest
