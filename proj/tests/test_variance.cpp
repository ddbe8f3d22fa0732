#include <gtest/gtest.h>

#include <random>

#include "jmest/variance.hpp"
#include "oracles.hpp"

using namespace jmest;

namespace {

Hamiltonian make(int n, std::initializer_list<std::pair<const char*, double>> terms) {
  Hamiltonian h(n);
  for (const auto& [w, c] : terms) h.add(w, c);
  return h;
}

// Exhaustive LBCS variance by enumerating 3^n bases and 2^n outcomes.
double lbcs_exhaustive_variance(const Hamiltonian& h, const BasisDistribution& beta, const CMatrix& rho) {
  const int n = h.qubits();
  int bases = 1;
  for (int i = 0; i < n; ++i) bases *= 3;
  double m1 = 0.0, m2 = 0.0;
  for (int b = 0; b < bases; ++b) {
    std::string word;
    double pb = 1.0;
    for (int i = 0, k = b; i < n; ++i, k /= 3) {
      word.push_back("XYZ"[k % 3]);
      pb *= beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(k % 3)];
    }
    for (int o = 0; o < (1 << n); ++o) {
      std::vector<int> eigs;
      CMatrix proj = CMatrix::Identity(1, 1);
      for (int i = 0; i < n; ++i) {
        const int s = (o >> (n - 1 - i)) & 1 ? -1 : 1;
        eigs.push_back(s);
        proj = oracle::dense_kron(proj, 0.5 * (oracle::letter('I') + s * oracle::letter(word[static_cast<std::size_t>(i)])));
      }
      const double p = pb * oracle::trace_real(proj, rho);
      const double e = lbcs_estimate(h, PauliString::parse(word), eigs, beta);
      m1 += p * e;
      m2 += p * e * e;
    }
  }
  return m2 - m1 * m1;
}

BasisDistribution random_beta(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  BasisDistribution beta;
  for (int i = 0; i < n; ++i) {
    Vec3 b{u(gen), u(gen), u(gen)};
    const double s = b[0] + b[1] + b[2];
    for (double& x : b) x /= s;
    beta.push_back(b);
  }
  return beta;
}

}  // namespace

TEST(JmVariance, Examples) {
  EXPECT_NEAR(jm_variance(make(1, {{"Z", 1.0}}), Visibilities::unbiased(1), QuantumState::zero(1)), 2.0, 1e-12);
  EXPECT_NEAR(jm_variance(make(2, {{"XI", 1.0}, {"XX", 1.0}}), Visibilities::unbiased(2), QuantumState::zero(2)), 12.0, 1e-12);
  // Identity term shifts the estimator without changing its variance.
  EXPECT_NEAR(jm_variance(make(1, {{"Z", 1.0}, {"I", 4.0}}), Visibilities::unbiased(1), QuantumState::zero(1)), 2.0, 1e-12);
  EXPECT_THROW(jm_variance(make(1, {{"X", 1.0}}), Visibilities({Vec3{0, 0.5, 0.5}}), QuantumState::zero(1)), UnestimableTerm);
}

TEST(JmVariance, MatchesExhaustiveOracle) {
  std::mt19937_64 gen(100);
  for (int n = 1; n <= 3; ++n)
    for (int trial = 0; trial < 8; ++trial) {
      auto h = oracle::random_hamiltonian(n, 10, gen);
      auto v = oracle::random_visibilities(n, gen);
      auto rho = oracle::random_state(n, gen);
      auto m = oracle::exhaustive_moments(h, rho.matrix(), v);
      const double scale = std::max(1.0, m.variance);
      ASSERT_NEAR(jm_variance(h, v, rho), m.variance, 1e-10 * scale);
    }
}

TEST(LbcsVariance, Examples) {
  auto z = make(1, {{"Z", 1.0}});
  EXPECT_NEAR(lbcs_variance(z, {Vec3{0, 0, 1}}, QuantumState::zero(1)), 0.0, 1e-14);
  EXPECT_NEAR(lbcs_variance(z, uniform_basis_distribution(1), QuantumState::zero(1)), 2.0, 1e-12);
  EXPECT_THROW(lbcs_variance(z, {Vec3{0.5, 0.5, 0}}, QuantumState::zero(1)), DomainError);
}

TEST(LbcsVariance, MatchesExhaustiveOracle) {
  std::mt19937_64 gen(101);
  for (int n = 1; n <= 2; ++n)
    for (int trial = 0; trial < 6; ++trial) {
      auto h = oracle::random_hamiltonian(n, 8, gen);
      auto beta = random_beta(n, gen);
      auto rho = oracle::random_state(n, gen);
      ASSERT_NEAR(lbcs_variance(h, beta, rho), lbcs_exhaustive_variance(h, beta, rho.matrix()), 1e-10);
    }
}

TEST(LbcsVariance, EquivalentToJointMeasurement) {
  std::mt19937_64 gen(102);
  for (int trial = 0; trial < 20; ++trial) {
    auto h = oracle::random_hamiltonian(3, 20, gen);
    auto v = oracle::random_visibilities(3, gen);
    auto rho = oracle::random_state(3, gen);
    ASSERT_NEAR(jm_variance(h, v, rho), lbcs_variance(h, basis_distribution_of(v), rho), 1e-10);
  }
}

TEST(LbcsVariance, GIdentity) {
  std::mt19937_64 gen(103);
  auto v = oracle::random_visibilities(2, gen);
  auto beta = basis_distribution_of(v);
  const std::string letters = "IXYZ";
  for (char a1 : letters)
    for (char a2 : letters)
      for (char b1 : letters)
        for (char b2 : letters) {
          auto p = PauliString::parse(std::string{a1, a2}), q = PauliString::parse(std::string{b1, b2});
          if (p.is_identity() || q.is_identity()) continue;
          const double expected = eta_pq(p, q, v) * f_factor(p, q) / (eta_of(p, v) * eta_of(q, v));
          ASSERT_NEAR(lbcs_g(p, q, beta), expected, 1e-12) << p.str() << " " << q.str();
        }
}

TEST(Kappa, Properties) {
  std::mt19937_64 gen(104);
  auto h = oracle::random_hamiltonian(3, 12, gen);
  auto v = oracle::random_visibilities(3, gen);
  auto k = kappa(h, v);
  for (const auto& [p, lp] : h.pauli_terms()) {
    EXPECT_NEAR(k.at(p, p), lp * lp / (eta_of(p, v) * eta_of(p, v)), 1e-12);
    for (const auto& [q, lq] : h.pauli_terms()) {
      EXPECT_DOUBLE_EQ(k.at(p, q), k.at(q, p));
      EXPECT_EQ(k.contains(p, q), f_factor(p, q) == 1);
    }
  }
  EXPECT_NEAR(k.diagonal_sum(), cost_diag(h, v), 1e-12);
}

TEST(JmNorm, Examples) {
  EXPECT_NEAR(jm_norm_sq(make(1, {{"Z", 1.0}}), Visibilities::unbiased(1)), 3.0, 1e-12);
  for (const auto* w : {"XII", "XZI", "YXZ"}) {
    Hamiltonian h(3);
    h.add(w, -0.7);
    const int weight = PauliString::parse(w).weight();
    EXPECT_NEAR(jm_norm_sq(h, Visibilities::unbiased(3)), std::pow(3.0, weight) * 0.49, 1e-8) << w;
  }
}

TEST(JmNorm, BoundsSecondMoment) {
  std::mt19937_64 gen(105);
  for (int trial = 0; trial < 10; ++trial) {
    auto h = oracle::random_hamiltonian(3, 12, gen);
    auto v = oracle::random_visibilities(3, gen);
    const double norm = jm_norm_sq(h, v);
    for (int s = 0; s < 5; ++s) {
      auto rho = oracle::random_state(3, gen);
      const double m1 = traceless_expectation(h, rho);
      const double var = jm_variance(h, v, rho);
      const double bound = state_free_bound(h, v, rho);
      ASSERT_GE(var, -1e-9);
      ASSERT_LE(var, bound + 1e-9);
      ASSERT_NEAR(bound, var + m1 * m1, 1e-9);
      ASSERT_LE(bound, norm + 1e-9);
    }
  }
}

TEST(JmNorm, OperatorIsHermitian) {
  std::mt19937_64 gen(106);
  auto h = oracle::random_hamiltonian(3, 15, gen);
  auto v = oracle::random_visibilities(3, gen);
  CMatrix t = pair_operator(h, detail::jm_letter_weight(v)).dense();
  EXPECT_LT(hermiticity_defect(t), 1e-12 * std::max(1.0, t.cwiseAbs().maxCoeff()));
  Eigen::ComplexEigenSolver<CMatrix> es(t);
  EXPECT_LT(es.eigenvalues().imag().cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, t.cwiseAbs().maxCoeff()));
  // Matches the oracle sum of kappa P Q.
  CMatrix expected = CMatrix::Zero(8, 8);
  auto k = kappa(h, v);
  for (const auto& e : k.entries())
    expected += e.value * oracle::pauli(k.terms()[e.i].str()) * oracle::pauli(k.terms()[e.j].str());
  EXPECT_LT((t - expected).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
}

TEST(JmNorm, LanczosAgreesWithDense) {
  std::mt19937_64 gen(107);
  for (int trial = 0; trial < 3; ++trial) {
    auto h = oracle::random_hamiltonian(6, 30, gen);
    auto op = pair_operator(h, detail::jm_letter_weight(Visibilities::unbiased(6)));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(op.dense(), Eigen::EigenvaluesOnly);
    const double dense = es.eigenvalues().maxCoeff();
    EXPECT_NEAR(detail::lanczos_max_eigenvalue(op), dense, 1e-8 * std::max(1.0, std::abs(dense)));
  }
}

TEST(JmNorm, MatrixFreeAboveDenseCap) {
  // Sum of Z_i on 11 qubits: kappa gives 3 on the diagonal and 1 on Z_i Z_j.
  const int n = 11;
  Hamiltonian h(n);
  for (int i = 0; i < n; ++i) h.add(PauliString::single(n, i, PauliLetter::Z), 1.0);
  EXPECT_NEAR(jm_norm_sq(h, Visibilities::unbiased(n)), 3.0 * n + n * (n - 1), 1e-7);
}

TEST(CostDiag, Examples) {
  EXPECT_NEAR(cost_diag(make(1, {{"Z", 1.0}}), Visibilities::unbiased(1)), 3.0, 1e-12);
  // Off-diagonal structure is irrelevant.
  auto a = make(2, {{"ZI", 1.0}, {"IZ", 1.0}});
  auto b = make(2, {{"ZI", 1.0}, {"IX", 1.0}});
  EXPECT_NEAR(cost_diag(a, Visibilities::unbiased(2)), cost_diag(b, Visibilities::unbiased(2)), 1e-12);
  // Monotone in each visibility.
  std::mt19937_64 gen(108);
  auto h = oracle::random_hamiltonian(2, 8, gen);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = oracle::random_visibilities(2, gen);
    auto raw = v.per_qubit();
    std::uniform_int_distribution<int> q(0, 1), ax(0, 2);
    raw[static_cast<std::size_t>(q(gen))][static_cast<std::size_t>(ax(gen))] *= 1.1;
    ASSERT_LE(cost_diag(h, Visibilities(raw)), cost_diag(h, v) + 1e-12);
  }
}

TEST(NoisyShadowFactor, Examples) {
  EXPECT_NEAR(noisy_shadow_factor(ReadoutNoise::identity(1), 0), std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(noisy_shadow_factor(ReadoutNoise::symmetric(1, 0.95), 0), std::sqrt(3.0) / 0.9, 1e-14);
  EXPECT_NEAR(noisy_shadow_factor(ReadoutNoise::symmetric(1, 0.95), 0), 1.9245008972987527, 1e-12);
  EXPECT_THROW(noisy_shadow_factor(ReadoutNoise::symmetric(1, 0.5), 0), DomainError);
}

TEST(NoisyShadowNorm, IdentityNoiseEqualsUnbiasedJm) {
  std::mt19937_64 gen(109);
  for (int trial = 0; trial < 5; ++trial) {
    auto h = oracle::random_hamiltonian(4, 15, gen);
    EXPECT_NEAR(noisy_cs_norm_sq(h, ReadoutNoise::identity(4)), jm_norm_sq(h, Visibilities::unbiased(4)), 1e-9);
  }
}

TEST(VarianceReportType, Fields) {
  auto r = variance_report(make(1, {{"Z", 1.0}}), Visibilities::unbiased(1), QuantumState::zero(1));
  EXPECT_NEAR(*r.exact_variance, 2.0, 1e-12);
  EXPECT_NEAR(*r.state_free_bound, 3.0, 1e-12);
  EXPECT_NEAR(r.jm_norm_sq, 3.0, 1e-12);
  auto s = variance_report(make(1, {{"Z", 1.0}}), Visibilities::unbiased(1), std::nullopt);
  EXPECT_FALSE(s.exact_variance.has_value());
}
