#pragma once

// Joint measurability on qubits: post-processing of parent POVMs, pairwise
// joint marginals, the shadow-compatibility bound, readout-noise
// diagonalization, and conic feasibility programs for noisy projective
// simulability, parent search and incompatibility robustness.
//
// Every 2x2 positivity constraint is written in Bloch form a*1 + b.sigma >= 0
// <=> a >= |b| and handed to the second-order-cone solver. Results are
// re-verified from the returned variables without trusting the solver.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jmest/conic.hpp"
#include "jmest/errors.hpp"
#include "jmest/linalg.hpp"
#include "jmest/model.hpp"
#include "jmest/pauli.hpp"
#include "jmest/simcore.hpp"

namespace jmest {

/// Effect a*1 + b.sigma.
struct QubitEffectBloch {
  double a = 0.0;
  Vec3 b{};

  static QubitEffectBloch of(const Matrix2c& m) {
    if (hermiticity_defect(m) > 1e-10) throw DomainError("effect is not Hermitian");
    auto [a, b] = bloch_of(m);
    return {a, b};
  }

  Matrix2c matrix() const { return bloch_matrix(a, b); }
  /// a - |b|: smallest eigenvalue.
  double psd_margin() const { return a - norm3(b); }
  bool psd(double tol = 1e-12) const { return psd_margin() >= -tol; }
  bool below_identity(double tol = 1e-12) const { return 1.0 - a - norm3(b) >= -tol; }
};

// ---------------------------------------------------------------------------
// Post-processing

/// Conditional probabilities D(s | lambda) for one target observable.
class PostProcessing {
 public:
  PostProcessing(std::vector<std::vector<double>> table, double tol = 1e-12) : t_(std::move(table)) {
    if (t_.empty()) throw DomainError("post-processing has no parent outcomes");
    const std::size_t k = t_.front().size();
    if (k == 0) throw DomainError("post-processing has no target outcomes");
    for (std::size_t l = 0; l < t_.size(); ++l) {
      if (t_[l].size() != k) throw DomainError("post-processing rows differ in length");
      double sum = 0.0;
      for (double p : t_[l]) {
        if (!(p >= -tol && p <= 1.0 + tol)) throw DomainError("post-processing entry outside [0, 1]");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-10) throw DomainError("post-processing row " + std::to_string(l) + " does not sum to 1");
    }
  }

  /// Deterministic relabeling: lambda -> map[lambda].
  static PostProcessing deterministic(const std::vector<std::size_t>& map, std::size_t outcomes) {
    std::vector<std::vector<double>> t(map.size(), std::vector<double>(outcomes, 0.0));
    for (std::size_t l = 0; l < map.size(); ++l) {
      if (map[l] >= outcomes) throw DomainError("relabeling targets a missing outcome");
      t[l][map[l]] = 1.0;
    }
    return PostProcessing(std::move(t));
  }

  std::size_t parent_outcomes() const { return t_.size(); }
  std::size_t outcomes() const { return t_.front().size(); }
  double operator()(std::size_t s, std::size_t lambda) const { return t_[lambda][s]; }

 private:
  std::vector<std::vector<double>> t_;
};

/// G(s_1, ..., s_m) = sum_lambda prod_j D_j(s_j | lambda) F(lambda), outcomes in
/// mixed radix with s_1 most significant.
inline Povm combine(const Povm& parent, const std::vector<PostProcessing>& posts) {
  if (posts.empty()) throw DomainError("no post-processings given");
  for (const auto& d : posts)
    if (d.parent_outcomes() != parent.size()) throw DomainError("post-processing does not match the parent outcome count");
  std::size_t total = 1;
  for (const auto& d : posts) total *= d.outcomes();
  const auto dim = parent.dim();
  Povm out;
  out.effects.assign(total, CMatrix::Zero(dim, dim));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::vector<std::size_t> s(posts.size());
    for (std::size_t j = posts.size(), r = idx; j-- > 0;) {
      s[j] = r % posts[j].outcomes();
      r /= posts[j].outcomes();
    }
    for (std::size_t l = 0; l < parent.size(); ++l) {
      double w = 1.0;
      for (std::size_t j = 0; j < posts.size() && w != 0.0; ++j) w *= posts[j](s[j], l);
      if (w != 0.0) out.effects[idx] += w * parent.effects[l];
    }
  }
  return out;
}

/// Four-outcome joint marginal of M_P and M_Q obtained from the parent by
/// the product post-processing. Outcome order (+,+), (+,-), (-,+), (-,-).
inline Povm two_observable_marginal(const PauliString& p, const PauliString& q, const Visibilities& v) {
  require_same_length(p, q);
  if (p.size() != v.size()) throw DimensionError("Pauli strings and visibilities differ in qubit count");
  if (p.is_identity() || q.is_identity()) throw DomainError("joint marginal needs non-identity strings");
  if (p.size() > kMaxDenseQubits) throw CapabilityError("dense joint marginal exceeds qubit cap");
  require_compatible(v);

  // mask 0: 1, 1: mu_P, 2: mu_Q, 3: mu_P mu_Q
  std::array<CMatrix, 4> parts;
  for (int mask = 0; mask < 4; ++mask) {
    CMatrix m = CMatrix::Ones(1, 1);
    for (int i = 0; i < p.size(); ++i) {
      const auto eff = parent_effects(v[i]);
      Matrix2c local = Matrix2c::Zero();
      for (int c = 0; c < 8; ++c) {
        const Triple t = triple_of_code(c);
        double w = 1.0;
        if ((mask & 1) && p[i] != PauliLetter::I) w *= t[static_cast<std::size_t>(axis_of(p[i]))];
        if ((mask & 2) && q[i] != PauliLetter::I) w *= t[static_cast<std::size_t>(axis_of(q[i]))];
        local += w * eff[static_cast<std::size_t>(c)];
      }
      m = kron(m, local);
    }
    parts[static_cast<std::size_t>(mask)] = std::move(m);
  }
  Povm out;
  for (int sp : {1, -1})
    for (int sq : {1, -1}) out.effects.push_back(0.25 * (parts[0] + sp * parts[1] + sq * parts[2] + (sp * sq) * parts[3]));
  return out;
}

// ---------------------------------------------------------------------------
// Shadow compatibility

/// Snapshots against which simulated effects must have nonnegative weight:
/// an explicit finite list, optionally the continuous family (d+1)|phi><phi| - 1
/// over all unit vectors of dimension d.
struct SnapshotEnsemble {
  std::vector<CMatrix> snapshots;
  std::optional<Eigen::Index> global_design_dim;

  static SnapshotEnsemble finite(std::vector<CMatrix> s) { return {std::move(s), std::nullopt}; }
  static SnapshotEnsemble global_design(Eigen::Index d) { return {{}, d}; }
  bool empty() const { return snapshots.empty() && !global_design_dim; }
};

/// Largest eta in [0, 1] with tr[M^eta(s) snap] >= 0 for every effect and snapshot,
/// M^eta = eta M + (1 - eta) tr[M]/d 1.
inline double shadow_compat_eta(const std::vector<Povm>& povms, const SnapshotEnsemble& ensemble) {
  if (ensemble.empty()) throw DomainError("empty snapshot ensemble");
  if (povms.empty()) throw DomainError("no POVMs given");
  double eta = 1.0;
  auto tighten = [&](double c, double value) {
    // c + eta (value - c) >= 0
    const double slope = value - c;
    if (slope < 0.0) eta = std::min(eta, c / -slope);
  };
  for (const auto& m : povms) {
    const auto d = m.dim();
    for (const auto& e : m.effects) {
      const double c = e.trace().real() / static_cast<double>(d);
      for (const auto& s : ensemble.snapshots) {
        if (s.rows() != d) throw DimensionError("snapshot and POVM differ in dimension");
        const Complex t = (e.transpose().cwiseProduct(s)).sum();
        tighten(c, t.real());
      }
      if (ensemble.global_design_dim) {
        if (*ensemble.global_design_dim != d) throw DimensionError("snapshot and POVM differ in dimension");
        // min over phi of (d+1) <phi|E|phi> - tr E
        tighten(c, static_cast<double>(d + 1) * min_eigenvalue(e) - e.trace().real());
      }
    }
  }
  return std::max(eta, 0.0);
}

// ---------------------------------------------------------------------------
// Readout noise

struct ReadoutDiagonalization {
  Matrix2c unitary;
  double alpha = 1.0;
  double beta = 1.0;
};

/// U effect0 U^dagger = alpha |0><0| + (1 - beta) |1><1| with alpha the larger eigenvalue.
inline ReadoutDiagonalization diagonalize_readout(const Matrix2c& effect0, double tol = 1e-12) {
  if (hermiticity_defect(effect0) > tol) throw DomainError("readout effect is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix2c> es(0.5 * (effect0 + effect0.adjoint()));
  const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[1];
  if (lo < -tol || hi > 1.0 + tol) throw DomainError("readout effect and its complement must be positive semidefinite");
  ReadoutDiagonalization r;
  r.alpha = std::min(hi, 1.0);
  r.beta = 1.0 - std::max(lo, 0.0);
  if (hi - lo <= tol) {
    r.unitary = Matrix2c::Identity();
    return r;
  }
  for (int row = 0; row < 2; ++row) {
    Eigen::Vector2cd v = es.eigenvectors().col(1 - row);
    // Fix the phase so the largest component is real and positive.
    const int k = std::abs(v[0]) >= std::abs(v[1]) ? 0 : 1;
    v *= std::conj(v[k]) / std::abs(v[k]);
    r.unitary.row(row) = v.adjoint();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Feasibility programs

enum class Feasibility { Feasible, Infeasible, Indeterminate };

inline const char* to_string(Feasibility f) {
  switch (f) {
    case Feasibility::Feasible: return "feasible";
    case Feasibility::Infeasible: return "infeasible";
    case Feasibility::Indeterminate: return "indeterminate";
  }
  return "unknown";
}

struct FeasibilityTolerances {
  /// Largest verified constraint violation accepted as feasible.
  double residual = 1e-7;
  /// Margin below which a converged solve certifies infeasibility.
  double margin = 1e-9;
};

/// One ordered pair (i, j) of the noisy decomposition: the two-outcome POVM
/// N(0) = a 1 + b.sigma, N(1) = p 1 - N(0), read out through noise and
/// reported as i (reading 0) or j (reading 1).
struct PairTerm {
  std::size_t i = 0, j = 0;
  QubitEffectBloch n0;
  double p = 0.0;
  StochasticMatrix2 noise;
};

struct NpsResult {
  Feasibility status = Feasibility::Indeterminate;
  /// Largest common slack of all positivity constraints found by the solver.
  double margin = 0.0;
  /// Largest verified violation (positivity and equalities) of the returned point.
  double residual = std::numeric_limits<double>::infinity();
  /// Solver duality gap at termination.
  double gap = std::numeric_limits<double>::infinity();
  conic::Status solver = conic::Status::NumericalFailure;
  int iterations = 0;
  std::vector<PairTerm> pairs;
  std::vector<double> trivial;
  /// Effects reproduced by the decomposition (after noise).
  std::vector<QubitEffectBloch> effects;
};

using PairNoise = std::function<StochasticMatrix2(std::size_t i, std::size_t j)>;

namespace detail {

using Affine = conic::Builder::Affine;
using BlochAffine = std::array<Affine, 4>;

inline void require_stochastic(const StochasticMatrix2& t) {
  if (!t.is_stochastic()) throw DomainError("readout matrix is not stochastic");
}

struct DecompositionVars {
  struct Pair {
    std::size_t i, j;
    conic::Index a;
    std::array<conic::Index, 3> b;
    conic::Index p;
    StochasticMatrix2 noise;
  };
  std::vector<Pair> pairs;
  std::vector<conic::Index> q;
  conic::Index margin = 0;
  std::vector<BlochAffine> effects;
};

/// Variables and cones of a k-outcome noisy projective decomposition with a
/// common margin variable (maximized). effects[s] is the affine expression of
/// the resulting effect s.
inline DecompositionVars add_noisy_decomposition(conic::Builder& b, std::size_t k, const PairNoise& noise) {
  DecompositionVars d;
  d.margin = b.add_variable(-1.0);
  d.effects.assign(k, BlochAffine{});
  Affine norm;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      DecompositionVars::Pair pr{i, j, b.add_variable(), {b.add_variable(), b.add_variable(), b.add_variable()}, b.add_variable(), noise(i, j)};
      require_stochastic(pr.noise);
      const double tau = pr.noise.strength();
      // (a - t, b) in Q and (p - a - t, -b) in Q
      std::vector<Affine> c0{Affine{}.add(pr.a, 1).add(d.margin, -1)};
      std::vector<Affine> c1{Affine{}.add(pr.p, 1).add(pr.a, -1).add(d.margin, -1)};
      for (int x = 0; x < 3; ++x) {
        c0.push_back(Affine{}.add(pr.b[x], 1));
        c1.push_back(Affine{}.add(pr.b[x], -1));
      }
      b.add_soc(c0);
      b.add_soc(c1);
      auto& ei = d.effects[i];
      auto& ej = d.effects[j];
      ei[0].add(pr.a, tau).add(pr.p, 1.0 - pr.noise.beta);
      ej[0].add(pr.p, pr.noise.beta).add(pr.a, -tau);
      for (int x = 0; x < 3; ++x) {
        ei[1 + x].add(pr.b[x], tau);
        ej[1 + x].add(pr.b[x], -tau);
      }
      norm.add(pr.p, 1.0);
      d.pairs.push_back(pr);
    }
  for (std::size_t s = 0; s < k; ++s) {
    const auto q = b.add_variable();
    d.q.push_back(q);
    b.add_nonnegative(Affine{}.add(q, 1).add(d.margin, -1));
    d.effects[s][0].add(q, 1.0);
    norm.add(q, 1.0);
  }
  norm.offset(-1.0);
  b.add_equality(norm);
  return d;
}

inline void add_bloch_equality(conic::Builder& b, const BlochAffine& expr, const QubitEffectBloch& target) {
  for (int c = 0; c < 4; ++c) {
    Affine e = expr[static_cast<std::size_t>(c)];
    e.offset(-(c == 0 ? target.a : target.b[static_cast<std::size_t>(c - 1)]));
    b.add_equality(e);
  }
}

inline QubitEffectBloch evaluate(const BlochAffine& expr, const conic::VectorXd& x) {
  return {conic::Builder::evaluate(expr[0], x),
          {conic::Builder::evaluate(expr[1], x), conic::Builder::evaluate(expr[2], x), conic::Builder::evaluate(expr[3], x)}};
}

inline double bloch_distance(const QubitEffectBloch& u, const QubitEffectBloch& v) {
  double d = std::abs(u.a - v.a);
  for (std::size_t c = 0; c < 3; ++c) d = std::max(d, std::abs(u.b[c] - v.b[c]));
  return d;
}

/// True when b lies in the range of A up to tol (relative).
inline bool equalities_consistent(const conic::Problem& p, double tol = 1e-9) {
  if (p.A.rows() == 0) return true;
  const conic::MatrixXd a(p.A);
  Eigen::CompleteOrthogonalDecomposition<conic::MatrixXd> cod(a);
  const conic::VectorXd x = cod.solve(p.b);
  return (a * x - p.b).norm() <= tol * std::max(1.0, p.b.norm());
}

/// Recomputes the decomposition from solver variables and its largest violation.
inline double read_decomposition(const DecompositionVars& d, const conic::VectorXd& x, NpsResult& r) {
  double worst = 0.0;
  double norm = 0.0;
  r.pairs.clear();
  r.trivial.clear();
  r.effects.assign(d.effects.size(), QubitEffectBloch{});
  for (const auto& pr : d.pairs) {
    PairTerm t{pr.i, pr.j, {x[pr.a], {x[pr.b[0]], x[pr.b[1]], x[pr.b[2]]}}, x[pr.p], pr.noise};
    worst = std::max(worst, -t.n0.psd_margin());
    worst = std::max(worst, -(t.p - t.n0.a - norm3(t.n0.b)));
    const double tau = pr.noise.strength();
    auto& ei = r.effects[pr.i];
    auto& ej = r.effects[pr.j];
    ei.a += tau * t.n0.a + (1.0 - pr.noise.beta) * t.p;
    ej.a += pr.noise.beta * t.p - tau * t.n0.a;
    for (std::size_t c = 0; c < 3; ++c) {
      ei.b[c] += tau * t.n0.b[c];
      ej.b[c] -= tau * t.n0.b[c];
    }
    norm += t.p;
    r.pairs.push_back(t);
  }
  for (std::size_t s = 0; s < d.q.size(); ++s) {
    const double q = x[d.q[s]];
    worst = std::max(worst, -q);
    r.effects[s].a += q;
    r.trivial.push_back(q);
    norm += q;
  }
  return std::max(worst, std::abs(norm - 1.0));
}

/// Solves a max-margin program and classifies it. verify(x) returns the
/// largest independently recomputed violation at x.
template <class Verify>
NpsResult solve_margin_program(const conic::Builder& b, conic::Index margin, Verify&& verify, const FeasibilityTolerances& tol) {
  NpsResult r;
  const auto prob = b.build();
  if (!equalities_consistent(prob)) {
    r.status = Feasibility::Infeasible;
    r.margin = -std::numeric_limits<double>::infinity();
    return r;
  }
  const auto sol = conic::solve(prob);
  r.solver = sol.status;
  r.iterations = sol.iterations;
  r.gap = sol.gap;
  if (sol.x.size() != prob.c.size() || !sol.x.allFinite()) return r;
  r.margin = sol.x[margin];
  r.residual = verify(sol.x);
  // Any z in K bounds the optimum: -c'x* <= -dual_objective + |A'y + G'z + c| |x*|.
  // All variables here are bounded, so 1 + 2|x| stands in for |x*|.
  const double dual_abs = sol.dual_residual * std::max(1.0, prob.c.norm());
  const double upper = -sol.dual_objective + dual_abs * (1.0 + 2.0 * sol.x.norm());
  if (std::isfinite(upper) && upper < -tol.margin) r.status = Feasibility::Infeasible;
  else if (r.margin >= -tol.margin && r.residual <= tol.residual) r.status = Feasibility::Feasible;
  return r;
}

/// Outcome-code triples for the eight-outcome parent.
inline const std::array<Triple, 8>& triples() {
  static const std::array<Triple, 8> t = [] {
    std::array<Triple, 8> out;
    for (int c = 0; c < 8; ++c) out[static_cast<std::size_t>(c)] = triple_of_code(c);
    return out;
  }();
  return t;
}

/// Bloch form of the parent effect 1/8 (1 + x v_x X + y v_y Y + z v_z Z), any |v|.
inline QubitEffectBloch closed_form_parent(const Triple& t, const Vec3& v) {
  return {0.125, {0.125 * t[0] * v[0], 0.125 * t[1] * v[1], 0.125 * t[2] * v[2]}};
}

}  // namespace detail

/// Decides whether a qubit POVM is reproduced by noisy projective measurements
/// on ordered outcome pairs plus trivial terms q_s 1.
inline NpsResult noisy_projective_simulable(const std::vector<QubitEffectBloch>& m, const PairNoise& noise,
                                            const FeasibilityTolerances& tol = {}) {
  if (m.empty()) throw DomainError("POVM has no effects");
  double tr = 0.0;
  Vec3 bsum{};
  for (const auto& e : m) {
    tr += e.a;
    for (std::size_t c = 0; c < 3; ++c) bsum[c] += e.b[c];
  }
  if (std::abs(tr - 1.0) > 1e-9 || norm3(bsum) > 1e-9) throw DomainError("effects do not sum to the identity");
  if (m.size() == 1) {
    NpsResult r;
    r.status = Feasibility::Feasible;
    r.margin = 1.0;
    r.residual = 0.0;
    r.gap = 0.0;
    r.solver = conic::Status::Optimal;
    r.trivial = {1.0};
    r.effects = m;
    return r;
  }
  conic::Builder b;
  auto vars = detail::add_noisy_decomposition(b, m.size(), noise);
  for (std::size_t s = 0; s < m.size(); ++s) detail::add_bloch_equality(b, vars.effects[s], m[s]);
  NpsResult r;
  auto verify = [&](const conic::VectorXd& x) {
    double worst = detail::read_decomposition(vars, x, r);
    for (std::size_t s = 0; s < m.size(); ++s) worst = std::max(worst, detail::bloch_distance(r.effects[s], m[s]));
    return worst;
  };
  auto res = detail::solve_margin_program(b, vars.margin, verify, tol);
  res.pairs = std::move(r.pairs);
  res.trivial = std::move(r.trivial);
  res.effects = std::move(r.effects);
  return res;
}

inline NpsResult noisy_projective_simulable(const Povm& m, const StochasticMatrix2& noise, const FeasibilityTolerances& tol = {}) {
  if (m.dim() != 2) throw CapabilityError("noisy projective simulability is implemented for qubits only");
  if (!m.valid(1e-9)) throw DomainError("input is not a valid POVM");
  std::vector<QubitEffectBloch> e;
  for (const auto& x : m.effects) e.push_back(QubitEffectBloch::of(x));
  return noisy_projective_simulable(e, [noise](std::size_t, std::size_t) { return noise; }, tol);
}

// ---------------------------------------------------------------------------
// Parent search

struct SdpResult {
  double eta_star = 0.0;
  /// Eight-outcome parent in triple-code order (x = 4, y = 2, z = 1 bits, set = -1).
  Povm parent;
  bool feasible = false;
  /// Largest verified violation at eta_star.
  double gap = std::numeric_limits<double>::infinity();
  double margin = 0.0;
  /// Largest deviation of the parent from 1/8 (1 + x eta X + y eta Y + z eta Z).
  double structure_deviation = std::numeric_limits<double>::infinity();
  int bisection_steps = 0;
  /// Solves that were neither certified feasible nor infeasible (treated as infeasible).
  int indeterminate = 0;
  Feasibility status = Feasibility::Indeterminate;
};

struct JmFeasibility {
  NpsResult program;
  std::vector<QubitEffectBloch> parent;
  double structure_deviation = std::numeric_limits<double>::infinity();
};

/// Looks for an eight-outcome noisy projective simulable parent whose
/// marginals are the unsharp Paulis with visibilities eta.
inline JmFeasibility jm_feasibility(const Vec3& eta, const StochasticMatrix2& noise, const FeasibilityTolerances& tol = {}) {
  detail::require_stochastic(noise);
  conic::Builder b;
  auto vars = detail::add_noisy_decomposition(b, 8, [noise](std::size_t, std::size_t) { return noise; });
  const auto& tri = detail::triples();
  for (std::size_t axis = 0; axis < 3; ++axis)
    for (int sign : {1, -1}) {
      detail::BlochAffine sum;
      for (std::size_t c = 0; c < 8; ++c)
        if (tri[c][axis] == sign)
          for (std::size_t k = 0; k < 4; ++k)
            for (const auto& term : vars.effects[c][k].terms) sum[k].add(term.first, term.second);
      QubitEffectBloch target{0.5, {}};
      target.b[axis] = 0.5 * sign * eta[axis];
      detail::add_bloch_equality(b, sum, target);
    }
  NpsResult r;
  auto verify = [&](const conic::VectorXd& x) {
    double worst = detail::read_decomposition(vars, x, r);
    for (std::size_t axis = 0; axis < 3; ++axis)
      for (int sign : {1, -1}) {
        QubitEffectBloch sum;
        for (std::size_t c = 0; c < 8; ++c)
          if (tri[c][axis] == sign) {
            sum.a += r.effects[c].a;
            for (std::size_t k = 0; k < 3; ++k) sum.b[k] += r.effects[c].b[k];
          }
        QubitEffectBloch target{0.5, {}};
        target.b[axis] = 0.5 * sign * eta[axis];
        worst = std::max(worst, detail::bloch_distance(sum, target));
      }
    return worst;
  };
  JmFeasibility out;
  out.program = detail::solve_margin_program(b, vars.margin, verify, tol);
  out.program.pairs = std::move(r.pairs);
  out.program.trivial = std::move(r.trivial);
  out.program.effects = std::move(r.effects);
  out.parent = out.program.effects;
  if (out.parent.size() == 8) {
    double dev = 0.0;
    for (std::size_t c = 0; c < 8; ++c)
      dev = std::max(dev, detail::bloch_distance(out.parent[c], detail::closed_form_parent(tri[c], eta)));
    out.structure_deviation = dev;
  }
  return out;
}

namespace detail {

struct BisectionResult {
  double lo = 0.0, hi = 1.0;
  int steps = 0;
  int indeterminate = 0;
};

/// Largest x in [lo, hi] with feasible(x), assuming lo feasible and an interval feasible set.
template <class F>
BisectionResult bisect(F&& feasible, double lo, double hi, double tol) {
  BisectionResult r{lo, hi, 0, 0};
  while (r.hi - r.lo > tol) {
    const double mid = 0.5 * (r.lo + r.hi);
    const Feasibility f = feasible(mid);
    if (f == Feasibility::Indeterminate) ++r.indeterminate;
    (f == Feasibility::Feasible ? r.lo : r.hi) = mid;
    ++r.steps;
  }
  return r;
}

inline constexpr double kBisectionTolerance = 1e-6;

}  // namespace detail

/// Largest uniform eta admitting a noisy projective simulable parent, by bisection.
inline SdpResult jm_sdp(const StochasticMatrix2& noise, double tolerance = detail::kBisectionTolerance) {
  detail::require_stochastic(noise);
  SdpResult res;
  auto check = [&](double eta) { return jm_feasibility({eta, eta, eta}, noise).program.status; };
  auto b = detail::bisect(check, 0.0, 1.0, tolerance);
  res.bisection_steps = b.steps;
  res.indeterminate = b.indeterminate;
  res.eta_star = b.lo;
  const auto fin = jm_feasibility({b.lo, b.lo, b.lo}, noise);
  res.status = fin.program.status;
  res.feasible = fin.program.status == Feasibility::Feasible;
  res.gap = fin.program.residual;
  res.margin = fin.program.margin;
  res.structure_deviation = fin.structure_deviation;
  for (const auto& e : fin.parent) res.parent.effects.push_back(CMatrix(e.matrix()));
  return res;
}

inline SdpResult jm_sdp(const ReadoutNoise& noise) {
  if (noise.size() != 1) throw DimensionError("jm_sdp takes the noise of a single qubit");
  return jm_sdp(noise[0]);
}

/// Text report: eta*, status, residuals and per-effect Bloch vectors.
inline std::string to_report(const SdpResult& r, const std::string& prefix = "") {
  std::ostringstream os;
  os.precision(9);
  os << prefix << "eta_star=" << r.eta_star << '\n'
     << prefix << "status=" << to_string(r.status) << '\n'
     << prefix << "feasible=" << (r.feasible ? "true" : "false") << '\n'
     << prefix << "residual=" << r.gap << '\n'
     << prefix << "margin=" << r.margin << '\n'
     << prefix << "structure_deviation=" << r.structure_deviation << '\n'
     << prefix << "bisection_steps=" << r.bisection_steps << '\n'
     << prefix << "indeterminate_solves=" << r.indeterminate << '\n';
  for (std::size_t c = 0; c < r.parent.size(); ++c) {
    const auto e = QubitEffectBloch::of(Matrix2c(r.parent.effects[c]));
    const auto t = triple_of_code(static_cast<int>(c));
    os << prefix << "effect[" << (t[0] > 0 ? '+' : '-') << (t[1] > 0 ? '+' : '-') << (t[2] > 0 ? '+' : '-') << "]=" << e.a << ' '
       << e.b[0] << ' ' << e.b[1] << ' ' << e.b[2] << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Rescaling

struct RescaleResult {
  /// Smallest per-qubit factor.
  double r_star = 1.0;
  std::vector<double> per_qubit;
  /// Each qubit's visibilities multiplied by its own factor.
  Visibilities rescaled;
  std::vector<Feasibility> status;
  int indeterminate = 0;
};

namespace detail {

inline Feasibility parent_feasible(const Vec3& v, const StochasticMatrix2& noise) {
  if (norm3(v) > 1.0 + 1e-12) return Feasibility::Infeasible;
  std::vector<QubitEffectBloch> m;
  for (const auto& t : triples()) m.push_back(closed_form_parent(t, v));
  return noisy_projective_simulable(m, [noise](std::size_t, std::size_t) { return noise; }).status;
}

inline Vec3 scaled(const Vec3& v, double r) { return {r * v[0], r * v[1], r * v[2]}; }

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Per-qubit largest r in [0, 1] such that the parent with visibilities r v_i
/// is noisy projective simulable under that qubit's readout noise.
inline RescaleResult rescale_to_feasible(const Visibilities& v, const ReadoutNoise& noise, int threads = 1,
                                         double tolerance = detail::kBisectionTolerance) {
  if (v.size() != noise.size()) throw DimensionError("visibilities and noise differ in qubit count");
  const auto n = static_cast<std::size_t>(v.size());
  RescaleResult out;
  out.per_qubit.assign(n, 1.0);
  out.status.assign(n, Feasibility::Feasible);
  std::vector<int> indet(n, 0);
  detail::parallel_for(n, threads, [&](std::size_t i) {
    const Vec3 vi = v[static_cast<int>(i)];
    const auto& t = noise[static_cast<int>(i)];
    const double len = norm3(vi);
    if (len == 0.0) return;
    const auto at_one = detail::parent_feasible(vi, t);
    if (at_one == Feasibility::Feasible) return;
    if (at_one == Feasibility::Indeterminate) ++indet[i];
    auto b = detail::bisect([&](double r) { return detail::parent_feasible(detail::scaled(vi, r), t); }, 0.0, std::min(1.0, 1.0 / len),
                            tolerance);
    indet[i] += b.indeterminate;
    out.per_qubit[i] = b.lo;
    out.status[i] = b.lo > 0.0 ? detail::parent_feasible(detail::scaled(vi, b.lo), t) : Feasibility::Feasible;
  });
  std::vector<Vec3> r;
  for (std::size_t i = 0; i < n; ++i) {
    r.push_back(detail::scaled(v[static_cast<int>(i)], out.per_qubit[i]));
    out.indeterminate += indet[i];
  }
  out.rescaled = Visibilities(r);
  out.r_star = n ? *std::min_element(out.per_qubit.begin(), out.per_qubit.end()) : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Incompatibility robustness

struct RobustnessResult {
  double eta_star = 0.0;
  int bisection_steps = 0;
  int indeterminate = 0;
};

namespace detail {

/// Joint measurability of depolarized qubit observables at visibility eta.
inline NpsResult jointly_measurable(const std::vector<std::vector<QubitEffectBloch>>& obs, double eta, const FeasibilityTolerances& tol = {}) {
  std::size_t total = 1;
  for (const auto& o : obs) total *= o.size();
  conic::Builder b;
  const auto margin = b.add_variable(-1.0);
  std::vector<std::array<conic::Index, 4>> g(total);
  for (auto& e : g) {
    for (auto& v : e) v = b.add_variable();
    std::vector<Affine> cone{Affine{}.add(e[0], 1).add(margin, -1)};
    for (int c = 1; c < 4; ++c) cone.push_back(Affine{}.add(e[static_cast<std::size_t>(c)], 1));
    b.add_soc(cone);
  }
  auto outcome = [&](std::size_t lambda, std::size_t j) {
    for (std::size_t k = obs.size(); k-- > j + 1;) lambda /= obs[k].size();
    return lambda % obs[j].size();
  };
  auto target = [&](std::size_t j, std::size_t s) {
    const auto& e = obs[j][s];
    return QubitEffectBloch{e.a, {eta * e.b[0], eta * e.b[1], eta * e.b[2]}};
  };
  for (std::size_t j = 0; j < obs.size(); ++j)
    for (std::size_t s = 0; s < obs[j].size(); ++s) {
      BlochAffine sum;
      for (std::size_t l = 0; l < total; ++l)
        if (outcome(l, j) == s)
          for (std::size_t c = 0; c < 4; ++c) sum[c].add(g[l][c], 1.0);
      add_bloch_equality(b, sum, target(j, s));
    }
  auto verify = [&](const conic::VectorXd& x) {
    double worst = 0.0;
    std::vector<QubitEffectBloch> ge(total);
    for (std::size_t l = 0; l < total; ++l) {
      ge[l] = {x[g[l][0]], {x[g[l][1]], x[g[l][2]], x[g[l][3]]}};
      worst = std::max(worst, -ge[l].psd_margin());
    }
    for (std::size_t j = 0; j < obs.size(); ++j)
      for (std::size_t s = 0; s < obs[j].size(); ++s) {
        QubitEffectBloch sum;
        for (std::size_t l = 0; l < total; ++l)
          if (outcome(l, j) == s) {
            sum.a += ge[l].a;
            for (std::size_t c = 0; c < 3; ++c) sum.b[c] += ge[l].b[c];
          }
        worst = std::max(worst, bloch_distance(sum, target(j, s)));
      }
    return worst;
  };
  return solve_margin_program(b, margin, verify, tol);
}

}  // namespace detail

/// Largest eta with {eta M_j + (1 - eta) tr[M_j]/2 1} jointly measurable (qubits only).
inline RobustnessResult robustness(const std::vector<Povm>& observables, double tolerance = detail::kBisectionTolerance) {
  if (observables.empty()) throw DomainError("no observables given");
  std::vector<std::vector<QubitEffectBloch>> obs;
  std::size_t total = 1;
  for (const auto& m : observables) {
    if (m.dim() != 2) throw CapabilityError("robustness is implemented for qubit observables only");
    if (!m.valid(1e-9)) throw DomainError("input is not a valid POVM");
    std::vector<QubitEffectBloch> e;
    for (const auto& x : m.effects) e.push_back(QubitEffectBloch::of(x));
    obs.push_back(std::move(e));
    total *= m.size();
    if (total > 4096) throw CapabilityError("product outcome space too large");
  }
  RobustnessResult r;
  const auto at_one = detail::jointly_measurable(obs, 1.0).status;
  if (at_one == Feasibility::Feasible) {
    r.eta_star = 1.0;
    return r;
  }
  if (at_one == Feasibility::Indeterminate) ++r.indeterminate;
  auto b = detail::bisect([&](double eta) { return detail::jointly_measurable(obs, eta).status; }, 0.0, 1.0, tolerance);
  r.eta_star = b.lo;
  r.bisection_steps = b.steps;
  r.indeterminate += b.indeterminate;
  return r;
}

/// Sharp two-outcome Pauli observable on one qubit.
inline Povm sharp_pauli(PauliLetter l) {
  const Matrix2c p = letter_matrix(l);
  return Povm{{CMatrix(0.5 * (Matrix2c::Identity() + p)), CMatrix(0.5 * (Matrix2c::Identity() - p))}};
}

}  // namespace jmest
