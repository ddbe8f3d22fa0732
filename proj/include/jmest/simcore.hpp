#pragma once

// Dense density-matrix simulation of the per-qubit parent measurement
//   G(x, y, z) = 1/8 (1 + x eta^x X + y eta^y Y + z eta^z Z)
// and its n-qubit tensor product: exact outcome tables, unsharp Pauli
// effects, and seeded shot sampling.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "jmest/errors.hpp"
#include "jmest/linalg.hpp"
#include "jmest/model.hpp"
#include "jmest/pauli.hpp"

namespace jmest {

/// A density matrix on n qubits.
class QuantumState {
 public:
  static constexpr double kHermitianTol = 1e-12;
  static constexpr double kTraceTol = 1e-12;
  static constexpr double kEigenTol = 1e-10;

  QuantumState() = default;

  explicit QuantumState(CMatrix rho) : rho_(std::move(rho)) {
    if (rho_.rows() != rho_.cols()) throw DimensionError("density matrix must be square");
    n_ = qubits_of_dim(rho_.rows());
    if (n_ < 1) throw DimensionError("state must have at least one qubit");
    if (n_ > kMaxDenseQubits) throw CapabilityError("dense states are limited to " + std::to_string(kMaxDenseQubits) + " qubits");
    if (hermiticity_defect(rho_) > kHermitianTol) throw DomainError("density matrix is not Hermitian");
    if (std::abs(rho_.trace() - Complex{1.0, 0.0}) > kTraceTol) throw DomainError("density matrix does not have unit trace");
    if (min_eigenvalue(rho_) < -kEigenTol) throw DomainError("density matrix is not positive semidefinite");
  }

  static QuantumState pure(const CVector& psi) {
    const double norm = psi.norm();
    if (norm == 0.0) throw DomainError("zero state vector");
    const CVector u = psi / norm;
    CMatrix rho = u * u.adjoint();
    rho = 0.5 * (rho + rho.adjoint());
    return QuantumState(std::move(rho));
  }

  /// Computational basis state from a label such as "0110" (qubit 1 first).
  static QuantumState basis(std::string_view label) {
    if (label.empty()) throw ParseError("empty basis label");
    std::size_t index = 0;
    for (char c : label) {
      if (c != '0' && c != '1') throw ParseError("basis label must contain only 0 and 1");
      index = (index << 1) | static_cast<std::size_t>(c - '0');
    }
    check_qubits(static_cast<int>(label.size()));
    CVector psi = CVector::Zero(static_cast<Eigen::Index>(dim_of(static_cast<int>(label.size()))));
    psi[static_cast<Eigen::Index>(index)] = 1.0;
    return pure(psi);
  }

  static QuantumState zero(int n) { return basis(std::string(static_cast<std::size_t>(n), '0')); }

  static QuantumState plus(int n) {
    check_qubits(n);
    const auto d = static_cast<Eigen::Index>(dim_of(n));
    return pure(CVector::Ones(d));
  }

  static QuantumState maximally_mixed(int n) {
    check_qubits(n);
    const auto d = static_cast<Eigen::Index>(dim_of(n));
    return QuantumState(CMatrix::Identity(d, d) / static_cast<double>(d));
  }

  static QuantumState ghz(int n) {
    check_qubits(n);
    const auto d = static_cast<Eigen::Index>(dim_of(n));
    CVector psi = CVector::Zero(d);
    psi[0] = 1.0;
    psi[d - 1] = 1.0;
    return pure(psi);
  }

  /// Haar-random pure state; the same seed gives the same state.
  static QuantumState haar_random(int n, std::uint64_t seed) {
    check_qubits(n);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    const auto d = static_cast<Eigen::Index>(dim_of(n));
    CVector psi(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double re = normal(gen);
      const double im = normal(gen);
      psi[i] = Complex{re, im};
    }
    return pure(psi);
  }

  /// Dense matrix text: one row per line, each entry a "re im" pair.
  static QuantumState from_stream(std::istream& in) {
    std::vector<std::vector<Complex>> rows;
    detail::for_each_record(in, [&](const std::vector<std::string_view>& tok, std::size_t lineno) {
      if (tok.size() % 2 != 0) throw ParseError("row needs an even number of reals (re im pairs)", lineno);
      std::vector<Complex> row;
      for (std::size_t k = 0; k < tok.size(); k += 2)
        row.emplace_back(detail::parse_real(tok[k], lineno), detail::parse_real(tok[k + 1], lineno));
      rows.push_back(std::move(row));
    });
    if (rows.empty()) throw ParseError("state file contains no rows");
    const auto d = static_cast<Eigen::Index>(rows.size());
    CMatrix m(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != d)
        throw ParseError("state matrix is not square");
      for (Eigen::Index c = 0; c < d; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return QuantumState(std::move(m));
  }

  int qubits() const { return n_; }
  const CMatrix& matrix() const { return rho_; }

 private:
  static void check_qubits(int n) {
    if (n < 1) throw DimensionError("state must have at least one qubit");
    if (n > kMaxDenseQubits) throw CapabilityError("dense states are limited to " + std::to_string(kMaxDenseQubits) + " qubits");
  }

  int n_ = 0;
  CMatrix rho_;
};

/// Builds a state from a preset name, a basis label, "haar-random[:seed]",
/// or "file:<path>".
inline QuantumState state_from_spec(std::string_view spec, int n) {
  const auto colon = spec.find(':');
  const std::string_view head = spec.substr(0, colon);
  const std::string_view tail = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  QuantumState out;
  if (head == "zero") {
    out = QuantumState::zero(n);
  } else if (head == "plus") {
    out = QuantumState::plus(n);
  } else if (head == "maximally-mixed") {
    out = QuantumState::maximally_mixed(n);
  } else if (head == "ghz") {
    out = QuantumState::ghz(n);
  } else if (head == "haar-random") {
    std::uint64_t seed = 0;
    if (!tail.empty()) {
      auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), seed);
      if (ec != std::errc{} || ptr != tail.data() + tail.size()) throw ParseError("bad seed in state spec");
    }
    out = QuantumState::haar_random(n, seed);
  } else if (head == "file") {
    std::ifstream in{std::string(tail)};
    if (!in) throw ParseError("cannot open state file " + std::string(tail));
    out = QuantumState::from_stream(in);
  } else if (head == "basis") {
    out = QuantumState::basis(tail);
  } else if (!spec.empty() && spec.find_first_not_of("01") == std::string_view::npos) {
    out = QuantumState::basis(spec);
  } else {
    throw ParseError("unknown state spec '" + std::string(spec) + "'");
  }
  if (out.qubits() != n)
    throw DimensionError("state has " + std::to_string(out.qubits()) + " qubits, expected " + std::to_string(n));
  return out;
}

/// Real part of tr[P rho], asserting the imaginary residue is below 1e-10.
inline double expectation(const QuantumState& rho, const PauliString& p) {
  if (p.size() != rho.qubits()) throw DimensionError("Pauli string and state differ in qubit count");
  const auto xm = p.x_mask();
  const auto zm = p.z_mask();
  const auto& m = rho.matrix();
  Complex acc{0.0, 0.0};
  for (std::uint64_t c = 0; c < static_cast<std::uint64_t>(m.rows()); ++c) {
    const double sign = (std::popcount(c & zm) & 1) ? -1.0 : 1.0;
    acc += sign * m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c ^ xm));
  }
  acc *= Phase(p.y_count()).value();
  if (std::abs(acc.imag()) > 1e-10) throw DomainError("tr[P rho] has a non-negligible imaginary part");
  return acc.real();
}

/// tr[P Q rho] including the phase of the product.
inline Complex product_expectation(const QuantumState& rho, const PauliString& p, const PauliString& q) {
  auto [phase, r] = product(p, q);
  if (p.size() != rho.qubits()) throw DimensionError("Pauli string and state differ in qubit count");
  const auto xm = r.x_mask();
  const auto zm = r.z_mask();
  const auto& m = rho.matrix();
  Complex acc{0.0, 0.0};
  for (std::uint64_t c = 0; c < static_cast<std::uint64_t>(m.rows()); ++c) {
    const double sign = (std::popcount(c & zm) & 1) ? -1.0 : 1.0;
    acc += sign * m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c ^ xm));
  }
  return acc * Phase(r.y_count()).value() * phase.value();
}

/// Outcome triple (x, y, z), entries +1 or -1.
using Triple = std::array<int, 3>;

/// One triple per qubit.
struct OutcomeRecord {
  std::vector<Triple> triples;

  int size() const { return static_cast<int>(triples.size()); }
  const Triple& operator[](int i) const { return triples[static_cast<std::size_t>(i)]; }
  friend bool operator==(const OutcomeRecord&, const OutcomeRecord&) = default;
};

/// Per-qubit code in 0..7: bit 2 = x, bit 1 = y, bit 0 = z; a set bit means -1.
inline int triple_code(const Triple& t) { return (t[0] < 0 ? 4 : 0) | (t[1] < 0 ? 2 : 0) | (t[2] < 0 ? 1 : 0); }

inline Triple triple_of_code(int code) {
  return Triple{(code & 4) ? -1 : 1, (code & 2) ? -1 : 1, (code & 1) ? -1 : 1};
}

/// Record for a base-8 outcome index with qubit 1 as the most significant digit.
inline OutcomeRecord record_of_index(std::size_t index, int n) {
  OutcomeRecord rec;
  rec.triples.resize(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    rec.triples[static_cast<std::size_t>(i)] = triple_of_code(static_cast<int>(index & 7));
    index >>= 3;
  }
  return rec;
}

inline std::size_t index_of_record(const OutcomeRecord& rec) {
  std::size_t index = 0;
  for (const auto& t : rec.triples) index = (index << 3) | static_cast<std::size_t>(triple_code(t));
  return index;
}

/// An outcome-indexed list of effects.
struct Povm {
  std::vector<CMatrix> effects;

  std::size_t size() const { return effects.size(); }
  Eigen::Index dim() const { return effects.empty() ? 0 : effects.front().rows(); }

  /// Largest violation of positivity and completeness.
  double defect() const {
    if (effects.empty()) return std::numeric_limits<double>::infinity();
    const auto d = dim();
    CMatrix sum = CMatrix::Zero(d, d);
    double worst = 0.0;
    for (const auto& e : effects) {
      if (e.rows() != d || e.cols() != d) throw DimensionError("POVM effects differ in dimension");
      worst = std::max(worst, hermiticity_defect(e));
      worst = std::max(worst, -min_eigenvalue(e));
      sum += e;
    }
    worst = std::max(worst, (sum - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff());
    return worst;
  }

  bool valid(double tol = 1e-10) const { return defect() <= tol; }
};

inline void require_compatible(const Vec3& v) {
  const double s = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  if (s > 1.0 + 1e-9) throw IncompatibleVisibilities("sum of squared visibilities " + std::to_string(s) + " exceeds 1");
}

inline void require_compatible(const Visibilities& v) {
  for (int i = 0; i < v.size(); ++i) require_compatible(v[i]);
}

inline Matrix2c parent_effect(const Triple& t, const Vec3& v) {
  require_compatible(v);
  return bloch_matrix(0.125, {0.125 * t[0] * v[0], 0.125 * t[1] * v[1], 0.125 * t[2] * v[2]});
}

/// The eight single-qubit parent effects indexed by triple code.
inline std::array<Matrix2c, 8> parent_effects(const Vec3& v) {
  std::array<Matrix2c, 8> out;
  for (int c = 0; c < 8; ++c) out[static_cast<std::size_t>(c)] = parent_effect(triple_of_code(c), v);
  return out;
}

/// Full n-qubit parent POVM (8^n effects); n <= 3.
inline Povm parent_povm(const Visibilities& v) {
  const int n = v.size();
  if (n > 3) throw CapabilityError("explicit parent POVM limited to 3 qubits");
  require_compatible(v);
  Povm out;
  const std::size_t count = std::size_t{1} << (3 * n);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const auto rec = record_of_index(idx, n);
    CMatrix e = CMatrix::Ones(1, 1);
    for (int i = 0; i < n; ++i) e = kron(e, parent_effect(rec[i], v[i]));
    out.effects.push_back(std::move(e));
  }
  return out;
}

/// 1/2 (1 + s eta_P P).
inline CMatrix unsharp_pauli(const PauliString& p, const Visibilities& v, int s) {
  if (p.is_identity()) throw DomainError("unsharp Pauli of the identity string");
  if (s != 1 && s != -1) throw DomainError("outcome must be +1 or -1");
  if (p.size() > kMaxDenseQubits) throw CapabilityError("dense effect exceeds qubit cap");
  const auto d = static_cast<Eigen::Index>(dim_of(p.size()));
  return 0.5 * (CMatrix::Identity(d, d) + (s * eta_of(p, v)) * pauli_matrix(p));
}

namespace detail {

inline double born(const Matrix2c& reduced, const Matrix2c& effect) {
  return (effect * reduced).trace().real();
}

inline void distribution_recurse(const CMatrix& sigma, const std::vector<std::array<Matrix2c, 8>>& effects, int qubit,
                                 std::size_t prefix, std::vector<double>& out) {
  const auto& g = effects[static_cast<std::size_t>(qubit)];
  const bool last = qubit + 1 == static_cast<int>(effects.size());
  for (int c = 0; c < 8; ++c) {
    const std::size_t index = (prefix << 3) | static_cast<std::size_t>(c);
    if (last) {
      out[index] = born(sigma, g[static_cast<std::size_t>(c)]);
    } else {
      distribution_recurse(contract_first(sigma, g[static_cast<std::size_t>(c)]), effects, qubit + 1, index, out);
    }
  }
}

}  // namespace detail

/// Largest n for which outcome_distribution builds the 8^n table.
inline constexpr int kMaxTableQubits = 6;

/// p(x) = tr[F(x) rho] for all 8^n records, indexed as in record_of_index.
inline std::vector<double> outcome_distribution(const QuantumState& rho, const Visibilities& v) {
  const int n = rho.qubits();
  if (v.size() != n) throw DimensionError("visibilities and state differ in qubit count");
  if (n > kMaxTableQubits)
    throw CapabilityError("outcome tables limited to " + std::to_string(kMaxTableQubits) + " qubits; use sample_shots");
  std::vector<std::array<Matrix2c, 8>> effects;
  for (int i = 0; i < n; ++i) effects.push_back(parent_effects(v[i]));
  std::vector<double> out(std::size_t{1} << (3 * n));
  detail::distribution_recurse(rho.matrix(), effects, 0, 0, out);
  return out;
}

/// Counter-based random source: every (seed, shot) pair owns an independent stream.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

  class Stream {
   public:
    explicit Stream(std::uint64_t state) : state_(state) {}
    std::uint64_t next() {
      std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      return z ^ (z >> 31);
    }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    int below(int k) { return static_cast<int>(uniform() * k); }

   private:
    std::uint64_t state_;
  };

  Stream stream(std::uint64_t shot) const {
    Stream mixer(seed_ ^ 0x6A09E667F3BCC909ULL);
    const std::uint64_t a = mixer.next();
    Stream keyed(a ^ (shot * 0xD1B54A32D192ED03ULL));
    return Stream(keyed.next());
  }

 private:
  std::uint64_t seed_;
};

/// Options for sample_shots. `threads` = 0 uses the hardware concurrency.
struct SampleOptions {
  unsigned threads = 1;
  std::uint64_t first_shot = 0;
};

namespace detail {

// Sign patterns of the four projective directions used to simulate the parent.
inline constexpr int kVertexPattern[4][3] = {{1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {1, -1, -1}};

struct QubitPlan {
  Vec3 v{};
  double r = 0.0;  // Bloch length of v
  bool projective = false;
  std::array<Matrix2c, 8> parent{};
  StochasticMatrix2 noise{};
  bool noisy = false;
};

inline std::size_t pick(const double* probs, std::size_t k, double u) {
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += std::max(probs[i], 0.0);
  double acc = 0.0;
  const double target = u * total;
  for (std::size_t i = 0; i < k; ++i) {
    acc += std::max(probs[i], 0.0);
    if (target < acc) return i;
  }
  for (std::size_t i = k; i-- > 0;)
    if (probs[i] > 0.0) return i;
  return k - 1;
}

// Measures qubit 1 of sigma along unit direction n; returns +1/-1 and
// replaces sigma by the unnormalized post-measurement state of the rest.
inline int measure_direction(CMatrix& sigma, const Vec3& n, RandomSource::Stream& rng) {
  const Matrix2c reduced = reduce_to_first(sigma);
  const Matrix2c plus = bloch_matrix(0.5, {0.5 * n[0], 0.5 * n[1], 0.5 * n[2]});
  const Matrix2c minus = Matrix2c::Identity() - plus;
  const double probs[2] = {born(reduced, plus), born(reduced, minus)};
  const std::size_t k = pick(probs, 2, rng.uniform());
  if (sigma.rows() > 1) sigma = contract_first(sigma, k == 0 ? plus : minus);
  return k == 0 ? 1 : -1;
}

// Reads a physical +1/-1 outcome through the confusion matrix.
inline int read_out(int physical, const StochasticMatrix2& m, RandomSource::Stream& rng) {
  const double u = rng.uniform();
  if (physical > 0) return u < m.alpha ? 1 : -1;
  return u < m.beta ? -1 : 1;
}

inline Triple sample_projective(CMatrix& sigma, const QubitPlan& plan, const Vec3& unit, RandomSource::Stream& rng) {
  const int j = rng.below(4);
  const auto& pat = kVertexPattern[j];
  const int twirl = plan.noisy ? (rng.uniform() < 0.5 ? 1 : -1) : 1;
  const Vec3 dir{twirl * pat[0] * unit[0], twirl * pat[1] * unit[1], twirl * pat[2] * unit[2]};
  int s = measure_direction(sigma, dir, rng);
  if (plan.noisy) s = twirl * read_out(s, plan.noise, rng);
  return Triple{s * pat[0], s * pat[1], s * pat[2]};
}

inline OutcomeRecord sample_one(const CMatrix& rho, const std::vector<QubitPlan>& plans, RandomSource::Stream rng) {
  OutcomeRecord rec;
  rec.triples.resize(plans.size());
  CMatrix sigma = rho;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& plan = plans[i];
    if (plan.projective) {
      rec.triples[i] = sample_projective(sigma, plan, plan.v, rng);
    } else if (!plan.noisy) {
      // Direct draw from the eight parent effects.
      const Matrix2c reduced = reduce_to_first(sigma);
      double probs[8];
      for (std::size_t c = 0; c < 8; ++c) probs[c] = born(reduced, plan.parent[c]);
      const std::size_t c = pick(probs, 8, rng.uniform());
      rec.triples[i] = triple_of_code(static_cast<int>(c));
      if (sigma.rows() > 1) sigma = contract_first(sigma, plan.parent[c]);
    } else if (rng.uniform() < plan.r) {
      // Noisy readout with r < 1: projective branch along v / r.
      const Vec3 unit{plan.v[0] / plan.r, plan.v[1] / plan.r, plan.v[2] / plan.r};
      rec.triples[i] = sample_projective(sigma, plan, unit, rng);
    } else {
      // Uninformative branch: uniform triple, qubit traced out.
      rec.triples[i] = triple_of_code(rng.below(8));
      if (sigma.rows() > 1) sigma = contract_first(sigma, Matrix2c::Identity());
    }
  }
  return rec;
}

}  // namespace detail

/// Samples `shots` records of the parent measurement on rho. Per-qubit Bloch
/// length 1 is simulated with four projective measurements; shorter vectors
/// are drawn from the parent effects directly. With readout noise each
/// projective outcome passes through the qubit's confusion matrix after a
/// random sign twirl, so the records follow the parent with visibilities
/// scaled per qubit by alpha + beta - 1.
inline std::vector<OutcomeRecord> sample_shots(const QuantumState& rho, const Visibilities& v, std::size_t shots,
                                               const RandomSource& rng, const std::optional<ReadoutNoise>& noise = std::nullopt,
                                               SampleOptions opts = {}) {
  const int n = rho.qubits();
  if (v.size() != n) throw DimensionError("visibilities and state differ in qubit count");
  if (noise && noise->size() != n) throw DimensionError("noise model and state differ in qubit count");
  require_compatible(v);
  std::vector<detail::QubitPlan> plans(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& p = plans[static_cast<std::size_t>(i)];
    p.v = v[i];
    p.r = std::min(norm3(v[i]), 1.0);
    p.projective = std::abs(p.r - 1.0) <= 1e-12;
    p.parent = parent_effects(v[i]);
    if (noise && !((*noise)[i] == StochasticMatrix2{})) {
      p.noisy = true;
      p.noise = (*noise)[i];
    }
  }

  std::vector<OutcomeRecord> out(shots);
  unsigned workers = opts.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opts.threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(shots, 1)));
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) out[k] = detail::sample_one(rho.matrix(), plans, rng.stream(opts.first_shot + k));
  };
  if (workers <= 1) {
    run(0, shots);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (shots + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(shots, w * chunk);
      const std::size_t end = std::min(shots, begin + chunk);
      pool.emplace_back(run, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

/// Visibilities seen by the estimator when `noise` corrupts the readout:
/// qubit i is scaled by alpha_i + beta_i - 1.
inline Visibilities effective_visibilities(const Visibilities& v, const ReadoutNoise& noise) {
  if (noise.size() != v.size()) throw DimensionError("noise model and visibilities differ in qubit count");
  std::vector<double> t;
  for (int i = 0; i < noise.size(); ++i) t.push_back(noise[i].strength());
  return v.scaled(t);
}

}  // namespace jmest
