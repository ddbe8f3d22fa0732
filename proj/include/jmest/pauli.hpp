#pragma once

// Pauli-string algebra. Letters are stored as symplectic bit pairs
// (bit 0 = X part, bit 1 = Z part), so I=0, X=1, Z=2, Y=3 and the letter of a
// product is the XOR of the operands.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jmest/errors.hpp"
#include "jmest/linalg.hpp"

namespace jmest {

enum class PauliLetter : std::uint8_t { I = 0, X = 1, Z = 2, Y = 3 };

inline char to_char(PauliLetter l) {
  switch (l) {
    case PauliLetter::I: return 'I';
    case PauliLetter::X: return 'X';
    case PauliLetter::Y: return 'Y';
    case PauliLetter::Z: return 'Z';
  }
  return '?';
}

inline PauliLetter letter_from_char(char c) {
  switch (c) {
    case 'I': return PauliLetter::I;
    case 'X': return PauliLetter::X;
    case 'Y': return PauliLetter::Y;
    case 'Z': return PauliLetter::Z;
    default: throw ParseError(std::string("invalid Pauli letter '") + c + "'");
  }
}

/// Axis index 0/1/2 for X/Y/Z. Undefined for I.
inline int axis_of(PauliLetter l) {
  switch (l) {
    case PauliLetter::X: return 0;
    case PauliLetter::Y: return 1;
    case PauliLetter::Z: return 2;
    default: throw DomainError("identity letter has no axis");
  }
}

inline PauliLetter letter_of_axis(int axis) {
  static constexpr std::array<PauliLetter, 3> kLetters{PauliLetter::X, PauliLetter::Y, PauliLetter::Z};
  return kLetters.at(static_cast<std::size_t>(axis));
}

inline Matrix2c letter_matrix(PauliLetter l) {
  switch (l) {
    case PauliLetter::X: return sigma_x();
    case PauliLetter::Y: return sigma_y();
    case PauliLetter::Z: return sigma_z();
    default: return Matrix2c::Identity();
  }
}

/// An element i^k of the cyclic group {+1, +i, -1, -i}.
class Phase {
 public:
  constexpr Phase() = default;
  constexpr explicit Phase(int exponent) : k_(((exponent % 4) + 4) % 4) {}

  constexpr int exponent() const { return k_; }
  constexpr bool is_real() const { return (k_ & 1) == 0; }
  constexpr int sign() const { return k_ == 0 ? 1 : (k_ == 2 ? -1 : 0); }

  Complex value() const {
    static constexpr std::array<Complex, 4> kValues{Complex{1, 0}, Complex{0, 1}, Complex{-1, 0}, Complex{0, -1}};
    return kValues[static_cast<std::size_t>(k_)];
  }

  friend constexpr Phase operator*(Phase a, Phase b) { return Phase(a.k_ + b.k_); }
  friend constexpr bool operator==(Phase a, Phase b) { return a.k_ == b.k_; }

 private:
  int k_ = 0;
};

namespace detail {
// Exponent of i in the product a*b of single-qubit letters, indexed by the
// symplectic codes I=0, X=1, Z=2, Y=3.
inline constexpr int kLetterPhase[4][4] = {
    //  I  X  Z  Y
    {0, 0, 0, 0},  // I
    {0, 0, 3, 1},  // X: XZ = -iY, XY = iZ
    {0, 1, 0, 3},  // Z: ZX = iY,  ZY = -iX
    {0, 3, 1, 0},  // Y: YX = -iZ, YZ = iX
};
}  // namespace detail

inline std::pair<Phase, PauliLetter> multiply(PauliLetter a, PauliLetter b) {
  const auto ia = static_cast<std::uint8_t>(a);
  const auto ib = static_cast<std::uint8_t>(b);
  return {Phase(detail::kLetterPhase[ia][ib]), static_cast<PauliLetter>(ia ^ ib)};
}

/// A tensor product of Pauli letters, leftmost letter acting on qubit 1.
class PauliString {
 public:
  PauliString() = default;
  explicit PauliString(std::vector<PauliLetter> letters) : letters_(std::move(letters)) {
    if (letters_.empty()) throw DimensionError("Pauli string must act on at least one qubit");
  }

  static PauliString identity(int n) { return PauliString(std::vector<PauliLetter>(static_cast<std::size_t>(n), PauliLetter::I)); }

  static PauliString parse(std::string_view word) {
    if (word.empty()) throw ParseError("empty Pauli word");
    std::vector<PauliLetter> letters;
    letters.reserve(word.size());
    for (char c : word) letters.push_back(letter_from_char(c));
    return PauliString(std::move(letters));
  }

  /// Single-letter string acting on `qubit` of an n-qubit register.
  static PauliString single(int n, int qubit, PauliLetter l) {
    auto p = identity(n);
    p.letters_.at(static_cast<std::size_t>(qubit)) = l;
    return p;
  }

  int size() const { return static_cast<int>(letters_.size()); }
  PauliLetter operator[](int i) const { return letters_[static_cast<std::size_t>(i)]; }
  const std::vector<PauliLetter>& letters() const { return letters_; }

  std::vector<int> support() const {
    std::vector<int> s;
    for (int i = 0; i < size(); ++i)
      if ((*this)[i] != PauliLetter::I) s.push_back(i);
    return s;
  }

  int weight() const {
    return static_cast<int>(std::count_if(letters_.begin(), letters_.end(), [](PauliLetter l) { return l != PauliLetter::I; }));
  }

  bool is_identity() const { return weight() == 0; }

  std::string str() const {
    std::string s;
    s.reserve(letters_.size());
    for (auto l : letters_) s.push_back(to_char(l));
    return s;
  }

  /// Bit masks over basis indices (qubit 1 = most significant bit). n <= 63.
  std::uint64_t x_mask() const { return mask(1); }
  std::uint64_t z_mask() const { return mask(2); }
  int y_count() const {
    return static_cast<int>(std::count(letters_.begin(), letters_.end(), PauliLetter::Y));
  }

  friend bool operator==(const PauliString&, const PauliString&) = default;
  friend bool operator<(const PauliString& a, const PauliString& b) { return a.str() < b.str(); }

 private:
  std::uint64_t mask(std::uint8_t bit) const {
    if (size() > 63) throw CapabilityError("bit-mask form limited to 63 qubits");
    std::uint64_t m = 0;
    const int n = size();
    for (int i = 0; i < n; ++i)
      if (static_cast<std::uint8_t>(letters_[static_cast<std::size_t>(i)]) & bit) m |= std::uint64_t{1} << (n - 1 - i);
    return m;
  }

  std::vector<PauliLetter> letters_;
};

inline void require_same_length(const PauliString& p, const PauliString& q) {
  if (p.size() != q.size())
    throw DimensionError("Pauli strings of different lengths: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
}

/// PQ = phase * R as matrices.
inline std::pair<Phase, PauliString> product(const PauliString& p, const PauliString& q) {
  require_same_length(p, q);
  Phase phase;
  std::vector<PauliLetter> out(static_cast<std::size_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) {
    auto [ph, l] = multiply(p[i], q[i]);
    phase = phase * ph;
    out[static_cast<std::size_t>(i)] = l;
  }
  return {phase, PauliString(std::move(out))};
}

inline PauliString strip_phase_product(const PauliString& p, const PauliString& q) { return product(p, q).second; }

/// 1 when on every qubit one letter is I or both letters agree, else 0.
inline int f_factor(const PauliString& p, const PauliString& q) {
  require_same_length(p, q);
  for (int i = 0; i < p.size(); ++i)
    if (p[i] != PauliLetter::I && q[i] != PauliLetter::I && p[i] != q[i]) return 0;
  return 1;
}

/// Per-qubit sharpness triple (eta^x, eta^y, eta^z) of the parent measurement.
class Visibilities {
 public:
  Visibilities() = default;
  explicit Visibilities(std::vector<Vec3> per_qubit) : v_(std::move(per_qubit)) {
    for (const auto& t : v_)
      for (double e : t)
        if (!(e >= 0.0 && e <= 1.0)) throw DomainError("visibility outside [0, 1]: " + std::to_string(e));
  }

  static Visibilities uniform(int n, double eta) {
    return Visibilities(std::vector<Vec3>(static_cast<std::size_t>(n), Vec3{eta, eta, eta}));
  }
  static Visibilities unbiased(int n) { return uniform(n, 1.0 / std::sqrt(3.0)); }

  int size() const { return static_cast<int>(v_.size()); }
  const Vec3& operator[](int i) const { return v_.at(static_cast<std::size_t>(i)); }
  const std::vector<Vec3>& per_qubit() const { return v_; }

  double axis(int qubit, PauliLetter l) const { return (*this)[qubit][static_cast<std::size_t>(axis_of(l))]; }

  double norm(int qubit) const { return norm3((*this)[qubit]); }

  /// Sum of squares <= 1 (+tol) on every qubit.
  bool jointly_measurable(double tol = 1e-9) const {
    return std::all_of(v_.begin(), v_.end(), [tol](const Vec3& t) {
      return t[0] * t[0] + t[1] * t[1] + t[2] * t[2] <= 1.0 + tol;
    });
  }

  Visibilities scaled(const std::vector<double>& factors) const {
    if (factors.size() != v_.size()) throw DimensionError("one scale factor per qubit required");
    auto out = v_;
    for (std::size_t i = 0; i < out.size(); ++i)
      for (double& e : out[i]) e *= factors[i];
    return Visibilities(std::move(out));
  }

  friend bool operator==(const Visibilities&, const Visibilities&) = default;

 private:
  std::vector<Vec3> v_;
};

/// eta_P: product of local visibilities over the support of P (1 for the identity).
inline double eta_of(const PauliString& p, const Visibilities& v) {
  if (p.size() != v.size()) throw DimensionError("Pauli string and visibilities differ in qubit count");
  double eta = 1.0;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] != PauliLetter::I) eta *= v.axis(i, p[i]);
  return eta;
}

/// eta_{PQ}: eta_of applied to the phase-free letter product of P and Q.
inline double eta_pq(const PauliString& p, const PauliString& q, const Visibilities& v) {
  return eta_of(strip_phase_product(p, q), v);
}

/// Dense 2^n x 2^n matrix of a Pauli string.
inline CMatrix pauli_matrix(const PauliString& p) {
  const std::size_t dim = dim_of(p.size());
  const auto xm = p.x_mask();
  const auto zm = p.z_mask();
  const Complex yphase = Phase(p.y_count()).value();
  CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::uint64_t col = 0; col < dim; ++col) {
    const double sign = (std::popcount(col & zm) & 1) ? -1.0 : 1.0;
    m(static_cast<Eigen::Index>(col ^ xm), static_cast<Eigen::Index>(col)) = sign * yphase;
  }
  return m;
}

/// Adds coeff * P * v to out without forming P.
inline void accumulate_pauli_action(const PauliString& p, Complex coeff, const CVector& v, CVector& out) {
  const auto xm = p.x_mask();
  const auto zm = p.z_mask();
  const Complex c = coeff * Phase(p.y_count()).value();
  const auto dim = static_cast<std::uint64_t>(v.size());
  for (std::uint64_t b = 0; b < dim; ++b) {
    const double sign = (std::popcount(b & zm) & 1) ? -1.0 : 1.0;
    out[static_cast<Eigen::Index>(b ^ xm)] += sign * c * v[static_cast<Eigen::Index>(b)];
  }
}

}  // namespace jmest
