#pragma once

// Hamiltonians, readout-noise models and visibility assignments, with the
// line-oriented text formats used to exchange them.
//
//   Hamiltonian:   <PAULI_WORD> <coefficient>     one term per line
//   Noise:         <qubit_index> <alpha> <beta>   zero-based, one line per qubit
//   Visibilities:  <qubit_index> <eta_x> <eta_y> <eta_z>
//
// '#' starts a comment, blank lines are ignored, LF and CRLF are accepted.

#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jmest/errors.hpp"
#include "jmest/pauli.hpp"

namespace jmest {

/// H = sum_P lambda_P P over Pauli strings of a common length.
class Hamiltonian {
 public:
  Hamiltonian() = default;
  explicit Hamiltonian(int n) : n_(n) {
    if (n < 1) throw DimensionError("Hamiltonian needs at least one qubit");
  }

  int qubits() const { return n_; }

  /// Adds lambda * P, merging with an existing term.
  void add(const PauliString& p, double lambda) {
    if (p.size() != n_) throw DimensionError("term " + p.str() + " does not act on " + std::to_string(n_) + " qubits");
    if (!std::isfinite(lambda)) throw DomainError("non-finite coefficient for " + p.str());
    terms_[p] += lambda;
  }
  void add(std::string_view word, double lambda) { add(PauliString::parse(word), lambda); }

  const std::map<PauliString, double>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }

  double identity_coefficient() const {
    auto it = terms_.find(PauliString::identity(n_));
    return it == terms_.end() ? 0.0 : it->second;
  }

  /// Non-identity terms in lexicographic order.
  std::vector<std::pair<PauliString, double>> pauli_terms() const {
    std::vector<std::pair<PauliString, double>> out;
    for (const auto& [p, c] : terms_)
      if (!p.is_identity()) out.emplace_back(p, c);
    return out;
  }

  friend bool operator==(const Hamiltonian&, const Hamiltonian&) = default;

 private:
  int n_ = 0;
  std::map<PauliString, double> terms_;
};

/// Per-qubit readout confusion (alpha, beta): alpha (beta) is the probability
/// of correctly reading 0 (1).
struct StochasticMatrix2 {
  double alpha = 1.0;
  double beta = 1.0;

  /// Columns (alpha, 1-alpha) and (1-beta, beta).
  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d t;
    t << alpha, 1.0 - beta, 1.0 - alpha, beta;
    return t;
  }

  /// alpha + beta - 1: Bloch length of a noisy projective effect.
  double strength() const { return alpha + beta - 1.0; }

  bool is_stochastic(double tol = 1e-12) const {
    return alpha >= -tol && alpha <= 1 + tol && beta >= -tol && beta <= 1 + tol;
  }

  friend bool operator==(const StochasticMatrix2&, const StochasticMatrix2&) = default;
};

class ReadoutNoise {
 public:
  ReadoutNoise() = default;
  explicit ReadoutNoise(std::vector<StochasticMatrix2> per_qubit) : q_(std::move(per_qubit)) {
    for (std::size_t i = 0; i < q_.size(); ++i) validate(q_[i], i);
  }

  static ReadoutNoise identity(int n) { return ReadoutNoise(std::vector<StochasticMatrix2>(static_cast<std::size_t>(n))); }
  static ReadoutNoise symmetric(int n, double alpha) {
    return ReadoutNoise(std::vector<StochasticMatrix2>(static_cast<std::size_t>(n), StochasticMatrix2{alpha, alpha}));
  }

  int size() const { return static_cast<int>(q_.size()); }
  const StochasticMatrix2& operator[](int i) const { return q_.at(static_cast<std::size_t>(i)); }
  const std::vector<StochasticMatrix2>& per_qubit() const { return q_; }

  bool is_identity() const {
    return std::all_of(q_.begin(), q_.end(), [](const auto& m) { return m.alpha == 1.0 && m.beta == 1.0; });
  }

  static void validate(const StochasticMatrix2& m, std::size_t qubit) {
    auto in_range = [](double v) { return v >= 0.5 && v <= 1.0; };
    if (!in_range(m.alpha) || !in_range(m.beta))
      throw DomainError("readout parameters of qubit " + std::to_string(qubit) + " outside [1/2, 1]");
  }

  friend bool operator==(const ReadoutNoise&, const ReadoutNoise&) = default;

 private:
  std::vector<StochasticMatrix2> q_;
};

namespace detail {

inline std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Strips CR and comments. Returns tokens of each meaningful line with its number.
template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    auto tokens = tokenize(view);
    if (tokens.empty()) continue;
    fn(tokens, lineno);
  }
}

inline double parse_real(std::string_view tok, std::size_t lineno) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec == std::errc::result_out_of_range) throw ParseError("non-finite number '" + std::string(tok) + "'", lineno);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError("malformed number '" + std::string(tok) + "'", lineno);
  if (!std::isfinite(value)) throw ParseError("non-finite number '" + std::string(tok) + "'", lineno);
  return value;
}

inline int parse_index(std::string_view tok, std::size_t lineno) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || value < 0)
    throw ParseError("malformed qubit index '" + std::string(tok) + "'", lineno);
  return value;
}

inline std::string format_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline Hamiltonian load_hamiltonian(std::istream& in) {
  std::optional<Hamiltonian> h;
  detail::for_each_record(in, [&](const std::vector<std::string_view>& tok, std::size_t lineno) {
    if (tok.size() != 2) throw ParseError("expected '<PAULI_WORD> <coefficient>'", lineno);
    PauliString p;
    try {
      p = PauliString::parse(tok[0]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    const double lambda = detail::parse_real(tok[1], lineno);
    if (!h) h.emplace(p.size());
    if (p.size() != h->qubits())
      throw ParseError("term length " + std::to_string(p.size()) + " differs from " + std::to_string(h->qubits()), lineno);
    h->add(p, lambda);
  });
  if (!h) throw ParseError("Hamiltonian file contains no terms");
  return *h;
}

inline void write_hamiltonian(std::ostream& out, const Hamiltonian& h) {
  for (const auto& [p, c] : h.terms()) out << p.str() << ' ' << detail::format_exact(c) << '\n';
}

/// Reads one record per qubit. Unlisted qubits are an error unless
/// `default_identity` is set, in which case they get alpha = beta = 1.
inline ReadoutNoise load_noise(std::istream& in, int n, bool default_identity = false) {
  std::vector<std::optional<StochasticMatrix2>> seen(static_cast<std::size_t>(n));
  detail::for_each_record(in, [&](const std::vector<std::string_view>& tok, std::size_t lineno) {
    if (tok.size() != 3) throw ParseError("expected '<qubit> <alpha> <beta>'", lineno);
    const int q = detail::parse_index(tok[0], lineno);
    if (q >= n) throw ParseError("qubit index " + std::to_string(q) + " out of range for " + std::to_string(n) + " qubits", lineno);
    StochasticMatrix2 m{detail::parse_real(tok[1], lineno), detail::parse_real(tok[2], lineno)};
    if (m.alpha < 0.5 || m.alpha > 1.0) throw ParseError("alpha outside [1/2, 1]", lineno);
    if (m.beta < 0.5 || m.beta > 1.0) throw ParseError("beta outside [1/2, 1]", lineno);
    if (seen[static_cast<std::size_t>(q)]) throw ParseError("duplicate record for qubit " + std::to_string(q), lineno);
    seen[static_cast<std::size_t>(q)] = m;
  });
  std::vector<StochasticMatrix2> out;
  for (int q = 0; q < n; ++q) {
    if (seen[static_cast<std::size_t>(q)]) {
      out.push_back(*seen[static_cast<std::size_t>(q)]);
    } else if (default_identity) {
      out.push_back(StochasticMatrix2{});
    } else {
      throw ParseError("missing noise record for qubit " + std::to_string(q));
    }
  }
  return ReadoutNoise(std::move(out));
}

/// Noise file without a known qubit count: n is one past the largest index.
inline ReadoutNoise load_noise(std::istream& in) {
  std::stringstream copy;
  copy << in.rdbuf();
  int n = 0;
  {
    std::istringstream scan(copy.str());
    detail::for_each_record(scan, [&](const std::vector<std::string_view>& tok, std::size_t lineno) {
      if (tok.empty()) return;
      n = std::max(n, detail::parse_index(tok[0], lineno) + 1);
    });
  }
  if (n == 0) throw ParseError("noise file contains no records");
  std::istringstream again(copy.str());
  return load_noise(again, n);
}

inline void write_noise(std::ostream& out, const ReadoutNoise& noise) {
  for (int q = 0; q < noise.size(); ++q)
    out << q << ' ' << detail::format_exact(noise[q].alpha) << ' ' << detail::format_exact(noise[q].beta) << '\n';
}

inline Visibilities load_visibilities(std::istream& in, int n) {
  std::vector<std::optional<Vec3>> seen(static_cast<std::size_t>(n));
  detail::for_each_record(in, [&](const std::vector<std::string_view>& tok, std::size_t lineno) {
    if (tok.size() != 4) throw ParseError("expected '<qubit> <eta_x> <eta_y> <eta_z>'", lineno);
    const int q = detail::parse_index(tok[0], lineno);
    if (q >= n) throw ParseError("qubit index out of range", lineno);
    Vec3 v{};
    for (std::size_t a = 0; a < 3; ++a) {
      v[a] = detail::parse_real(tok[a + 1], lineno);
      if (v[a] < 0.0 || v[a] > 1.0) throw ParseError("visibility outside [0, 1]", lineno);
    }
    if (seen[static_cast<std::size_t>(q)]) throw ParseError("duplicate record for qubit " + std::to_string(q), lineno);
    seen[static_cast<std::size_t>(q)] = v;
  });
  std::vector<Vec3> out;
  for (int q = 0; q < n; ++q) {
    if (!seen[static_cast<std::size_t>(q)]) throw ParseError("missing visibilities for qubit " + std::to_string(q));
    out.push_back(*seen[static_cast<std::size_t>(q)]);
  }
  return Visibilities(std::move(out));
}

inline void write_visibilities(std::ostream& out, const Visibilities& v) {
  for (int q = 0; q < v.size(); ++q)
    out << q << ' ' << detail::format_exact(v[q][0]) << ' ' << detail::format_exact(v[q][1]) << ' '
        << detail::format_exact(v[q][2]) << '\n';
}

}  // namespace jmest
