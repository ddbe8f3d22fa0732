#pragma once

// Visibility allocation: derivative-free minimization of a variance surrogate
// over per-qubit visibilities in the unit ball, followed by noise-aware
// rescaling to a simulable parent and a parent-structure check.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "jmest/compat.hpp"
#include "jmest/errors.hpp"
#include "jmest/model.hpp"
#include "jmest/pauli.hpp"
#include "jmest/variance.hpp"

namespace jmest {

enum class CostKind { Diag, KappaSum };

inline const char* to_string(CostKind c) { return c == CostKind::Diag ? "diag" : "kappa_sum"; }

inline CostKind cost_kind_from_string(const std::string& s) {
  if (s == "diag") return CostKind::Diag;
  if (s == "kappa_sum") return CostKind::KappaSum;
  throw DomainError("unknown cost selector '" + s + "' (expected diag or kappa_sum)");
}

struct OptimizeConfig {
  std::size_t max_evals = 20000;
  /// 0 picks clamp(4 * 3n, 20, 80).
  std::size_t population = 0;
  double differential_weight = 0.6;
  double crossover = 0.9;
  std::uint64_t seed = 1;
  /// Relative spread of population costs at which the search stops.
  double tolerance = 1e-8;
  CostKind cost = CostKind::Diag;
  int threads = 1;
  /// Largest parent deviation from the closed form accepted by the structure check.
  double structure_tolerance = 1e-5;
};

struct OptimizeReport {
  /// Unbiased visibilities after noise repair (the baseline).
  Visibilities v_unbiased;
  /// Best point of the unconstrained-by-noise search.
  Visibilities v_search;
  /// Final visibilities after rescaling and the structure check.
  Visibilities v_opt;
  CostKind cost_kind = CostKind::Diag;
  double cost_unbiased = 0.0;
  double cost_search = 0.0;
  double cost_before = 0.0;
  double cost_after = 0.0;
  double jm_norm_sq_before = 0.0;
  double jm_norm_sq_after = 0.0;
  std::vector<double> r_star;
  std::vector<Feasibility> rescale_status;
  double structure_factor = 1.0;
  std::vector<double> structure_deviation;
  std::vector<Feasibility> structure_status;
  int indeterminate_solves = 0;
  std::size_t evaluations = 0;
  /// True when the repaired search result was worse than the repaired unbiased point.
  bool kept_unbiased = false;
};

namespace detail {

/// Cost of a flat visibility vector (3 entries per qubit).
class VisibilityCost {
 public:
  VisibilityCost(const Hamiltonian& h, CostKind kind) : h_(&h), kind_(kind), n_(h.qubits()) {
    for (const auto& [p, lambda] : h.pauli_terms()) {
      Term t{lambda * lambda, {}};
      for (int i = 0; i < p.size(); ++i)
        if (p[i] != PauliLetter::I) t.slots.push_back(static_cast<std::size_t>(3 * i + axis_of(p[i])));
      terms_.push_back(std::move(t));
    }
  }

  double operator()(const std::vector<double>& x) const {
    if (kind_ == CostKind::Diag) {
      double s = 0.0;
      for (const auto& t : terms_) {
        double e = 1.0;
        for (auto k : t.slots) e *= x[k];
        if (!(e > 0.0)) return std::numeric_limits<double>::infinity();
        s += t.weight / (e * e);
      }
      return s;
    }
    try {
      return cost_kappa_sum(*h_, unflatten(x));
    } catch (const UnestimableTerm&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  int qubits() const { return n_; }

 private:
  struct Term {
    double weight;
    std::vector<std::size_t> slots;
  };
  const Hamiltonian* h_;
  CostKind kind_;
  int n_;
  std::vector<Term> terms_;

 public:
  static Visibilities unflatten(const std::vector<double>& x) {
    std::vector<Vec3> v(x.size() / 3);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = {x[3 * i], x[3 * i + 1], x[3 * i + 2]};
    return Visibilities(std::move(v));
  }
};

inline std::vector<double> flatten(const Visibilities& v) {
  std::vector<double> x;
  for (const auto& t : v.per_qubit()) x.insert(x.end(), t.begin(), t.end());
  return x;
}

/// Clip to [0, 1] and pull each qubit's triple radially into the unit ball.
inline void project(std::vector<double>& x) {
  for (double& e : x) e = std::clamp(e, 0.0, 1.0);
  for (std::size_t i = 0; i + 2 < x.size(); i += 3) {
    const double n = std::sqrt(x[i] * x[i] + x[i + 1] * x[i + 1] + x[i + 2] * x[i + 2]);
    if (n > 1.0)
      for (std::size_t k = 0; k < 3; ++k) x[i + k] /= n;
  }
}

struct SearchResult {
  std::vector<double> best;
  double cost = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
};

/// DE/rand/1/bin seeded with x0, then a compass polish of the best point.
inline SearchResult differential_evolution(const VisibilityCost& cost, const std::vector<double>& x0, const OptimizeConfig& cfg) {
  SearchResult out{x0, cost(x0), 1};
  if (cfg.max_evals <= 1 || x0.empty()) return out;
  const std::size_t dim = x0.size();
  const std::size_t np = cfg.population ? std::max<std::size_t>(cfg.population, 4) : std::clamp<std::size_t>(4 * dim, 20, 80);
  const std::size_t polish_budget = cfg.max_evals / 10;
  const std::size_t de_budget = cfg.max_evals - polish_budget;

  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> pop(np, std::vector<double>(dim));
  std::vector<double> fit(np);
  pop[0] = x0;
  for (std::size_t i = 1; i < np; ++i) {
    for (double& e : pop[i]) e = unit(gen);
    project(pop[i]);
  }
  auto evaluate_all = [&](const std::vector<std::vector<double>>& xs, std::vector<double>& fs) {
    parallel_for(xs.size(), cfg.threads, [&](std::size_t i) { fs[i] = cost(xs[i]); });
  };
  fit[0] = out.cost;
  {
    std::vector<std::vector<double>> rest(pop.begin() + 1, pop.end());
    std::vector<double> f(rest.size());
    evaluate_all(rest, f);
    std::copy(f.begin(), f.end(), fit.begin() + 1);
    out.evaluations += rest.size();
  }

  std::vector<std::vector<double>> trial(np, std::vector<double>(dim));
  std::vector<double> trial_fit(np);
  while (out.evaluations + np <= de_budget) {
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t r[3];
      for (int k = 0; k < 3; ++k) {
        do {
          r[k] = static_cast<std::size_t>(gen() % np);
        } while (r[k] == i || (k > 0 && r[k] == r[0]) || (k > 1 && r[k] == r[1]));
      }
      const std::size_t jrand = static_cast<std::size_t>(gen() % dim);
      for (std::size_t j = 0; j < dim; ++j) {
        const bool cross = unit(gen) < cfg.crossover || j == jrand;
        trial[i][j] = cross ? pop[r[0]][j] + cfg.differential_weight * (pop[r[1]][j] - pop[r[2]][j]) : pop[i][j];
      }
      project(trial[i]);
    }
    evaluate_all(trial, trial_fit);
    out.evaluations += np;
    for (std::size_t i = 0; i < np; ++i)
      if (trial_fit[i] <= fit[i]) {
        pop[i] = trial[i];
        fit[i] = trial_fit[i];
      }
    const auto [lo, hi] = std::minmax_element(fit.begin(), fit.end());
    if (std::isfinite(*hi) && *hi - *lo <= cfg.tolerance * std::max(1.0, std::abs(*lo))) break;
  }
  const auto best = static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin());
  out.best = pop[best];
  out.cost = fit[best];

  // Compass search: try +/- step on every coordinate, halve the step on failure.
  double step = 0.05;
  const std::size_t limit = out.evaluations + polish_budget;
  while (step > 1e-9 && out.evaluations + 2 * dim <= limit) {
    bool improved = false;
    for (std::size_t j = 0; j < dim && out.evaluations + 2 <= limit; ++j)
      for (double dir : {1.0, -1.0}) {
        auto x = out.best;
        x[j] += dir * step;
        project(x);
        const double f = cost(x);
        ++out.evaluations;
        if (f < out.cost) {
          out.cost = f;
          out.best = std::move(x);
          improved = true;
          break;
        }
      }
    if (!improved) step *= 0.5;
  }
  return out;
}

struct StructureCheck {
  bool ok = true;
  std::vector<double> deviation;
  std::vector<Feasibility> status;
  int indeterminate = 0;
};

inline StructureCheck check_structure(const Visibilities& v, const ReadoutNoise& noise, double tol, int threads) {
  const auto n = static_cast<std::size_t>(v.size());
  StructureCheck c;
  c.deviation.assign(n, 0.0);
  c.status.assign(n, Feasibility::Feasible);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto f = jm_feasibility(v[static_cast<int>(i)], noise[static_cast<int>(i)]);
    c.status[i] = f.program.status;
    c.deviation[i] = f.structure_deviation;
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (c.status[i] == Feasibility::Indeterminate) ++c.indeterminate;
    c.ok = c.ok && c.status[i] == Feasibility::Feasible && c.deviation[i] <= tol;
  }
  return c;
}

inline double selected_cost(const Hamiltonian& h, const Visibilities& v, CostKind kind) {
  try {
    return kind == CostKind::Diag ? cost_diag(h, v) : cost_kappa_sum(h, v);
  } catch (const UnestimableTerm&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline double safe_jm_norm_sq(const Hamiltonian& h, const Visibilities& v) {
  try {
    return jm_norm_sq(h, v);
  } catch (const UnestimableTerm&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Search, rescale to a simulable parent per qubit, then check the parent structure.
inline OptimizeReport optimize_visibilities(const Hamiltonian& h, const ReadoutNoise& noise, const OptimizeConfig& cfg = {}) {
  if (noise.size() != h.qubits()) throw DimensionError("noise model and Hamiltonian differ in qubit count");
  const int n = h.qubits();
  OptimizeReport rep;
  rep.cost_kind = cfg.cost;

  const auto unbiased = Visibilities::unbiased(n);
  const detail::VisibilityCost cost(h, cfg.cost);
  rep.cost_unbiased = detail::selected_cost(h, unbiased, cfg.cost);

  // (a) search without the noise.
  const auto search = detail::differential_evolution(cost, detail::flatten(unbiased), cfg);
  rep.evaluations = search.evaluations;
  rep.v_search = detail::VisibilityCost::unflatten(search.best);
  rep.cost_search = detail::selected_cost(h, rep.v_search, cfg.cost);

  // (b) per-qubit rescaling for the noisy parent, for both the search result and the baseline.
  const auto base = rescale_to_feasible(unbiased, noise, cfg.threads);
  const auto fixed = rescale_to_feasible(rep.v_search, noise, cfg.threads);
  rep.v_unbiased = base.rescaled;
  rep.r_star = fixed.per_qubit;
  rep.rescale_status = fixed.status;
  rep.indeterminate_solves = base.indeterminate + fixed.indeterminate;

  // (c) structure of the parent at the repaired point; shrink uniformly if it fails.
  Visibilities v = fixed.rescaled;
  auto check = detail::check_structure(v, noise, cfg.structure_tolerance, cfg.threads);
  rep.indeterminate_solves += check.indeterminate;
  if (!check.ok) {
    std::vector<double> factors(static_cast<std::size_t>(n));
    auto shrink = [&](double s) {
      std::fill(factors.begin(), factors.end(), s);
      auto c = detail::check_structure(v.scaled(factors), noise, cfg.structure_tolerance, cfg.threads);
      rep.indeterminate_solves += c.indeterminate;
      return c.ok ? Feasibility::Feasible : Feasibility::Infeasible;
    };
    auto b = detail::bisect(shrink, 0.0, 1.0, detail::kBisectionTolerance);
    rep.structure_factor = b.lo;
    std::fill(factors.begin(), factors.end(), b.lo);
    v = v.scaled(factors);
    check = detail::check_structure(v, noise, cfg.structure_tolerance, cfg.threads);
  }
  rep.structure_deviation = check.deviation;
  rep.structure_status = check.status;

  rep.cost_before = detail::selected_cost(h, rep.v_unbiased, cfg.cost);
  rep.cost_after = detail::selected_cost(h, v, cfg.cost);
  if (rep.cost_after > rep.cost_before) {
    rep.kept_unbiased = true;
    v = rep.v_unbiased;
    rep.cost_after = rep.cost_before;
  }
  rep.v_opt = v;
  rep.jm_norm_sq_before = detail::safe_jm_norm_sq(h, rep.v_unbiased);
  rep.jm_norm_sq_after = detail::safe_jm_norm_sq(h, rep.v_opt);
  return rep;
}

struct StrategyRow {
  std::string name;
  double value = 0.0;
};

struct StrategyTable {
  std::vector<StrategyRow> rows;
  OptimizeReport report;
  /// Uniform per-qubit eta* from the parent program, used by the unbiased JM row.
  std::vector<SdpResult> sdp;
};

/// Worst-case second moments of the noisy shadow, noisy unbiased JM and optimized JM strategies.
inline StrategyTable compare_strategies(const Hamiltonian& h, const ReadoutNoise& noise, const OptimizeConfig& cfg = {}) {
  if (noise.size() != h.qubits()) throw DimensionError("noise model and Hamiltonian differ in qubit count");
  StrategyTable t;
  std::map<std::pair<double, double>, SdpResult> cache;
  std::vector<Vec3> uniform;
  for (const auto& m : noise.per_qubit()) {
    auto key = std::make_pair(m.alpha, m.beta);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, jm_sdp(m)).first;
    t.sdp.push_back(it->second);
    const double e = it->second.eta_star;
    uniform.push_back({e, e, e});
  }
  t.rows.push_back({"unbiased-CS-noisy", noisy_cs_norm_sq(h, noise)});
  t.rows.push_back({"unbiased-JM-noisy", detail::safe_jm_norm_sq(h, Visibilities(uniform))});
  t.report = optimize_visibilities(h, noise, cfg);
  t.rows.push_back({"JM-optimized", t.report.jm_norm_sq_after});
  return t;
}

inline std::string to_text(const StrategyTable& t) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "strategy" << "jm_norm_sq\n";
  for (const auto& r : t.rows) os << std::left << std::setw(20) << r.name << std::setprecision(9) << r.value << '\n';
  for (const auto& r : t.rows) os << "row." << r.name << '=' << std::setprecision(9) << r.value << '\n';
  return os.str();
}

}  // namespace jmest
