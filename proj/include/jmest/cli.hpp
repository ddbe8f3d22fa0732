#pragma once

// Command-line front end: subcommands estimate, variance, compat, optimize and
// sample. Reports are flat key=value records; every run writes a manifest
// sidecar with the command line, input digests, seed, version and timing.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jmest/compat.hpp"
#include "jmest/estimate.hpp"
#include "jmest/model.hpp"
#include "jmest/optimize.hpp"
#include "jmest/simcore.hpp"
#include "jmest/variance.hpp"

namespace jmest::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kThreadsEnv = "JMEST_THREADS";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kParse = 3, kIndeterminate = 4, kCapability = 5 };

/// Inconsistent or missing arguments detected after option parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 digest failed");
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct InputDigest {
  std::string role;
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<InputDigest> inputs;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string version = kVersion;
  std::string started_utc;
  double wall_clock_seconds = 0.0;
  int exit_code = 0;
  std::string error;

  std::string to_text() const {
    std::ostringstream os;
    os << "tool=jmest\nversion=" << version << "\ncommand=" << command << "\nargv=";
    for (std::size_t i = 0; i < argv.size(); ++i) os << (i ? " " : "") << argv[i];
    os << '\n';
    for (const auto& in : inputs) os << "input." << in.role << ".path=" << in.path << "\ninput." << in.role << ".sha256=" << in.sha256 << '\n';
    if (seed) os << "seed=" << *seed << '\n';
    os << "threads=" << threads << "\nstarted_utc=" << started_utc << "\nwall_clock_seconds=" << std::setprecision(9)
       << wall_clock_seconds << "\nexit_code=" << exit_code << '\n';
    if (!error.empty()) os << "error=" << error << '\n';
    return os.str();
  }
};

/// Ordered key=value record; reals carry 9 significant digits.
class Record {
 public:
  Record& put(const std::string& key, const std::string& value) {
    os_ << key << '=' << value << '\n';
    return *this;
  }
  Record& put(const std::string& key, const char* value) { return put(key, std::string(value)); }
  Record& put(const std::string& key, double value) { return put(key, real(value)); }
  template <class I>
    requires std::is_integral_v<I>
  Record& put(const std::string& key, I value) {
    return put(key, std::to_string(value));
  }
  Record& put(const std::string& key, bool value) { return put(key, std::string(value ? "true" : "false")); }
  Record& put(const std::string& key, const Vec3& v) { return put(key, real(v[0]) + ' ' + real(v[1]) + ' ' + real(v[2])); }
  Record& raw(const std::string& text) {
    os_ << text;
    return *this;
  }
  std::string str() const { return os_.str(); }

  static std::string real(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
  }

 private:
  std::ostringstream os_;
};

/// "unbiased", "uniform:<eta>", "axes:<ex>,<ey>,<ez>", "file:<path>" or a bare path.
inline Visibilities visibilities_from_spec(const std::string& spec, int n, RunManifest* manifest = nullptr) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(x)) throw ParseError("bad number '" + s + "' in visibilities spec");
    return x;
  };
  if (spec == "unbiased") return Visibilities::unbiased(n);
  if (spec.rfind("uniform:", 0) == 0) return Visibilities::uniform(n, number(spec.substr(8)));
  if (spec.rfind("axes:", 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(spec.substr(5));
    for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
    if (parts.size() != 3) throw ParseError("axes: needs three comma-separated values");
    const Vec3 e{number(parts[0]), number(parts[1]), number(parts[2])};
    return Visibilities(std::vector<Vec3>(static_cast<std::size_t>(n), e));
  }
  const std::string path = spec.rfind("file:", 0) == 0 ? spec.substr(5) : spec;
  const std::string text = read_file(path);
  if (manifest) manifest->inputs.push_back({"visibilities", path, sha256_hex(text)});
  std::istringstream in(text);
  return load_visibilities(in, n);
}

inline unsigned resolve_threads(std::optional<unsigned> flag) {
  unsigned t = 1;
  if (flag) {
    t = *flag;
  } else if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0') throw UsageError(std::string(kThreadsEnv) + " must be a non-negative integer");
    t = static_cast<unsigned>(v);
  }
  if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
  return t;
}

struct Options {
  std::string command;
  std::optional<unsigned> threads;
  std::string output;
  std::string manifest;

  std::string hamiltonian;
  std::string state;
  std::string visibilities = "unbiased";
  std::optional<std::size_t> shots;
  std::uint64_t seed = 1;
  std::string noise;
  bool identity = false;
  bool default_identity = false;
  std::optional<int> qubits;
  std::optional<double> epsilon, delta;
  std::optional<std::size_t> R, L;

  std::size_t max_evals = OptimizeConfig{}.max_evals;
  std::size_t population = 0;
  double differential_weight = OptimizeConfig{}.differential_weight;
  double crossover = OptimizeConfig{}.crossover;
  double tolerance = OptimizeConfig{}.tolerance;
  std::string cost = "diag";
  std::string save_visibilities;
  bool visibilities_given = false;
};

namespace detail {

struct Inputs {
  Options opt;
  RunManifest* manifest = nullptr;
  unsigned threads = 1;

  Hamiltonian hamiltonian() const {
    const std::string text = read_file(opt.hamiltonian);
    manifest->inputs.push_back({"hamiltonian", opt.hamiltonian, sha256_hex(text)});
    std::istringstream in(text);
    return load_hamiltonian(in);
  }

  std::optional<ReadoutNoise> noise(std::optional<int> n) const {
    if (opt.identity) {
      if (!n) throw UsageError("--identity needs a qubit count (--qubits or --hamiltonian)");
      return ReadoutNoise::identity(*n);
    }
    if (opt.noise.empty()) return std::nullopt;
    const std::string text = read_file(opt.noise);
    manifest->inputs.push_back({"noise", opt.noise, sha256_hex(text)});
    std::istringstream in(text);
    if (n) return load_noise(in, *n, opt.default_identity);
    if (opt.default_identity) throw UsageError("--default-identity needs a qubit count (--qubits or --hamiltonian)");
    return load_noise(in);
  }

  QuantumState state(int n) const {
    if (opt.state.rfind("file:", 0) == 0) {
      const std::string path = opt.state.substr(5);
      manifest->inputs.push_back({"state", path, sha256_hex(read_file(path))});
    }
    return state_from_spec(opt.state, n);
  }
};

inline MomParams resolve_mom(const Options& o, double var_bound, std::size_t& shots) {
  MomParams p;
  if (o.R || o.L) {
    if (!o.R || !o.L) throw UsageError("--R and --L must be given together");
    if (*o.R == 0 || *o.L == 0) throw UsageError("--R and --L must be positive");
    p = {*o.R, *o.L};
  } else if (o.epsilon || o.delta) {
    if (!o.epsilon || !o.delta) throw UsageError("--epsilon and --delta must be given together");
    p = mom_params_for(1, *o.delta, *o.epsilon, var_bound);
  } else {
    if (!o.shots) throw UsageError("--shots is required unless --R/--L or --epsilon/--delta are given");
    if (*o.shots == 0) throw UsageError("--shots must be positive");
    shots = *o.shots;
    return {1, *o.shots};
  }
  if (o.shots) {
    if (*o.shots == 0) throw UsageError("--shots must be positive");
    if (*o.shots < p.R * p.L)
      throw UsageError("--shots " + std::to_string(*o.shots) + " is below R*L = " + std::to_string(p.R * p.L));
    shots = *o.shots;
  } else {
    shots = p.R * p.L;
  }
  return p;
}

inline std::string cmd_estimate(const Inputs& in) {
  const auto& o = in.opt;
  const Hamiltonian h = in.hamiltonian();
  const int n = h.qubits();
  const QuantumState rho = in.state(n);
  const Visibilities v = visibilities_from_spec(o.visibilities, n, in.manifest);
  require_compatible(v);
  const auto noise = in.noise(n);
  const Visibilities v_est = noise ? effective_visibilities(v, *noise) : v;

  std::optional<double> bound;
  if (o.epsilon || o.delta) bound = jm_norm_sq(h, v_est);
  std::size_t shots = 0;
  const MomParams mom = resolve_mom(o, bound.value_or(0.0), shots);

  const auto records = sample_shots(rho, v, shots, RandomSource(o.seed), noise, SampleOptions{in.threads, 0});
  const HamiltonianEstimator est(h, v_est);
  std::vector<double> xs(records.size());
  std::transform(records.begin(), records.end(), xs.begin(), [&](const OutcomeRecord& r) { return est(r); });

  Record rec;
  rec.put("command", "estimate").put("qubits", n).put("terms", h.terms().size()).put("shots", shots).put("seed", o.seed);
  rec.put("noise", noise ? "file" : "none").put("R", mom.R).put("L", mom.L);
  if (bound) rec.put("variance_bound", *bound);
  rec.put("estimate", median_of_means(xs, mom)).put("mean", sample_mean(xs));
  if (xs.size() >= 2) {
    const double var = sample_variance(xs);
    rec.put("empirical_variance", var).put("standard_error", std::sqrt(var / static_cast<double>(xs.size())));
  }
  try {
    rec.put("analytic_variance", jm_variance(h, v_est, rho));
    double exact = h.identity_coefficient();
    for (const auto& [p, lambda] : h.pauli_terms()) exact += lambda * expectation(rho, p);
    rec.put("exact_expectation", exact);
  } catch (const CapabilityError&) {
  }
  return rec.str();
}

inline std::string cmd_variance(const Inputs& in) {
  const auto& o = in.opt;
  const Hamiltonian h = in.hamiltonian();
  const int n = h.qubits();
  Visibilities v = visibilities_from_spec(o.visibilities, n, in.manifest);
  require_compatible(v);
  const auto noise = in.noise(n);
  if (noise) v = effective_visibilities(v, *noise);
  std::optional<QuantumState> rho;
  if (!o.state.empty()) rho = in.state(n);
  const VarianceReport r = variance_report(h, v, rho);

  Record rec;
  rec.put("command", "variance").put("qubits", n).put("terms", h.terms().size());
  rec.put("jm_norm_sq", r.jm_norm_sq).put("cost_diag", r.cost_diag).put("cost_kappa_sum", cost_kappa_sum(h, v));
  if (r.expectation) rec.put("expectation", *r.expectation);
  if (r.exact_variance) rec.put("exact_variance", *r.exact_variance);
  if (r.state_free_bound) rec.put("state_free_bound", *r.state_free_bound);
  return rec.str();
}

inline std::string cmd_compat(const Inputs& in, int& exit_code) {
  const auto& o = in.opt;
  if (o.identity == !o.noise.empty()) throw UsageError("compat needs exactly one of --noise or --identity");
  std::optional<int> n = o.qubits;
  if (!n && o.identity) n = 1;
  const ReadoutNoise noise = *in.noise(n);

  std::map<std::pair<double, double>, SdpResult> cache;
  std::vector<const SdpResult*> per;
  for (const auto& m : noise.per_qubit()) {
    auto key = std::make_pair(m.alpha, m.beta);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, jm_sdp(m)).first;
    per.push_back(&it->second);
  }
  double eta_min = 1.0;
  for (const auto* r : per) {
    eta_min = std::min(eta_min, r->eta_star);
    if (r->status == Feasibility::Indeterminate) exit_code = kIndeterminate;
  }

  Record rec;
  rec.put("command", "compat").put("qubits", noise.size()).put("eta_star", eta_min);
  for (int q = 0; q < noise.size(); ++q) {
    const std::string pre = "qubit[" + std::to_string(q) + "].";
    rec.put(pre + "alpha", noise[q].alpha).put(pre + "beta", noise[q].beta);
    rec.raw(to_report(*per[static_cast<std::size_t>(q)], pre));
  }
  if (o.visibilities_given || !o.save_visibilities.empty()) {
    const Visibilities v = visibilities_from_spec(o.visibilities, noise.size(), in.manifest);
    const RescaleResult rs = rescale_to_feasible(v, noise, in.threads);
    rec.put("rescale.r_star", rs.r_star);
    for (int q = 0; q < noise.size(); ++q) {
      const std::string pre = "rescale.qubit[" + std::to_string(q) + "].";
      rec.put(pre + "factor", rs.per_qubit[static_cast<std::size_t>(q)]).put(pre + "visibilities", rs.rescaled[q]);
      rec.put(pre + "status", to_string(rs.status[static_cast<std::size_t>(q)]));
      if (rs.status[static_cast<std::size_t>(q)] == Feasibility::Indeterminate) exit_code = kIndeterminate;
    }
    if (!o.save_visibilities.empty()) {
      std::ofstream f(o.save_visibilities);
      if (!f) throw Error("cannot write " + o.save_visibilities);
      write_visibilities(f, rs.rescaled);
    }
  }
  return rec.str();
}

inline std::string cmd_optimize(const Inputs& in, int& exit_code) {
  const auto& o = in.opt;
  if (o.identity && !o.noise.empty()) throw UsageError("--noise and --identity are mutually exclusive");
  const Hamiltonian h = in.hamiltonian();
  const int n = h.qubits();
  const ReadoutNoise noise = in.noise(n).value_or(ReadoutNoise::identity(n));

  OptimizeConfig cfg;
  cfg.max_evals = o.max_evals;
  cfg.population = o.population;
  cfg.differential_weight = o.differential_weight;
  cfg.crossover = o.crossover;
  cfg.tolerance = o.tolerance;
  cfg.seed = o.seed;
  cfg.cost = cost_kind_from_string(o.cost);
  cfg.threads = in.threads;
  const StrategyTable t = compare_strategies(h, noise, cfg);
  const OptimizeReport& r = t.report;

  Record rec;
  rec.put("command", "optimize").put("qubits", n).put("terms", h.terms().size()).put("seed", o.seed);
  rec.put("cost_kind", to_string(r.cost_kind)).put("evaluations", r.evaluations);
  rec.put("cost_unbiased", r.cost_unbiased).put("cost_search", r.cost_search);
  rec.put("cost_before", r.cost_before).put("cost_after", r.cost_after);
  rec.put("jm_norm_sq_before", r.jm_norm_sq_before).put("jm_norm_sq_after", r.jm_norm_sq_after);
  rec.put("structure_factor", r.structure_factor).put("kept_unbiased", r.kept_unbiased);
  rec.put("indeterminate_solves", r.indeterminate_solves);
  for (int q = 0; q < n; ++q) {
    const auto k = static_cast<std::size_t>(q);
    const std::string pre = "qubit[" + std::to_string(q) + "].";
    rec.put(pre + "v_opt", r.v_opt[q]).put(pre + "v_search", r.v_search[q]);
    rec.put(pre + "r_star", r.r_star[k]).put(pre + "rescale_status", to_string(r.rescale_status[k]));
    rec.put(pre + "structure_deviation", r.structure_deviation[k]).put(pre + "structure_status", to_string(r.structure_status[k]));
    rec.put(pre + "eta_star", t.sdp[k].eta_star);
    if (r.rescale_status[k] == Feasibility::Indeterminate || r.structure_status[k] == Feasibility::Indeterminate ||
        t.sdp[k].status == Feasibility::Indeterminate)
      exit_code = kIndeterminate;
  }
  rec.raw(to_text(t));
  if (!o.save_visibilities.empty()) {
    std::ofstream f(o.save_visibilities);
    if (!f) throw Error("cannot write " + o.save_visibilities);
    write_visibilities(f, r.v_opt);
  }
  return rec.str();
}

inline std::string cmd_sample(const Inputs& in) {
  const auto& o = in.opt;
  std::optional<int> n = o.qubits;
  if (!o.hamiltonian.empty()) {
    const int hn = in.hamiltonian().qubits();
    if (n && *n != hn) throw UsageError("--qubits disagrees with the Hamiltonian");
    n = hn;
  }
  if (!n) throw UsageError("sample needs --qubits or --hamiltonian");
  if (!o.shots || *o.shots == 0) throw UsageError("--shots must be positive");
  const QuantumState rho = in.state(*n);
  const Visibilities v = visibilities_from_spec(o.visibilities, *n, in.manifest);
  const auto noise = in.noise(*n);
  const auto records = sample_shots(rho, v, *o.shots, RandomSource(o.seed), noise, SampleOptions{in.threads, 0});

  std::string s;
  s.reserve(records.size() * static_cast<std::size_t>(*n) * 9 + 16);
  for (int q = 1; q <= *n; ++q) {
    const std::string k = std::to_string(q);
    s += (q > 1 ? ",x" : "x") + k + ",y" + k + ",z" + k;
  }
  s += '\n';
  for (const auto& r : records) {
    for (int q = 0; q < *n; ++q)
      for (std::size_t a = 0; a < 3; ++a) {
        if (q > 0 || a > 0) s += ',';
        s += r.triples[static_cast<std::size_t>(q)][a] > 0 ? "1" : "-1";
      }
    s += '\n';
  }
  return s;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace detail

/// Runs one command line (without the program name). Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Joint-measurement estimation of Pauli observables and Hamiltonian energies", "jmest"};
  app.set_version_flag("--version", kVersion);
  auto* config = app.set_config("--config", "", "TOML-style defaults; command-line flags take precedence");
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--threads", o.threads, "Worker cap (0 = all cores; default from " + std::string(kThreadsEnv) + " or 1)");
  app.add_option("--output", o.output, "Write the report here instead of stdout");
  app.add_option("--manifest", o.manifest, "Manifest path (default <output>.manifest or <command>.manifest)");

  auto hamiltonian = [&](CLI::App* s, bool required) {
    auto* opt = s->add_option("--hamiltonian", o.hamiltonian, "Hamiltonian file");
    if (required) opt->required();
  };
  auto noise = [&](CLI::App* s) {
    s->add_option("--noise", o.noise, "Readout noise file");
    s->add_flag("--identity", o.identity, "Noiseless readout");
    s->add_flag("--default-identity", o.default_identity, "Qubits missing from the noise file get noiseless readout");
  };
  auto vis = [&](CLI::App* s) {
    s->add_option("--visibilities", o.visibilities, "unbiased | uniform:<eta> | axes:<ex>,<ey>,<ez> | file:<path>");
  };

  auto* est = app.add_subcommand("estimate", "Simulate shots and estimate the energy");
  hamiltonian(est, true);
  est->add_option("--state", o.state, "zero | plus | ghz | maximally-mixed | haar-random[:seed] | <bits> | file:<path>")->required();
  vis(est);
  noise(est);
  est->add_option("--shots", o.shots, "Number of shots");
  est->add_option("--seed", o.seed, "Random seed");
  auto* eps = est->add_option("--epsilon", o.epsilon, "Target accuracy for median of means");
  auto* del = est->add_option("--delta", o.delta, "Failure probability for median of means");
  auto* rr = est->add_option("--R", o.R, "Number of groups");
  auto* ll = est->add_option("--L", o.L, "Group size");
  eps->excludes(rr)->excludes(ll);
  del->excludes(rr)->excludes(ll);

  auto* var = app.add_subcommand("variance", "Variance analysis of the joint-measurement estimator");
  hamiltonian(var, true);
  vis(var);
  noise(var);
  var->add_option("--state", o.state, "Optional state; enables the exact variance");

  auto* com = app.add_subcommand("compat", "Largest unbiased visibility under readout noise");
  noise(com);
  com->add_option("--qubits", o.qubits, "Qubit count")->check(CLI::PositiveNumber);
  vis(com);
  com->add_option("--save-visibilities", o.save_visibilities, "Write the rescaled visibilities here");

  auto* opt = app.add_subcommand("optimize", "Optimize visibilities and compare strategies");
  hamiltonian(opt, true);
  noise(opt);
  opt->add_option("--seed", o.seed, "Random seed");
  opt->add_option("--max-evals", o.max_evals, "Cost-evaluation budget");
  opt->add_option("--population", o.population, "Population size (0 = automatic)");
  opt->add_option("--differential-weight", o.differential_weight, "Mutation weight F");
  opt->add_option("--crossover", o.crossover, "Crossover rate CR")->check(CLI::Range(0.0, 1.0));
  opt->add_option("--tolerance", o.tolerance, "Stopping tolerance on population spread");
  opt->add_option("--cost", o.cost, "diag | kappa_sum")->check(CLI::IsMember({"diag", "kappa_sum"}));
  opt->add_option("--save-visibilities", o.save_visibilities, "Write the optimized visibilities here");

  auto* smp = app.add_subcommand("sample", "Dump raw outcome records as CSV");
  hamiltonian(smp, false);
  smp->add_option("--qubits", o.qubits, "Qubit count")->check(CLI::PositiveNumber);
  smp->add_option("--state", o.state, "State (same forms as for estimate)")->required();
  vis(smp);
  noise(smp);
  smp->add_option("--shots", o.shots, "Number of shots")->required();
  smp->add_option("--seed", o.seed, "Random seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const auto sub = app.get_subcommands().front();
  o.command = sub->get_name();
  o.visibilities_given = sub->get_option_no_throw("--visibilities") != nullptr && sub->count("--visibilities") > 0;
  RunManifest manifest;
  manifest.command = o.command;
  manifest.argv = args;
  manifest.started_utc = detail::utc_now();
  if (o.command == "estimate" || o.command == "optimize" || o.command == "sample") manifest.seed = o.seed;
  const auto t0 = std::chrono::steady_clock::now();

  int code = kOk;
  std::string report;
  try {
    detail::Inputs in{o, &manifest, resolve_threads(o.threads)};
    manifest.threads = in.threads;
    if (config->count() > 0) {
      const auto cpath = config->as<std::string>();
      manifest.inputs.push_back({"config", cpath, sha256_hex(read_file(cpath))});
    }
    if (o.command == "estimate") {
      report = detail::cmd_estimate(in);
    } else if (o.command == "variance") {
      report = detail::cmd_variance(in);
    } else if (o.command == "compat") {
      report = detail::cmd_compat(in, code);
    } else if (o.command == "optimize") {
      report = detail::cmd_optimize(in, code);
    } else {
      report = detail::cmd_sample(in);
    }
  } catch (const UsageError& e) {
    code = kUsage, manifest.error = e.what();
  } catch (const DomainError& e) {
    code = kUsage, manifest.error = e.what();
  } catch (const ParseError& e) {
    code = kParse, manifest.error = e.what();
  } catch (const DimensionError& e) {
    code = kParse, manifest.error = e.what();
  } catch (const IncompatibleVisibilities& e) {
    code = kParse, manifest.error = e.what();
  } catch (const SolverIndeterminate& e) {
    code = kIndeterminate, manifest.error = e.what();
  } catch (const CapabilityError& e) {
    code = kCapability, manifest.error = e.what();
  } catch (const std::exception& e) {
    code = kFailure, manifest.error = e.what();
  }
  if (!manifest.error.empty()) err << "jmest " << o.command << ": " << manifest.error << '\n';

  if (!report.empty()) {
    if (o.output.empty()) {
      out << report;
    } else {
      std::ofstream f(o.output, std::ios::binary);
      f << report;
      if (!f) {
        err << "jmest: cannot write " << o.output << '\n';
        if (code == kOk) code = kFailure;
      }
    }
  }

  manifest.exit_code = code;
  manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string mpath = !o.manifest.empty() ? o.manifest : !o.output.empty() ? o.output + ".manifest" : o.command + ".manifest";
  std::ofstream mf(mpath);
  mf << manifest.to_text();
  if (!mf) {
    err << "jmest: cannot write manifest " << mpath << '\n';
    if (code == kOk) code = kFailure;
  }
  return code;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace jmest::cli
