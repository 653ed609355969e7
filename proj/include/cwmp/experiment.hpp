#pragma once

// Experiment driver: flat key=value configs, single runs and sparsity sweeps
// written as CSV, a JSON-driven battery of theory checks, and partition
// statistics.
//
// Round CSV (one per run, rounds_<method>_f<fraction>_seed<seed>.csv):
//   round,accuracy,loss,payload,round_energy,cumulative_energy
// Pareto CSV (pareto.csv):
//   method,fraction,seed,final_accuracy,total_energy
//   per-(method, fraction) mean rows carry seed "mean" when repetitions > 1.
// Sparse update dump (updates_<...>.csv):
//   round,client,index,value       ascending index within a (round, client)

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cwmp/dataset.hpp"
#include "cwmp/errors.hpp"
#include "cwmp/federation.hpp"
#include "cwmp/projection.hpp"
#include "cwmp/theory_mc.hpp"
#include "json.hpp"

namespace cwmp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitAssertion = 4;

struct ExperimentPlan {
  FederationConfig base;
  SyntheticTaskSpec task;
  std::string train_csv;  // when set, replaces the synthetic task
  std::string eval_csv;
  std::vector<double> fractions{0.01, 0.05, 0.10, 0.20};
  std::vector<Method> methods{Method::TopK, Method::Cwmp};
  std::size_t repetitions = 3;
  std::string out_dir = "out";

  void validate() const {
    base.validate();
    if (fractions.empty()) throw ConfigError("sweep needs at least one fraction");
    for (double f : fractions)
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep fractions must lie in (0, 1]");
    if (methods.empty()) throw ConfigError("sweep needs at least one method");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (train_csv.empty() != eval_csv.empty()) throw ConfigError("train_csv and eval_csv must be given together");
  }
};

struct ParetoPoint {
  Method method = Method::TopK;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  double total_energy = 0.0;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const auto x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

inline std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// Round-trip precision, for logged gradient values.
inline std::string fmt_exact(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// Applies one key=value setting to the plan. Unknown keys are errors.
inline void apply_setting(ExperimentPlan& plan, const std::string& key, const std::string& value) {
  using detail::to_double;
  using detail::to_uint;
  auto& c = plan.base;
  auto& t = plan.task;
  if (key == "num_clients") c.num_clients = to_uint(key, value);
  else if (key == "rounds") c.rounds = to_uint(key, value);
  else if (key == "learning_rate") c.learning_rate = to_double(key, value);
  else if (key == "momentum") c.momentum = to_double(key, value);
  else if (key == "batch_size") c.batch_size = to_uint(key, value);
  else if (key == "local_steps") c.local_steps = to_uint(key, value);
  else if (key == "sparsity_fraction") c.sparsity_fraction = to_double(key, value);
  else if (key == "method") c.method = parse_method(value);
  else if (key == "dirichlet_alpha") c.dirichlet_alpha = to_double(key, value);
  else if (key == "seed") c.seed = to_uint(key, value);
  else if (key == "classifier_cost") c.classifier_cost = to_double(key, value);
  else if (key == "feature_cost") c.feature_cost = to_double(key, value);
  else if (key == "hidden_width") c.hidden_width = to_uint(key, value);
  else if (key == "energy_budget") c.energy_budget = to_double(key, value);
  else if (key == "client_weights") {
    c.client_weights.clear();
    for (const auto& w : detail::split_list(value)) c.client_weights.push_back(to_double(key, w));
  } else if (key == "num_classes") t.num_classes = to_uint(key, value);
  else if (key == "input_dim") t.input_dim = to_uint(key, value);
  else if (key == "train_samples") t.train_samples = to_uint(key, value);
  else if (key == "eval_samples") t.eval_samples = to_uint(key, value);
  else if (key == "separation") t.separation = to_double(key, value);
  else if (key == "clusters_per_class") t.clusters_per_class = to_uint(key, value);
  else if (key == "data_seed") t.seed = to_uint(key, value);
  else if (key == "train_csv") plan.train_csv = value;
  else if (key == "eval_csv") plan.eval_csv = value;
  else if (key == "sweep_fractions") {
    plan.fractions.clear();
    for (const auto& f : detail::split_list(value)) plan.fractions.push_back(to_double(key, f));
  } else if (key == "methods") {
    plan.methods.clear();
    for (const auto& m : detail::split_list(value)) plan.methods.push_back(parse_method(m));
  } else if (key == "repetitions") plan.repetitions = to_uint(key, value);
  else if (key == "out") plan.out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

/// key = value lines; '#' starts a comment.
inline ExperimentPlan parse_plan(std::istream& in, ExperimentPlan plan = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    apply_setting(plan, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return plan;
}

inline ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_plan(in);
}

inline std::pair<Dataset, Dataset> load_task(const ExperimentPlan& plan) {
  if (plan.train_csv.empty()) return make_synthetic_task(plan.task);
  auto train = load_csv(plan.train_csv);
  auto eval = load_csv(plan.eval_csv);
  const auto classes = std::max(train.num_classes, eval.num_classes);
  train.num_classes = eval.num_classes = classes;
  return {std::move(train), std::move(eval)};
}

inline std::string round_csv_name(Method m, double fraction, std::uint64_t seed) {
  return "rounds_" + method_name(m) + "_f" + detail::fmt(fraction) + "_seed" + std::to_string(seed) + ".csv";
}

inline void write_round_csv(std::ostream& out, const std::vector<RoundMetrics>& rows) {
  out << "round,accuracy,loss,payload,round_energy,cumulative_energy\n";
  for (const auto& r : rows)
    out << r.round << ',' << detail::fmt(r.accuracy) << ',' << detail::fmt(r.loss) << ',' << r.payload << ','
        << detail::fmt(r.round_energy) << ',' << detail::fmt(r.cumulative_energy) << '\n';
}

inline void write_sparse_update(std::ostream& out, std::size_t round, std::size_t client, const SparseUpdate& u) {
  for (std::size_t i = 0; i < u.indices.size(); ++i)
    out << round << ',' << client << ',' << u.indices[i] << ',' << detail::fmt_exact(u.values[i]) << '\n';
}

inline void write_pareto_csv(std::ostream& out, const std::vector<ParetoPoint>& points, std::size_t repetitions) {
  out << "method,fraction,seed,final_accuracy,total_energy\n";
  for (const auto& p : points)
    out << method_name(p.method) << ',' << detail::fmt(p.fraction) << ',' << p.seed << ','
        << detail::fmt(p.final_accuracy) << ',' << detail::fmt(p.total_energy) << '\n';
  if (repetitions < 2) return;
  // mean rows, in first-appearance order of (method, fraction)
  std::vector<std::pair<Method, double>> keys;
  for (const auto& p : points)
    if (std::find(keys.begin(), keys.end(), std::make_pair(p.method, p.fraction)) == keys.end())
      keys.emplace_back(p.method, p.fraction);
  for (const auto& [m, f] : keys) {
    double acc = 0.0, energy = 0.0;
    std::size_t n = 0;
    for (const auto& p : points)
      if (p.method == m && p.fraction == f) {
        acc += p.final_accuracy;
        energy += p.total_energy;
        ++n;
      }
    out << method_name(m) << ',' << detail::fmt(f) << ",mean," << detail::fmt(acc / static_cast<double>(n)) << ','
        << detail::fmt(energy / static_cast<double>(n)) << '\n';
  }
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("write failed for " + path.string());
}

struct SingleRunResult {
  std::vector<RoundMetrics> rounds;
  std::filesystem::path csv_path;
};

/// One federation run for (plan.base with method/fraction/seed overridden);
/// writes its round CSV into plan.out_dir. With dump_updates the transmitted
/// sparse updates are written alongside.
inline SingleRunResult run_single(const ExperimentPlan& plan, Method method, double fraction, std::uint64_t seed,
                                  const Dataset& train, const Dataset& eval, bool dump_updates = false) {
  FederationConfig cfg = plan.base;
  cfg.method = method;
  cfg.sparsity_fraction = fraction;
  cfg.seed = seed;
  std::ostringstream updates;
  UpdateObserver observer;
  if (dump_updates) {
    updates << "round,client,index,value\n";
    observer = [&](std::size_t t, std::size_t c, const PruningMask&, const SparseUpdate& u) {
      write_sparse_update(updates, t, c, u);
    };
  }
  SingleRunResult res;
  res.rounds = run_federation(cfg, train, eval, observer);
  std::ostringstream csv;
  write_round_csv(csv, res.rounds);
  const auto name = round_csv_name(method, fraction, seed);
  res.csv_path = std::filesystem::path(plan.out_dir) / name;
  write_file(res.csv_path, csv.str());
  if (dump_updates) write_file(std::filesystem::path(plan.out_dir) / ("updates_" + name.substr(7)), updates.str());
  return res;
}

/// Runs every (method, fraction, seed) entry; seeds are base.seed,
/// base.seed + 1, ... Writes pareto.csv once all entries finish. If an entry
/// fails, the completed rows are still written and the error is rethrown.
inline std::vector<ParetoPoint> run_pareto_sweep(const ExperimentPlan& plan) {
  plan.validate();
  const auto [train, eval] = load_task(plan);
  std::vector<ParetoPoint> points;
  const auto flush = [&] {
    std::ostringstream csv;
    write_pareto_csv(csv, points, plan.repetitions);
    write_file(std::filesystem::path(plan.out_dir) / "pareto.csv", csv.str());
  };
  try {
    for (auto m : plan.methods)
      for (double f : plan.fractions)
        for (std::size_t r = 0; r < plan.repetitions; ++r) {
          const std::uint64_t seed = plan.base.seed + r;
          const auto res = run_single(plan, m, f, seed, train, eval);
          points.push_back({m, f, seed, res.rounds.back().accuracy, res.rounds.back().cumulative_energy});
        }
  } catch (...) {
    flush();
    throw;
  }
  flush();
  return points;
}

/// client,samples,class_0,...,class_{C-1}
inline std::string partition_stats(const ExperimentPlan& plan) {
  plan.validate();
  const auto [train, eval] = load_task(plan);
  (void)eval;
  const auto clients =
      partition_dirichlet(train, plan.base.num_clients, plan.base.dirichlet_alpha, Rng(plan.base.seed).split(1).seed());
  std::ostringstream out;
  out << "client,samples";
  for (std::size_t c = 0; c < train.num_classes; ++c) out << ",class_" << c;
  out << '\n';
  for (std::size_t k = 0; k < clients.size(); ++k) {
    out << k << ',' << clients[k].size();
    for (auto n : clients[k].label_histogram) out << ',' << n;
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Theory suite

inline DistributionSpec distribution_from_json(const nlohmann::json& j) {
  DistributionSpec s;
  s.kind = DistributionSpec::parse_kind(j.at("kind").get<std::string>());
  s.params = j.at("params").get<std::vector<double>>();
  return s;
}

inline nlohmann::json to_json(const McReport& r) {
  nlohmann::json phi = nlohmann::json::array();
  for (const auto& p : r.phi_estimates) phi.push_back({{"cost", p.cost}, {"phi", p.phi}, {"stderr", p.std_error}});
  return {{"trials", r.trials},
          {"d", r.d},
          {"k", r.k},
          {"mean_energy_topk", r.mean_energy_topk},
          {"mean_energy_cwmp", r.mean_energy_cwmp},
          {"stderr_topk", r.stderr_topk},
          {"stderr_cwmp", r.stderr_cwmp},
          {"expected_energy_topk", r.expected_energy_topk},
          {"equal_energy_trials", r.equal_energy_trials},
          {"equal_mask_trials", r.equal_mask_trials},
          {"cov_cost_selected", r.cov_cost_selected},
          {"stderr_cov", r.stderr_cov},
          {"phi_estimates", phi}};
}

/// Built-in battery used when no suite file is given.
inline nlohmann::json default_theory_suite() {
  return nlohmann::json::parse(R"({
    "seed": 2024,
    "energy_scenarios": [
      {"name": "half-normal/two-point", "magnitudes": {"kind": "half-normal", "params": [1.0]},
       "costs": {"kind": "two-point", "params": [1.0, 5.0, 0.5]}, "d": 200, "k": 20, "trials": 20000,
       "checks": ["baseline", "dominance", "association"]},
      {"name": "exponential/uniform", "magnitudes": {"kind": "exponential", "params": [1.0]},
       "costs": {"kind": "uniform-continuous", "params": [1.0, 5.0]}, "d": 200, "k": 20, "trials": 20000,
       "checks": ["baseline", "dominance", "association"]},
      {"name": "uniform-cost", "magnitudes": {"kind": "half-normal", "params": [1.0]},
       "costs": {"kind": "two-point", "params": [2.0, 2.0, 1.0]}, "d": 200, "k": 20, "trials": 5000,
       "checks": ["equality"]}
    ],
    "phi_scenarios": [
      {"name": "two-block", "magnitudes": {"kind": "half-normal", "params": [1.0]}, "levels": [1.0, 5.0],
       "d": 200, "k": 20, "trials": 20000, "expect": "decreasing"},
      {"name": "single-level", "magnitudes": {"kind": "half-normal", "params": [1.0]}, "levels": [3.0, 3.0],
       "d": 200, "k": 20, "trials": 20000, "expect": "flat"}
    ],
    "kkt": {"instances": 2000, "max_d": 12},
    "kkt_fixtures": [
      {"name": "three-item", "magnitudes": [6, 4, 3], "costs": [3, 4, 1], "budget": 4,
       "m": [1, 0, 1], "lambda": 2, "alpha": [0, 4, 0], "beta": [0, 0, 1]}
    ]
  })");
}

struct TheoryCheck {
  std::string name;
  bool passed = false;
  nlohmann::json details;
};

inline nlohmann::json check_json(const TheoryCheck& c) {
  return {{"name", c.name}, {"passed", c.passed}, {"details", c.details}};
}

/// Runs the suite; the report lists every check and "passed" is true iff all
/// of them pass.
inline nlohmann::json run_theory_suite(const nlohmann::json& suite) {
  std::vector<TheoryCheck> checks;
  const std::uint64_t seed = suite.value("seed", std::uint64_t{0});
  std::uint64_t stream = 0;

  for (const auto& sc : suite.value("energy_scenarios", nlohmann::json::array())) {
    const auto name = sc.at("name").get<std::string>();
    const auto rep = estimate_expected_energies(distribution_from_json(sc.at("magnitudes")),
                                                distribution_from_json(sc.at("costs")), sc.at("d").get<std::size_t>(),
                                                sc.at("k").get<std::size_t>(), sc.at("trials").get<std::size_t>(),
                                                Rng(seed).split(stream++).seed());
    const auto report = to_json(rep);
    for (const auto& what : sc.at("checks")) {
      const auto kind = what.get<std::string>();
      TheoryCheck c{name + ": " + kind, false, report};
      if (kind == "baseline") {
        c.passed = std::fabs(rep.mean_energy_topk - rep.expected_energy_topk) <= 3.0 * rep.stderr_topk;
      } else if (kind == "dominance") {
        c.passed = rep.mean_energy_topk - rep.mean_energy_cwmp > 3.0 * rep.combined_stderr();
      } else if (kind == "association") {
        c.passed = rep.cov_cost_selected <= 3.0 * rep.stderr_cov;
      } else if (kind == "equality") {
        c.passed = rep.equal_energy_trials == rep.trials && rep.mean_energy_topk == rep.mean_energy_cwmp;
      } else {
        throw ConfigError("unknown energy check '" + kind + "'");
      }
      checks.push_back(std::move(c));
    }
  }

  for (const auto& sc : suite.value("phi_scenarios", nlohmann::json::array())) {
    const auto name = sc.at("name").get<std::string>();
    const auto d = sc.at("d").get<std::size_t>();
    const auto k = sc.at("k").get<std::size_t>();
    const auto phi =
        estimate_phi_monotonicity(distribution_from_json(sc.at("magnitudes")), sc.at("levels").get<std::vector<double>>(),
                                  d, k, sc.at("trials").get<std::size_t>(), Rng(seed).split(stream++).seed());
    nlohmann::json details = nlohmann::json::array();
    for (const auto& p : phi) details.push_back({{"cost", p.cost}, {"phi", p.phi}, {"stderr", p.std_error}});
    const auto expect = sc.at("expect").get<std::string>();
    TheoryCheck c{name + ": " + expect, true, details};
    if (expect == "decreasing") {
      for (std::size_t i = 1; i < phi.size(); ++i) {
        const double se = std::sqrt(phi[i].std_error * phi[i].std_error + phi[i - 1].std_error * phi[i - 1].std_error);
        c.passed = c.passed && phi[i - 1].phi - phi[i].phi > 3.0 * se;
      }
    } else if (expect == "flat") {
      const double target = static_cast<double>(k) / static_cast<double>(d);
      for (const auto& p : phi) c.passed = c.passed && std::fabs(p.phi - target) <= 4.0 * p.std_error;
    } else {
      throw ConfigError("unknown phi expectation '" + expect + "'");
    }
    checks.push_back(std::move(c));
  }

  if (suite.contains("kkt")) {
    const auto& kj = suite.at("kkt");
    const auto n = kj.at("instances").get<std::size_t>();
    const auto max_d = kj.at("max_d").get<std::size_t>();
    if (max_d < 1 || max_d > kMaxExactDimension) throw ConfigError("kkt.max_d must lie in [1, 20]");
    std::size_t kkt_ok = 0, vertex_ok = 0, sandwich_ok = 0;
    Rng rng = Rng(seed).split(stream++);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t d = 1 + static_cast<std::size_t>(rng() % max_d);
      KnapsackInstance inst;
      double total = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        inst.magnitudes.push_back(std::fabs(rng.normal()));
        inst.costs.push_back(0.1 + 4.9 * rng.uniform());
        total += inst.costs.back();
      }
      inst.e_budget = total * (0.05 + 0.9 * rng.uniform());
      const auto [sol, cert] = greedy_fractional(inst);
      if (verify_kkt(inst, sol, cert)) ++kkt_ok;
      std::size_t fractional = 0;
      for (double m : sol.m) fractional += (m > 0.0 && m < 1.0) ? 1 : 0;
      if (fractional <= 1) ++vertex_ok;
      const auto exact = exact_01(inst);
      const double gmax = *std::max_element(inst.magnitudes.begin(), inst.magnitudes.end());
      if (exact.objective <= sol.objective + 1e-9 && sol.objective <= exact.objective + gmax + 1e-9) ++sandwich_ok;
    }
    checks.push_back({"kkt: greedy certificates verify", kkt_ok == n, {{"passed", kkt_ok}, {"instances", n}}});
    checks.push_back({"kkt: at most one fractional coordinate", vertex_ok == n, {{"passed", vertex_ok}, {"instances", n}}});
    checks.push_back({"kkt: exact <= greedy <= exact + max|g|", sandwich_ok == n, {{"passed", sandwich_ok}, {"instances", n}}});
  }

  for (const auto& fx : suite.value("kkt_fixtures", nlohmann::json::array())) {
    KnapsackInstance inst;
    inst.magnitudes = fx.at("magnitudes").get<std::vector<double>>();
    inst.costs = fx.at("costs").get<std::vector<double>>();
    inst.e_budget = fx.at("budget").get<double>();
    FractionalSolution sol;
    sol.m = fx.at("m").get<std::vector<double>>();
    KktCertificate cert;
    cert.lambda = fx.at("lambda").get<double>();
    cert.alpha = fx.at("alpha").get<std::vector<double>>();
    cert.beta = fx.at("beta").get<std::vector<double>>();
    const auto verdict = verify_kkt(inst, sol, cert);
    checks.push_back({"kkt fixture: " + fx.at("name").get<std::string>(), verdict.ok, {{"reasons", verdict.reasons}}});
  }

  nlohmann::json report;
  report["checks"] = nlohmann::json::array();
  bool all = true;
  for (const auto& c : checks) {
    report["checks"].push_back(check_json(c));
    all = all && c.passed;
  }
  report["passed"] = all;
  return report;
}

}  // namespace cwmp
