// cwmp_cli: run, sweep, verify, partition-stats.
//
// Exit codes: 0 ok, 1 unexpected error, 2 config/input error,
// 3 I/O error, 4 a theory check failed.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cwmp/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> method;
  std::optional<double> sparsity;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--method", o.method, "topk | cwmp | random-k | dense | budgeted-cwmp");
  cmd->add_option("--sparsity", o.sparsity, "kept fraction in (0, 1]");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--rounds", o.rounds, "communication rounds");
  cmd->add_option("--out", o.out, "output directory");
}

cwmp::ExperimentPlan build_plan(const Overrides& o) {
  cwmp::ExperimentPlan plan = o.config.empty() ? cwmp::ExperimentPlan{} : cwmp::load_plan(o.config);
  if (o.method) {
    plan.base.method = cwmp::parse_method(*o.method);
    plan.methods = {plan.base.method};
  }
  if (o.sparsity) {
    plan.base.sparsity_fraction = *o.sparsity;
    plan.fractions = {*o.sparsity};
  }
  if (o.seed) plan.base.seed = *o.seed;
  if (o.rounds) plan.base.rounds = *o.rounds;
  if (o.out) plan.out_dir = *o.out;
  plan.validate();
  return plan;
}

int cmd_run(const Overrides& o, bool dump_updates) {
  const auto plan = build_plan(o);
  const auto [train, eval] = cwmp::load_task(plan);
  const auto res = cwmp::run_single(plan, plan.base.method, plan.base.sparsity_fraction, plan.base.seed, train, eval,
                                    dump_updates);
  const auto& last = res.rounds.back();
  std::cout << res.csv_path.string() << ": final accuracy " << cwmp::detail::fmt(last.accuracy) << ", total energy "
            << cwmp::detail::fmt(last.cumulative_energy) << '\n';
  return cwmp::kExitOk;
}

int cmd_sweep(const Overrides& o) {
  const auto plan = build_plan(o);
  const auto points = cwmp::run_pareto_sweep(plan);
  std::cout << points.size() << " runs written to " << (std::filesystem::path(plan.out_dir) / "pareto.csv").string()
            << '\n';
  return cwmp::kExitOk;
}

int cmd_verify(const std::string& spec_path, const std::optional<std::string>& out) {
  nlohmann::json suite;
  if (spec_path.empty()) {
    suite = cwmp::default_theory_suite();
  } else {
    std::ifstream in(spec_path);
    if (!in) throw cwmp::IoError("cannot open suite " + spec_path);
    try {
      suite = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw cwmp::ConfigError(std::string("malformed suite: ") + e.what());
    }
  }
  nlohmann::json report;
  try {
    report = cwmp::run_theory_suite(suite);
  } catch (const nlohmann::json::exception& e) {
    throw cwmp::ConfigError(std::string("invalid suite: ") + e.what());
  }
  const auto text = report.dump(2) + "\n";
  if (out)
    cwmp::write_file(std::filesystem::path(*out) / "theory_report.json", text);
  else
    std::cout << text;
  bool ok = true;
  for (const auto& c : report["checks"]) {
    if (!c["passed"].get<bool>()) {
      ok = false;
      std::cerr << "FAILED: " << c["name"].get<std::string>();
      if (c["details"].contains("reasons"))
        for (const auto& r : c["details"]["reasons"]) std::cerr << "\n  " << r.get<std::string>();
      std::cerr << '\n';
    }
  }
  return ok ? cwmp::kExitOk : cwmp::kExitAssertion;
}

int cmd_partition_stats(const Overrides& o) {
  const auto plan = build_plan(o);
  const auto csv = cwmp::partition_stats(plan);
  if (o.out)
    cwmp::write_file(std::filesystem::path(plan.out_dir) / "partition_stats.csv", csv);
  else
    std::cout << csv;
  return cwmp::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-weighted gradient sparsification experiments"};
  app.require_subcommand(1);

  Overrides run_o, sweep_o, part_o;
  bool dump_updates = false;
  auto* run = app.add_subcommand("run", "single federation run, writes a per-round CSV");
  add_common(run, run_o);
  run->add_flag("--dump-updates", dump_updates, "also write the transmitted sparse updates");

  auto* sweep = app.add_subcommand("sweep", "methods x fractions x repetitions, writes pareto.csv");
  add_common(sweep, sweep_o);

  std::string spec_path;
  std::optional<std::string> verify_out;
  auto* verify = app.add_subcommand("verify", "theory check battery, JSON report");
  verify->add_option("--spec", spec_path, "suite JSON (built-in suite when omitted)");
  verify->add_option("--out", verify_out, "directory for theory_report.json (stdout when omitted)");

  auto* part = app.add_subcommand("partition-stats", "per-client sample and label counts");
  add_common(part, part_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cwmp::kExitOk : cwmp::kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_o, dump_updates);
    if (*sweep) return cmd_sweep(sweep_o);
    if (*verify) return cmd_verify(spec_path, verify_out);
    if (*part) return cmd_partition_stats(part_o);
  } catch (const cwmp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cwmp::kExitConfig;
  } catch (const cwmp::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return cwmp::kExitConfig;
  } catch (const cwmp::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return cwmp::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
