#include "robust_design/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "robust_design/apportion.hpp"
#include "robust_design/config.hpp"
#include "robust_design/criterion.hpp"
#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"
#include "robust_design/io.hpp"
#include "robust_design/optimizer.hpp"
#include "robust_design/simulate.hpp"
#include "robust_design/version.hpp"

namespace robust_design {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalOptions {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  unsigned threads = 1;
  std::optional<std::size_t> swarm, iters, restarts;
};

ProblemConfig load_with_overrides(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  ProblemConfig cfg = load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.pso.seed = *g.seed;
  }
  if (g.variant) {
    try {
      cfg.variant = parse_variant(*g.variant);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (g.swarm) cfg.pso.swarm_size = *g.swarm;
  if (g.iters) cfg.pso.iterations = *g.iters;
  if (g.restarts) cfg.pso.restarts = *g.restarts;
  cfg.pso.threads = g.threads;
  try {
    cfg.pso.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

fs::path out_dir(const GlobalOptions& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json worst_case_json(const WorstCase& wc) {
  return json{{"value", wc.value}, {"bound", wc.bound}, {"variance_part", wc.variance_part},
              {"saturated", wc.saturated}, {"psi_norm", wc.psi.norm()}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

int cmd_solve(const GlobalOptions& g) {
  const auto start = std::chrono::steady_clock::now();
  ProblemConfig cfg = load_with_overrides(g);
  const Problem problem(cfg);
  const auto criterion = [&problem](const Design& d) { return problem.value(d); };
  const double uniform_value = problem.value(Design::uniform(cfg.space.size(), cfg.n));
  const SolveResult res = minimize_over_simplex(criterion, cfg.space, cfg.n, cfg.pso);
  const LossReport report = problem.evaluate(res.best_design);

  std::optional<ExactDesign> exact;
  json exact_json = nullptr;
  try {
    exact = efficient_apportionment(res.best_design, cfg.n);
    const Design rounded = exact->as_design();
    exact_json = json{{"counts", exact->counts()}};
    try {
      exact_json["loss"] = problem.value(rounded);
    } catch (const SingularInformation&) {
      exact_json["loss"] = nullptr;
    }
  } catch (const InvalidArgument& e) {
    warn("apportionment_skipped", std::string("no exact design: ") + e.what());
  }
  const WorstCase wc = worst_case_contamination(cfg.reference_z(), res.best_design, cfg.retention(), cfg.params);

  const fs::path dir = out_dir(g);
  json design = design_to_json(cfg.space, res.best_design, exact);
  design["value"] = res.best_value;
  design["variant"] = to_string(cfg.variant);
  write_text(dir / "design.json", dump(design));
  std::ostringstream csv;
  write_design_csv(csv, cfg.space, res.best_design, exact);
  write_text(dir / "design.csv", csv.str());

  json loss = report.to_json();
  loss["best_value"] = res.best_value;
  loss["uniform_value"] = uniform_value;
  loss["support_size"] = res.best_design.support_size();
  loss["exact_design"] = exact_json;
  loss["worst_case"] = worst_case_json(wc);
  loss["evaluations"] = res.evaluations;
  loss["iterations_run"] = res.history.size();
  write_text(dir / "loss_report.json", dump(loss));

  std::ostringstream title;
  title << std::setprecision(5) << "design weights, loss " << res.best_value << " (" << to_string(cfg.variant) << ")";
  write_text(dir / "weights.svg", weights_svg(cfg.space, res.best_design, title.str()));

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json meta{{"command", "solve"},
                  {"config", fs::absolute(g.config).string()},
                  {"seed", cfg.seed},
                  {"variant", to_string(cfg.variant)},
                  {"threads", g.threads},
                  {"pso", {{"swarm", cfg.pso.swarm_size}, {"iterations", cfg.pso.iterations}, {"restarts", cfg.pso.restarts}}},
                  {"versions", version_info()},
                  {"wall_time_seconds", wall},
                  {"timestamp", utc_timestamp()}};
  write_text(dir / "run_meta.json", dump(meta));

  std::cout << std::setprecision(10) << "loss " << res.best_value << " (uniform " << uniform_value << ", support "
            << res.best_design.support_size() << ")\n";
  return 0;
}

int cmd_eval(const GlobalOptions& g, const std::string& design_path) {
  const ProblemConfig cfg = load_with_overrides(g);
  const DesignFile file = read_design(design_path, cfg.space.size());
  if (file.design.n() != cfg.n) throw ConfigError("design file n differs from the config n");
  const Problem problem(cfg);
  const LossReport report = problem.evaluate(file.design);
  json loss = report.to_json();
  loss["uniform_value"] = problem.value(Design::uniform(cfg.space.size(), cfg.n));
  const fs::path dir = out_dir(g);
  write_text(dir / "loss_report.json", dump(loss));
  std::cout << std::setprecision(17) << report.total << "\n";
  return 0;
}

int cmd_round(const GlobalOptions& g, const std::string& design_path, std::optional<int> n) {
  std::optional<ProblemConfig> cfg;
  if (!g.config.empty()) cfg = load_with_overrides(g);
  const DesignFile file = read_design(design_path, cfg ? cfg->space.size() : 0);
  const int target = n ? *n : (cfg ? cfg->n : file.design.n());
  ExactDesign exact({1});
  try {
    exact = efficient_apportionment(file.design, target);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = out_dir(g);
  json j{{"n", target}, {"counts", exact.counts()}};
  write_text(dir / "exact_design.json", dump(j));
  std::ostringstream csv;
  if (cfg) {
    write_exact_csv(csv, cfg->space, exact);
  } else {
    csv << "index,n_i\n";
    for (std::size_t i = 0; i < exact.size(); ++i) csv << i << ',' << exact.counts()[i] << '\n';
  }
  write_text(dir / "exact_design.csv", csv.str());
  for (std::size_t i = 0; i < exact.size(); ++i) std::cout << (i ? " " : "") << exact.counts()[i];
  std::cout << "\n";
  return 0;
}

ExactDesign exact_from_file(const DesignFile& file, int n) {
  if (file.exact) return *file.exact;
  try {
    return efficient_apportionment(file.design, n);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

WorstCaseMode auto_mode(const ExactDesign& exact, std::size_t reps, std::uint64_t seed, unsigned threads) {
  double patterns = 1.0;
  for (int c : exact.counts()) patterns *= c + 1.0;
  if (patterns <= kMaxEnumeratedPatterns) return WorstCaseMode::enumerate();
  return WorstCaseMode::monte_carlo(reps, seed, threads);
}

int cmd_simulate(const GlobalOptions& g, const std::string& design_path, std::size_t reps, const std::string& psi_kind) {
  const ProblemConfig cfg = load_with_overrides(g);
  const DesignFile file = read_design(design_path, cfg.space.size());
  const ExactDesign exact = exact_from_file(file, cfg.n);
  const Eigen::MatrixXd z = cfg.reference_z();
  const Eigen::VectorXd retention = cfg.retention();
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(z.rows());
  std::optional<WorstCase> wc;
  if (psi_kind == "worst") {
    wc = worst_case_contamination(z, exact, retention, cfg.params, auto_mode(exact, 4000, cfg.seed, g.threads));
    psi = wc->psi;
  } else if (psi_kind != "zero") {
    throw ConfigError("--psi must be 'worst' or 'zero'");
  }
  SimulationOptions opts;
  opts.reps = reps;
  opts.seed = cfg.seed;
  opts.threads = g.threads;
  opts.eta2 = cfg.params.eta2;
  const DecompositionReport rep =
      simulate_mmpe(cfg.model, cfg.space, exact, retention, psi, cfg.reference_beta(), cfg.params.sigma2, opts);

  const fs::path dir = out_dir(g);
  std::ostringstream csv;
  rep.write_csv(csv);
  write_text(dir / "decomposition.csv", csv.str());
  json j = rep.to_json();
  j["psi"] = psi_kind;
  j["sum_gap"] = rep.sum_gap();
  j["combined_se"] = rep.combined_se();
  if (wc) j["analytic_worst_case"] = worst_case_json(*wc);
  write_text(dir / "decomposition.json", dump(j));
  std::cout << std::setprecision(10) << "mmpe_hat " << rep.mmpe.mean << " +/- " << rep.mmpe.se << "\n";
  return 0;
}

int cmd_worstcase(const GlobalOptions& g, const std::string& design_path, const std::string& mode_name,
                  std::size_t reps) {
  const ProblemConfig cfg = load_with_overrides(g);
  const DesignFile file = read_design(design_path, cfg.space.size());
  const Eigen::MatrixXd z = cfg.reference_z();
  const Eigen::VectorXd retention = cfg.retention();
  WorstCase wc;
  if (mode_name == "plugin") {
    wc = worst_case_contamination(z, file.design, retention, cfg.params);
  } else {
    const ExactDesign exact = exact_from_file(file, cfg.n);
    WorstCaseMode mode;
    if (mode_name == "enumerate") {
      mode = WorstCaseMode::enumerate();
    } else if (mode_name == "mc") {
      mode = WorstCaseMode::monte_carlo(reps, cfg.seed, g.threads);
    } else if (mode_name == "auto") {
      mode = auto_mode(exact, reps, cfg.seed, g.threads);
    } else {
      throw ConfigError("--mode must be plugin, enumerate, mc or auto");
    }
    wc = worst_case_contamination(z, exact, retention, cfg.params, mode);
  }
  const fs::path dir = out_dir(g);
  std::ostringstream csv;
  csv << std::setprecision(17) << "index";
  for (std::size_t d = 0; d < cfg.space.dim(); ++d) csv << ",x" << (d + 1);
  csv << ",psi\n";
  for (std::size_t i = 0; i < cfg.space.size(); ++i) {
    csv << i;
    const Eigen::VectorXd x = cfg.space.point(i);
    for (Eigen::Index d = 0; d < x.size(); ++d) csv << ',' << x(d);
    csv << ',' << wc.psi(static_cast<Eigen::Index>(i)) << '\n';
  }
  write_text(dir / "psi.csv", csv.str());
  json j = worst_case_json(wc);
  j["mode"] = mode_name;
  write_text(dir / "worstcase.json", dump(j));
  std::cout << std::setprecision(10) << "worst-case value " << wc.value << " (bound " << wc.bound << ")\n";
  return 0;
}

void add_global(CLI::App* app, GlobalOptions& g, bool config_required) {
  auto* c = app->add_option("--config", g.config, "problem config (JSON)");
  if (config_required) c->required();
  app->add_option("--out", g.out, "output directory")->capture_default_str();
  app->add_option("--seed", g.seed, "random seed (overrides the config)");
  app->add_option("--variant", g.variant, "correction variant: paper | derivation");
  app->add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Minimax robust experimental designs under MCAR missingness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  GlobalOptions g;

  auto* solve = app.add_subcommand("solve", "minimize the configured loss over the design simplex");
  add_global(solve, g, true);
  solve->add_option("--swarm", g.swarm, "PSO swarm size")->check(CLI::PositiveNumber);
  solve->add_option("--iters", g.iters, "PSO iterations")->check(CLI::PositiveNumber);
  solve->add_option("--restarts", g.restarts, "PSO restarts")->check(CLI::PositiveNumber);

  std::string design_path;
  auto* eval = app.add_subcommand("eval", "evaluate the configured loss on a design file");
  add_global(eval, g, true);
  eval->add_option("--design", design_path, "design file (JSON or CSV)")->required();

  std::optional<int> round_n;
  auto* round = app.add_subcommand("round", "efficient apportionment of a design to n runs");
  add_global(round, g, false);
  round->add_option("--design", design_path, "design file (JSON or CSV)")->required();
  round->add_option("--n", round_n, "number of runs (default: the design's n)")->check(CLI::PositiveNumber);

  std::size_t reps = 20000;
  std::string psi_kind = "worst";
  auto* simulate = app.add_subcommand("simulate", "data-generation check of the MMPE decomposition");
  add_global(simulate, g, true);
  simulate->add_option("--design", design_path, "design file (JSON or CSV)")->required();
  simulate->add_option("--reps", reps, "replicates")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--psi", psi_kind, "contamination: worst | zero")->capture_default_str();

  std::string mode_name = "plugin";
  std::size_t wc_reps = 20000;
  auto* worstcase = app.add_subcommand("worstcase", "least-favourable contamination for a design");
  add_global(worstcase, g, true);
  worstcase->add_option("--design", design_path, "design file (JSON or CSV)")->required();
  worstcase->add_option("--mode", mode_name, "plugin | enumerate | mc | auto")->capture_default_str();
  worstcase->add_option("--reps", wc_reps, "Monte-Carlo replicates")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*solve) return cmd_solve(g);
    if (*eval) return cmd_eval(g, design_path);
    if (*round) return cmd_round(g, design_path, round_n);
    if (*simulate) return cmd_simulate(g, design_path, reps, psi_kind);
    if (*worstcase) return cmd_worstcase(g, design_path, mode_name, wc_reps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InfeasibleProblem& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const SingularInformation& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace robust_design
