#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "robust_design/apportion.hpp"
#include "robust_design/cli.hpp"
#include "robust_design/config.hpp"
#include "robust_design/criterion.hpp"
#include "robust_design/errors.hpp"
#include "robust_design/optimizer.hpp"
#include "robust_design/simulate.hpp"
#include "robust_design/version.hpp"

namespace py = pybind11;
using namespace robust_design;

namespace {

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["total"] = r.total;
  d["bias_eig_term"] = r.bias_eig_term;
  d["variance_term"] = r.variance_term;
  d["constant_term"] = r.constant_term;
  d["bias_correction"] = r.bias_correction;
  d["variance_correction"] = r.variance_correction;
  d["variant"] = to_string(r.variant);
  d["eig_gap_ratio"] = r.eig_gap_ratio;
  return d;
}

py::dict worst_dict(const WorstCase& wc) {
  py::dict d;
  d["psi"] = wc.psi;
  d["value"] = wc.value;
  d["bound"] = wc.bound;
  d["variance_part"] = wc.variance_part;
  d["saturated"] = wc.saturated;
  return d;
}

ProblemConfig configured(const std::string& path, std::optional<std::uint64_t> seed,
                         std::optional<std::string> variant) {
  ProblemConfig cfg = load_config(path);
  if (seed) {
    cfg.seed = *seed;
    cfg.pso.seed = *seed;
  }
  if (variant) cfg.variant = parse_variant(*variant);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Minimax robust experimental designs under MCAR missingness";
  m.attr("__version__") = std::string(kVersion);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InfeasibleProblem>(m, "InfeasibleProblem", PyExc_RuntimeError);
  py::register_exception<SingularInformation>(m, "SingularInformation", PyExc_ArithmeticError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def(
      "taylor_loss",
      [](const Eigen::MatrixXd& z, const Eigen::VectorXd& weights, int n, const Eigen::VectorXd& retention,
         double eta2, double sigma2, const std::string& variant) {
        return report_dict(taylor_loss(z, Design(weights, n), retention, {eta2, sigma2}, parse_variant(variant)));
      },
      py::arg("z"), py::arg("weights"), py::arg("n"), py::arg("retention"), py::arg("eta2"), py::arg("sigma2"),
      py::arg("variant") = "derivation", "First-order robust loss with its five-term breakdown.");

  m.def(
      "expected_mmpe_max",
      [](const Eigen::MatrixXd& z, const std::vector<int>& counts, const Eigen::VectorXd& retention, double eta2,
         double sigma2, std::size_t mc_reps, std::uint64_t seed) {
        const ExpectationMode mode =
            mc_reps == 0 ? ExpectationMode::enumerate() : ExpectationMode::monte_carlo(mc_reps, seed);
        const ExpectedMmpe e = expected_mmpe_max(z, ExactDesign(counts), retention, {eta2, sigma2}, mode);
        py::dict d;
        d["value"] = e.value;
        d["std_error"] = e.std_error;
        d["expected_chmax"] = e.expected_chmax;
        d["expected_trace"] = e.expected_trace;
        d["singular"] = e.singular;
        return d;
      },
      py::arg("z"), py::arg("counts"), py::arg("retention"), py::arg("eta2"), py::arg("sigma2"),
      py::arg("mc_reps") = 0, py::arg("seed") = 0,
      "Expected maximized MMPE over missing patterns (enumeration when mc_reps == 0).");

  m.def(
      "worst_case",
      [](const Eigen::MatrixXd& z, const Eigen::VectorXd& weights, int n, const Eigen::VectorXd& retention,
         double eta2, double sigma2) {
        return worst_dict(worst_case_contamination(z, Design(weights, n), retention, {eta2, sigma2}));
      },
      py::arg("z"), py::arg("weights"), py::arg("n"), py::arg("retention"), py::arg("eta2"), py::arg("sigma2"),
      "Least-favourable contamination (plug-in D = n xi).");

  m.def(
      "apportion",
      [](const Eigen::VectorXd& weights, int n) { return efficient_apportionment(Design(weights, n), n).counts(); },
      py::arg("weights"), py::arg("n"), "Efficient apportionment of weights to n integer runs.");

  m.def(
      "evaluate",
      [](const std::string& config, const Eigen::VectorXd& weights, std::optional<std::string> variant) {
        const ProblemConfig cfg = configured(config, std::nullopt, variant);
        const Problem problem(cfg);
        return report_dict(problem.evaluate(Design(weights, cfg.n)));
      },
      py::arg("config"), py::arg("weights"), py::arg("variant") = py::none(),
      "Configured loss of a weight vector.");

  m.def(
      "solve",
      [](const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::string> variant,
         unsigned threads, std::optional<std::size_t> swarm, std::optional<std::size_t> iterations,
         std::optional<std::size_t> restarts) {
        ProblemConfig cfg = configured(config, seed, variant);
        cfg.pso.threads = threads;
        if (swarm) cfg.pso.swarm_size = *swarm;
        if (iterations) cfg.pso.iterations = *iterations;
        if (restarts) cfg.pso.restarts = *restarts;
        const Problem problem(cfg);
        std::optional<SolveResult> solved;
        {
          py::gil_scoped_release release;
          solved = minimize_over_simplex([&](const Design& d) { return problem.value(d); }, cfg.space, cfg.n,
                                         cfg.pso);
        }
        const SolveResult& res = *solved;
        Design best = truncate_small_weights(res.best_design);
        double best_value = problem.value(best);
        if (!(best_value <= res.best_value)) {
          best = res.best_design;
          best_value = res.best_value;
        }
        py::dict d;
        d["weights"] = best.weights();
        d["value"] = best_value;
        d["history"] = res.history;
        d["evaluations"] = res.evaluations;
        d["seed"] = res.seed;
        d["report"] = report_dict(problem.evaluate(best));
        return d;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("variant") = py::none(), py::arg("threads") = 1,
      py::arg("swarm") = py::none(), py::arg("iterations") = py::none(), py::arg("restarts") = py::none(),
      "Particle-swarm minimization of the configured loss.");

  m.def(
      "simulate",
      [](const std::string& config, const std::vector<int>& counts, const std::string& psi, std::size_t reps,
         std::uint64_t seed) {
        const ProblemConfig cfg = load_config(config);
        const ExactDesign exact(counts);
        const Eigen::MatrixXd z = cfg.reference_z();
        const Eigen::VectorXd retention = cfg.retention();
        Eigen::VectorXd contamination = Eigen::VectorXd::Zero(z.rows());
        if (psi == "worst") {
          contamination = worst_case_contamination(z, exact, retention, cfg.params, WorstCaseMode::enumerate()).psi;
        } else if (psi != "zero") {
          throw InvalidArgument("psi must be 'zero' or 'worst'");
        }
        SimulationOptions opts;
        opts.reps = reps;
        opts.seed = seed;
        opts.eta2 = cfg.params.eta2;
        const DecompositionReport r = simulate_mmpe(cfg.model, cfg.space, exact, retention, contamination,
                                                    cfg.reference_beta(), cfg.params.sigma2, opts);
        py::dict d;
        d["mmpe"] = py::make_tuple(r.mmpe.mean, r.mmpe.se);
        d["mb"] = py::make_tuple(r.mb.mean, r.mb.se);
        d["mv"] = py::make_tuple(r.mv.mean, r.mv.se);
        d["cross"] = py::make_tuple(r.cross.mean, r.cross.se);
        d["psi_norm_term"] = r.psi_norm_term;
        d["replicates"] = r.replicates;
        d["singular"] = r.singular;
        return d;
      },
      py::arg("config"), py::arg("counts"), py::arg("psi") = "zero", py::arg("reps") = 20000, py::arg("seed") = 0,
      "Data-generation check of the MMPE decomposition for an exact design.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "robust-design");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the command-line interface in-process; returns the exit code.");
}
