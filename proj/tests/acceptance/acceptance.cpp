// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "robust_design/apportion.hpp"
#include "robust_design/cli.hpp"
#include "robust_design/config.hpp"
#include "robust_design/criterion.hpp"
#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"
#include "robust_design/optimizer.hpp"
#include "robust_design/simulate.hpp"
#include "../support/instances.hpp"

using namespace robust_design;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Eigen::MatrixXd dense_drrd(const HatMatrices& h) {
  const Eigen::MatrixXd m = h.d.asDiagonal() * h.r * h.r * h.d.asDiagonal();
  return 0.5 * (m + m.transpose());
}

// 1
Outcome exact_reduction() {
  std::mt19937_64 rng(101);
  double worst_corr = 0.0, worst_gap = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto inst = testing_support::random_instance(rng, 20, 4);
    const Eigen::Index size = inst.z.rows();
    std::uniform_int_distribution<int> n_d(1, 50);
    const int n = n_d(rng);
    const Design design(testing_support::random_simplex(rng, size), n);
    std::uniform_real_distribution<double> u(0.01, 2.0);
    const RobustnessParams params{u(rng), u(rng)};
    const LossReport r = taylor_loss(inst.z, design, Eigen::VectorXd::Ones(size), params,
                                     CorrectionVariant::DerivationConsistent);
    const HatMatrices h = hat(inst.z, design.scaled());
    const double big_n = static_cast<double>(size);
    const double formula = params.eta2 / (big_n * n) * (numerics::sym_top_eig(dense_drrd(h)).lambda_max + 1.0) +
                           params.sigma2 / big_n * h.r.trace();
    worst_corr = std::max({worst_corr, std::abs(r.bias_correction), std::abs(r.variance_correction)});
    worst_gap = std::max(worst_gap, std::abs(r.total - formula) / std::max(1.0, std::abs(formula)));
  }
  return {worst_corr <= 1e-12 && worst_gap <= 1e-12,
          "max |correction| " + fmt(worst_corr) + ", max gap to closed form " + fmt(worst_gap)};
}

// 2
Outcome projection_invariants() {
  std::mt19937_64 rng(202);
  double worst_rdr = 0.0, worst_tr = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto inst = testing_support::random_instance(rng, 20, 4);
    const HatMatrices h = hat(inst.z, inst.d);
    worst_rdr = std::max(worst_rdr, (h.r * inst.d.asDiagonal() * h.r - h.r).norm() / h.r.norm());
    const double p = static_cast<double>(inst.z.cols());
    worst_tr = std::max(worst_tr, std::abs((inst.d.asDiagonal() * h.r).trace() - p) / p);
  }
  return {worst_rdr <= 1e-8 && worst_tr <= 1e-8,
          "max rel ||RDR - R|| " + fmt(worst_rdr) + ", max rel |tr(DR) - p| " + fmt(worst_tr)};
}

// 3: the sensitivity formula exactly as printed, against central differences.
Outcome eigen_derivative(double& exact_form_error) {
  const auto prev = set_warning_handler([](const std::string&, const std::string&) {});
  std::mt19937_64 rng(303);
  double worst = 0.0;
  exact_form_error = 0.0;
  int used = 0;
  for (int rep = 0; used < 50 && rep < 5000; ++rep) {
    const auto inst = testing_support::random_instance(rng, 20, 4);
    // N = p makes D R^2 D = I: constant eigenvalue, zero gradient
    if (inst.z.rows() == inst.z.cols()) continue;
    const SpectralTerms s = spectral_terms(ProjectionGeometry(inst.z), inst.d);
    if (s.gap_ratio <= 1e-3) continue;
    ++used;
    const Eigen::VectorXd printed = chmax_gradient_printed(inst.z, inst.d);
    const Eigen::VectorXd exact = chmax_gradient(inst.z, inst.d);
    Eigen::VectorXd fd(inst.d.size());
    for (Eigen::Index i = 0; i < inst.d.size(); ++i) {
      fd(i) = testing_support::fd_chmax(inst.z, inst.d, i, 1e-6 * std::max(1.0, inst.d(i)));
    }
    worst = std::max(worst, (printed - fd).norm() / fd.norm());
    exact_form_error = std::max(exact_form_error, (exact - fd).norm() / fd.norm());
  }
  set_warning_handler(prev);
  return {worst <= 1e-5 && used == 50,
          std::to_string(used) + " instances, printed form max rel error " + fmt(worst) +
              " (lambda-scaled exact form: " + fmt(exact_form_error) + ")"};
}

// 4
Outcome enumeration_oracle() {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Ones(2, 1);
  const ExactDesign design({1, 1});
  const Eigen::VectorXd p = Eigen::Vector2d(0.5, 0.5);
  const RobustnessParams params{1.0, 1.0};
  const ExpectedMmpe e = expected_mmpe_max(z, design, p, params, ExpectationMode::enumerate());
  const ExpectedMmpe mc = expected_mmpe_max(z, design, p, params, ExpectationMode::monte_carlo(100000, 404));
  const double third = 5.0 / 3.0;
  const bool exact_ok = std::abs(e.expected_trace - third) <= 1e-14 && std::abs(e.expected_chmax - third) <= 1e-14;
  const double z_tr = std::abs(mc.expected_trace - third) / mc.expected_trace_se;
  const double z_ch = std::abs(mc.expected_chmax - third) / mc.expected_chmax_se;
  return {exact_ok && z_tr < 3.0 && z_ch < 3.0,
          "enumerated E[trR] = " + fmt(e.expected_trace) + ", E[Chmax] = " + fmt(e.expected_chmax) +
              "; MC |z| = " + fmt(z_tr) + ", " + fmt(z_ch)};
}

// 5
Outcome taylor_vs_exact(std::string& table) {
  std::mt19937_64 rng(505);
  int within = 0, closer = 0;
  const int instances = 20;
  double worst_gap = 0.0;
  std::ostringstream os;
  for (int k = 0; k < instances; ++k) {
    std::uniform_int_distribution<int> p_d(1, 3);
    const int p = p_d(rng);
    std::uniform_int_distribution<int> n_d(p + 1, 8);
    const int big_n = n_d(rng);
    std::uniform_int_distribution<int> c_d(3, big_n <= 6 ? 5 : 4);
    std::vector<int> counts(static_cast<std::size_t>(big_n));
    for (int& c : counts) c = c_d(rng);
    std::uniform_real_distribution<double> pr(0.85, 0.98), par(0.05, 2.0);
    Eigen::VectorXd retention(big_n);
    for (int i = 0; i < big_n; ++i) retention(i) = pr(rng);
    const TaylorExactInstance inst{testing_support::random_matrix(rng, big_n, p), ExactDesign(counts), retention,
                                   {par(rng), par(rng)}};
    const auto rows = taylor_vs_exact_report(inst, {CorrectionVariant::PaperLiteral, CorrectionVariant::DerivationConsistent});
    worst_gap = std::max(worst_gap, rows[1].relative_gap);
    within += rows[1].relative_gap <= 0.10 ? 1 : 0;
    closer += rows[1].relative_gap < rows[0].relative_gap ? 1 : 0;
    os << "    instance " << k << " N=" << big_n << " p=" << p << ": derivation gap " << fmt(rows[1].relative_gap)
       << ", paper gap " << fmt(rows[0].relative_gap) << "\n";
  }
  table = os.str();
  return {within == instances && closer * 5 >= instances * 4,
          std::to_string(within) + "/20 within 10% (max gap " + fmt(worst_gap) + "), derivation closer on " +
              std::to_string(closer) + "/20"};
}

// 6
Outcome lemma_check() {
  const auto prev = set_warning_handler([](const std::string&, const std::string&) {});
  const DesignSpace space = DesignSpace::grid({{-1.0, 1.0, 6}});
  const ModelSpec model = models::polynomial(1);
  const Eigen::MatrixXd z = design_matrix(std::get<LinearBasis>(model), space);
  const ExactDesign exact({3, 2, 2, 2, 2, 3});
  const Eigen::VectorXd retention = MissingnessModel(Eigen::Vector2d(1.5, 0.5)).probabilities(space);
  const RobustnessParams params{0.5, 0.2};
  const Eigen::VectorXd beta = Eigen::Vector2d(1.0, 2.0);
  SimulationOptions opts;
  opts.reps = 20000;
  opts.seed = 606;
  opts.eta2 = params.eta2;

  const ExpectedMmpe e = expected_mmpe_max(z, exact, retention, params, ExpectationMode::enumerate());
  const double variance_target = params.sigma2 / 6.0 * e.expected_trace;
  const auto zero = simulate_mmpe(model, space, exact, retention, Eigen::VectorXd::Zero(6), beta, params.sigma2, opts);
  const double z0 = std::abs(zero.mmpe.mean - variance_target) / zero.mmpe.se;

  const WorstCase wc = worst_case_contamination(z, exact, retention, params, WorstCaseMode::enumerate());
  const auto worst = simulate_mmpe(model, space, exact, retention, wc.psi, beta, params.sigma2, opts);
  const double z1 = std::abs(worst.mmpe.mean - wc.value) / worst.mmpe.se;
  set_warning_handler(prev);
  return {z0 < 3.0 && z1 < 3.0, "psi = 0: |z| = " + fmt(z0) + "; worst-case psi: simulated " + fmt(worst.mmpe.mean) +
                                    " vs exact " + fmt(wc.value) + ", |z| = " + fmt(z1)};
}

// 7
struct Reproduction {
  std::string name;
  std::string config;
  double target;
  double band;
};

Outcome paper_reproduction(const fs::path& configs, std::string& lines) {
  const auto prev = set_warning_handler([](const std::string&, const std::string&) {});
  const std::vector<Reproduction> runs{{"example 1 (sigma2=0.01, eta2=0.01)", "example1.json", 4.1406e-2, 0.10},
                                       {"example 2 (sigma2=0.1, eta2=1)", "example2.json", 5.0803e-2, 0.10},
                                       {"example 3 uniform prior (sigma2=0.01, eta2=1)", "example3.json", 1.3611e-3, 0.15}};
  bool all = true;
  std::ostringstream os;
  for (const auto& r : runs) {
    ProblemConfig cfg = load_config(configs / r.config);
    cfg.variant = CorrectionVariant::PaperLiteral;
    const auto start = std::chrono::steady_clock::now();
    const Problem problem(cfg);
    const SolveResult res = minimize_over_simplex([&](const Design& d) { return problem.value(d); }, cfg.space,
                                                  cfg.n, cfg.pso);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double rel = (res.best_value - r.target) / r.target;
    const bool ok = std::abs(rel) <= r.band && secs < 300.0;
    all = all && ok;
    os << "    " << (ok ? "ok  " : "miss") << " " << r.name << ": minimized " << fmt(res.best_value) << " vs "
       << fmt(r.target) << " (" << (rel >= 0 ? "+" : "") << fmt(100.0 * rel) << "%, band " << fmt(100.0 * r.band)
       << "%), uniform " << fmt(problem.value(Design::uniform(cfg.space.size(), cfg.n))) << ", " << fmt(secs)
       << " s\n";
  }
  set_warning_handler(prev);
  lines = os.str();
  return {all, "paper-literal minimization against the caption values"};
}

// 8
Outcome apportionment() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> size_d(1, 30);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int failures = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    const int size = size_d(rng);
    Eigen::VectorXd w(size);
    for (int i = 0; i < size; ++i) w(i) = u(rng) < 0.3 ? 0.0 : u(rng);
    if (w.sum() == 0.0) w(size - 1) = 1.0;
    w /= w.sum();
    w /= w.sum();
    const int support = static_cast<int>((w.array() > 0).count());
    const int n = support + std::uniform_int_distribution<int>(0, 100)(rng);
    const ExactDesign e = efficient_apportionment(Design(w, n), n);
    bool ok = e.n() == n;
    for (int i = 0; i < size; ++i) {
      const int c = e.counts()[static_cast<std::size_t>(i)];
      ok = ok && ((w(i) == 0.0) == (c == 0));
    }
    ok = ok && efficient_apportionment(e.as_design(), n).counts() == e.counts();
    failures += ok ? 0 : 1;
  }
  Eigen::Vector3d w(0.55, 0.25, 0.20);
  const bool worked = efficient_apportionment(Design(w, 7), 7).counts() == std::vector<int>{3, 2, 2};
  return {failures == 0 && worked,
          std::to_string(failures) + " failures in 10^4 random pairs; (0.55,0.25,0.20), n=7 -> " +
              (worked ? "(3,2,2)" : "mismatch")};
}

// 9
Outcome determinism(const fs::path& configs) {
  const auto prev = set_warning_handler([](const std::string&, const std::string&) {});
  const fs::path out = fs::temp_directory_path() / "robust_design_acceptance";
  fs::remove_all(out);
  auto solve = [&](const std::string& threads, const std::string& sub) {
    std::vector<std::string> args{"robust-design", "solve", "--config", (configs / "example1.json").string(),
                                  "--out", (out / sub).string(), "--threads", threads, "--seed", "909"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
  };
  const int a = solve("1", "t1");
  const int b = solve("8", "t8");
  set_warning_handler(prev);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string j1 = slurp(out / "t1" / "design.json");
  const std::string j8 = slurp(out / "t8" / "design.json");
  return {a == 0 && b == 0 && !j1.empty() && j1 == j8,
          std::string("design.json with 1 and 8 threads ") + (j1 == j8 ? "identical" : "differ") + " (" +
              std::to_string(j1.size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path configs = ROBUST_DESIGN_SOURCE_DIR "/configs";
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) only = std::stoi(argv[++i]);
    if (a == "--configs" && i + 1 < argc) configs = argv[++i];
  }

  set_warning_handler([](const std::string&, const std::string&) {});
  int failed = 0;
  auto run = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& body,
                 const std::string* extra = nullptr) {
    if (only != 0 && only != id) return;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < limit_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s C%d %s: %s [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
                limit_s, in_time ? "" : ", over time");
    if (extra && !extra->empty()) std::printf("%s", extra->c_str());
    std::fflush(stdout);
  };

  double exact_form_error = 0.0;
  std::string table, repro;
  run(1, "exact-reduction identity", 1.0, exact_reduction);
  run(2, "projection invariants", 5.0, projection_invariants);
  run(3, "eigenvalue derivative (printed form)", 10.0, [&] { return eigen_derivative(exact_form_error); });
  run(4, "enumeration oracle", 5.0, enumeration_oracle);
  run(5, "taylor-vs-exact adjudication", 120.0, [&] { return taylor_vs_exact(table); }, &table);
  run(6, "end-to-end simulation check", 120.0, lemma_check);
  run(7, "paper reproduction", 900.0, [&] { return paper_reproduction(configs, repro); }, &repro);
  run(8, "apportionment", 5.0, apportionment);
  run(9, "determinism across thread counts", 600.0, [&] { return determinism(configs); });
  return failed == 0 ? 0 : 1;
}
