#include <cmath>
#include <sstream>

#include "doctest.h"
#include "robust_design/criterion.hpp"
#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"
#include "robust_design/simulate.hpp"

using namespace robust_design;

namespace {

struct Small {
  DesignSpace space = DesignSpace::grid({{-1.0, 1.0, 5}});
  ModelSpec model = models::polynomial(1);
  Eigen::MatrixXd z = design_matrix(std::get<LinearBasis>(model), space);
  ExactDesign exact{{3, 2, 2, 2, 3}};
  Eigen::VectorXd p = MissingnessModel(Eigen::Vector2d(1.8, 0.4)).probabilities(space);
  Eigen::VectorXd beta = Eigen::Vector2d(1.0, -0.5);
};

SimulationOptions opts(std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
  SimulationOptions o;
  o.reps = reps;
  o.seed = seed;
  o.threads = threads;
  return o;
}

}  // namespace

TEST_CASE("psi = 0 matches the closed-form variance term") {
  Small s;
  const double sigma2 = 0.3;
  const auto rep = simulate_mmpe(s.model, s.space, s.exact, s.p, Eigen::VectorXd::Zero(5), s.beta, sigma2, opts(8000, 1));
  const ExpectedMmpe exact = expected_mmpe_max(s.z, s.exact, s.p, {0.0, sigma2}, ExpectationMode::enumerate());
  const double target = sigma2 / 5.0 * exact.expected_trace;
  CHECK(std::abs(rep.mmpe.mean - target) < 3.0 * rep.mmpe.se);
  CHECK(std::abs(rep.sum_gap()) < 1e-12 * (1.0 + rep.mmpe.mean));
  CHECK(rep.psi_norm_term == 0.0);
  CHECK(std::abs(rep.mb.mean) < 3.0 * rep.mb.se + 1e-12);
}

TEST_CASE("tiny noise and no contamination give a vanishing error") {
  Small s;
  const auto rep = simulate_mmpe(s.model, s.space, s.exact, s.p, Eigen::VectorXd::Zero(5), s.beta, 1e-8, opts(500, 2));
  CHECK(rep.mmpe.mean < 1e-7);
}

TEST_CASE("worst-case contamination reproduces the exact maximized MMPE") {
  Small s;
  const auto prev = set_warning_handler([](const std::string&, const std::string&) {});
  const RobustnessParams params{0.6, 0.2};
  const WorstCase wc = worst_case_contamination(s.z, s.exact, s.p, params, WorstCaseMode::enumerate());
  SimulationOptions o = opts(8000, 3);
  o.eta2 = params.eta2;
  const auto rep = simulate_mmpe(s.model, s.space, s.exact, s.p, wc.psi, s.beta, params.sigma2, o);
  set_warning_handler(prev);
  CHECK(std::abs(rep.mmpe.mean - wc.value) < 3.0 * rep.mmpe.se);
  CHECK(std::abs(rep.cross.mean) < 3.0 * rep.cross.se + 1e-12);
  CHECK(std::abs(rep.sum_gap()) < 1e-12);
  CHECK(rep.psi_norm_term == doctest::Approx(params.eta2 / (5.0 * 12.0)));
}

TEST_CASE("standard errors shrink with the square root of the replicate count") {
  Small s;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  const auto a = simulate_mmpe(s.model, s.space, s.exact, s.p, zero, s.beta, 0.5, opts(2000, 4));
  const auto b = simulate_mmpe(s.model, s.space, s.exact, s.p, zero, s.beta, 0.5, opts(8000, 5));
  const double ratio = a.mmpe.se / b.mmpe.se;
  CHECK(ratio > 2.0 * 0.8);
  CHECK(ratio < 2.0 * 1.2);
}

TEST_CASE("simulation is deterministic for any thread count") {
  Small s;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  const auto a = simulate_mmpe(s.model, s.space, s.exact, s.p, zero, s.beta, 0.5, opts(600, 6, 1));
  const auto b = simulate_mmpe(s.model, s.space, s.exact, s.p, zero, s.beta, 0.5, opts(600, 6, 3));
  CHECK(a.mmpe.mean == b.mmpe.mean);
  CHECK(a.mmpe.se == b.mmpe.se);
  CHECK(a.singular == b.singular);
}

TEST_CASE("off-neighbourhood contamination warns") {
  Small s;
  reset_warning_counts();
  const auto prev = set_warning_handler([](const std::string&, const std::string&) {});
  SimulationOptions o = opts(50, 7);
  o.eta2 = 0.01;
  (void)simulate_mmpe(s.model, s.space, s.exact, s.p, Eigen::VectorXd::Ones(5), s.beta, 0.5, o);
  set_warning_handler(prev);
  CHECK(warning_count("psi_outside_neighbourhood") == 1);
  CHECK(warning_count("psi_not_orthogonal") == 1);
}

TEST_CASE("mostly singular replicates are infeasible") {
  Small s;
  const Eigen::VectorXd low = Eigen::VectorXd::Constant(5, 0.05);
  CHECK_THROWS_AS(simulate_mmpe(s.model, s.space, ExactDesign({1, 0, 0, 0, 1}), low, Eigen::VectorXd::Zero(5), s.beta,
                                0.5, opts(200, 8)),
                  InfeasibleProblem);
}

TEST_CASE("nonlinear model uses Gauss-Newton and tracks the delta-method variance") {
  const DesignSpace space = DesignSpace::grid({{1.0, 40.0, 8}});
  const auto m = models::exponential({Eigen::Vector2d(28.5, -0.02), Eigen::Vector2d(85.5, -0.06)},
                                     {numerics::Prior::uniform(), numerics::Prior::uniform()});
  const Eigen::VectorXd beta = Eigen::Vector2d(57.0, -0.04);
  const ExactDesign exact({8, 8, 8, 8, 8, 8, 8, 8});
  const Eigen::VectorXd p = MissingnessModel(Eigen::Vector2d(2.0, 0.05)).probabilities(space);
  const double sigma2 = 0.01;
  const auto rep = simulate_mmpe(ModelSpec{m}, space, exact, p, Eigen::VectorXd::Zero(8), beta, sigma2, opts(3000, 9));
  CHECK(rep.nonconverged == 0);
  const Eigen::MatrixXd z = design_matrix(m, space, beta);
  const ExpectedMmpe e = expected_mmpe_max(z, exact, p, {0.0, sigma2}, ExpectationMode::monte_carlo(4000, 1));
  const double target = sigma2 / 8.0 * e.expected_trace;
  CHECK(std::abs(rep.mmpe.mean - target) < 0.05 * target);
}

TEST_CASE("taylor-vs-exact report") {
  const Eigen::MatrixXd z = design_matrix(models::polynomial(1), DesignSpace::grid({{0.0, 1.0, 4}}));
  SUBCASE("no missingness: derivation-consistent is exact") {
    const TaylorExactInstance inst{z, ExactDesign({3, 2, 2, 3}), Eigen::VectorXd::Ones(4), {0.7, 0.2}};
    const auto rows = taylor_vs_exact_report(inst, {CorrectionVariant::PaperLiteral, CorrectionVariant::DerivationConsistent});
    CHECK(rows[1].relative_gap <= 1e-12);
    CHECK(rows[0].relative_gap > 1e-6);
    std::ostringstream os;
    write_taylor_exact_csv(os, rows);
    CHECK(os.str().rfind("variant,taylor,exact,relative_gap\n", 0) == 0);
  }
  SUBCASE("high retention: derivation-consistent within 10%") {
    const TaylorExactInstance inst{z, ExactDesign({3, 3, 3, 3}), Eigen::VectorXd::Constant(4, 0.9), {0.7, 0.2}};
    const auto rows = taylor_vs_exact_report(inst, {CorrectionVariant::DerivationConsistent});
    CHECK(rows[0].relative_gap <= 0.10);
  }
  SUBCASE("eta2 = 0: bias terms vanish for both variants") {
    const TaylorExactInstance inst{z, ExactDesign({3, 3, 3, 3}), Eigen::VectorXd::Constant(4, 0.9), {0.0, 0.2}};
    const Design d = inst.design.as_design();
    const auto a = taylor_loss(z, d, inst.retention, inst.params, CorrectionVariant::PaperLiteral);
    const auto b = taylor_loss(z, d, inst.retention, inst.params, CorrectionVariant::DerivationConsistent);
    CHECK(a.bias_correction == 0.0);
    CHECK(b.bias_correction == 0.0);
    CHECK(a.variance_term == b.variance_term);
    CHECK(a.variance_correction != b.variance_correction);
  }
}
