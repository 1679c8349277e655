#include <cmath>
#include <random>

#include "doctest.h"
#include "robust_design/criterion.hpp"
#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"
#include "../support/instances.hpp"

using namespace robust_design;
using testing_support::random_instance;

namespace {

struct QuietWarnings {
  WarningHandler previous = set_warning_handler([](const std::string&, const std::string&) {});
  ~QuietWarnings() { set_warning_handler(previous); }
};

Eigen::MatrixXd dense_drrd(const Eigen::MatrixXd& z, const Eigen::VectorXd& d) {
  const HatMatrices h = hat(z, d);
  const Eigen::MatrixXd m = d.asDiagonal() * h.r * h.r * d.asDiagonal();
  return 0.5 * (m + m.transpose());
}

}  // namespace

TEST_CASE("hat matrix projection identities") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = random_instance(rng);
    const HatMatrices h = hat(inst.z, inst.d);
    const Eigen::MatrixXd rdr = h.r * inst.d.asDiagonal() * h.r;
    CHECK((rdr - h.r).norm() <= 1e-8 * h.r.norm());
    CHECK((inst.d.asDiagonal() * h.r).trace() == doctest::Approx(inst.z.cols()).epsilon(1e-8));
  }
}

TEST_CASE("hat rejects a rank-deficient weighted support") {
  Eigen::MatrixXd z(3, 2);
  z << 1, 0, 1, 1, 1, 2;
  CHECK_THROWS_AS(hat(z, Eigen::Vector3d(1.0, 0.0, 0.0)), SingularInformation);
  CHECK_THROWS_AS(hat(z, Eigen::Vector3d(1.0, -1.0, 0.0)), InvalidArgument);
}

TEST_CASE("low-rank spectral terms agree with the dense route") {
  QuietWarnings quiet;
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    const auto inst = random_instance(rng, 25, 5);
    const ProjectionGeometry geom(inst.z);
    const SpectralTerms s = spectral_terms(geom, inst.d);
    const HatMatrices h = hat(inst.z, inst.d);
    const numerics::SymTopEig top = numerics::sym_top_eig(dense_drrd(inst.z, inst.d));
    CHECK(s.chmax == doctest::Approx(top.lambda_max).epsilon(1e-9));
    CHECK(s.trace_r == doctest::Approx(h.r.trace()).epsilon(1e-9));
    CHECK((s.r2_diag - (h.r * h.r).diagonal()).norm() <= 1e-9 * s.r2_diag.norm());
    if (top.gap_ratio > 1e-6) {
      CHECK(std::abs(std::abs(s.v1.dot(top.v1)) - 1.0) < 1e-8);
      CHECK((s.r_v1 - h.r * s.v1).norm() <= 1e-9 * (1.0 + s.r_v1.norm()));
      CHECK((s.rd_v1 - h.r * inst.d.asDiagonal() * s.v1).norm() <= 1e-9 * (1.0 + s.rd_v1.norm()));
    }
  }
}

TEST_CASE("taylor loss reduces to the exact maximized MMPE when nothing is missing") {
  std::mt19937_64 rng(13);
  const RobustnessParams params{0.7, 0.2};
  for (int rep = 0; rep < 50; ++rep) {
    const auto inst = random_instance(rng);
    const Eigen::Index size = inst.z.rows();
    const Design design(testing_support::random_simplex(rng, size), 10);
    const Eigen::VectorXd p = Eigen::VectorXd::Ones(size);
    const LossReport r = taylor_loss(inst.z, design, p, params, CorrectionVariant::DerivationConsistent);
    CHECK(r.bias_correction == 0.0);
    CHECK(r.variance_correction == 0.0);
    const PatternTerms exact = mmpe_max_given_pattern(ProjectionGeometry(inst.z), design.scaled(), params, 10);
    CHECK(r.total == doctest::Approx(exact.value).epsilon(1e-12));
    CHECK(r.term_sum() == doctest::Approx(r.total).epsilon(1e-15));
  }
}

TEST_CASE("paper-literal corrections differ from the derivation-consistent ones") {
  std::mt19937_64 rng(14);
  const auto inst = random_instance(rng, 10, 3);
  const Eigen::Index size = inst.z.rows();
  const Design design(testing_support::random_simplex(rng, size), 12);
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(size, 0.8);
  const RobustnessParams params{1.0, 0.5};
  const LossReport a = taylor_loss(inst.z, design, p, params, CorrectionVariant::PaperLiteral);
  const LossReport b = taylor_loss(inst.z, design, p, params, CorrectionVariant::DerivationConsistent);
  CHECK(a.bias_eig_term == b.bias_eig_term);
  CHECK(a.variance_term == b.variance_term);
  CHECK(a.variance_correction != b.variance_correction);
  // C = D (I - P) here is 0.2 d_i, so the variance correction is 0.2 sigma2/N sum d_i (R^2)_ii
  const HatMatrices h = hat(inst.z, design.scaled());
  const double expected =
      params.sigma2 / static_cast<double>(size) * 0.2 * design.scaled().dot((h.r * h.r).diagonal());
  CHECK(b.variance_correction == doctest::Approx(expected).epsilon(1e-10));

  const LossReport c = taylor_loss(inst.z, design, p, {0.0, 0.5}, CorrectionVariant::PaperLiteral);
  CHECK(c.bias_correction == 0.0);
  CHECK(c.bias_eig_term == 0.0);
}

TEST_CASE("eigenvalue gradient matches finite differences; printed form is off by Ch_max") {
  QuietWarnings quiet;
  std::mt19937_64 rng(15);
  int checked = 0;
  for (int rep = 0; rep < 200 && checked < 30; ++rep) {
    const auto inst = random_instance(rng, 12, 3);
    const SpectralTerms s = spectral_terms(ProjectionGeometry(inst.z), inst.d);
    if (s.gap_ratio < 1e-3) continue;
    ++checked;
    const Eigen::VectorXd g = chmax_gradient(inst.z, inst.d);
    const Eigen::VectorXd printed = chmax_gradient_printed(inst.z, inst.d);
    Eigen::VectorXd fd(inst.d.size());
    for (Eigen::Index i = 0; i < inst.d.size(); ++i) fd(i) = testing_support::fd_chmax(inst.z, inst.d, i, 1e-6);
    CHECK((g - fd).norm() <= 1e-5 * fd.norm());
    CHECK((printed * s.chmax - g).norm() <= 1e-10 * (1.0 + g.norm()));
  }
  CHECK(checked == 30);
}

TEST_CASE("enumeration oracle on the two-point intercept model") {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Ones(2, 1);
  const ExactDesign design({1, 1});
  const Eigen::VectorXd p = Eigen::Vector2d(0.5, 0.5);
  const RobustnessParams params{1.0, 1.0};
  const ExpectedMmpe e = expected_mmpe_max(z, design, p, params, ExpectationMode::enumerate());
  CHECK(e.expected_trace == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
  CHECK(e.expected_chmax == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
  CHECK(e.singular == 1);
  CHECK(e.singular_mass == doctest::Approx(0.25));
  const ExpectedMmpe mc = expected_mmpe_max(z, design, p, params, ExpectationMode::monte_carlo(20000, 5));
  CHECK(std::abs(mc.expected_trace - 5.0 / 3.0) < 3.0 * mc.expected_trace_se);
  CHECK(std::abs(mc.expected_chmax - 5.0 / 3.0) < 3.0 * mc.expected_chmax_se);
}

TEST_CASE("monte-carlo expectation is thread-count invariant") {
  std::mt19937_64 rng(16);
  const auto inst = random_instance(rng, 6, 2);
  std::vector<int> counts(static_cast<std::size_t>(inst.z.rows()), 2);
  const ExactDesign design(counts);
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(inst.z.rows(), 0.8);
  const auto a = expected_mmpe_max(inst.z, design, p, {1.0, 1.0}, ExpectationMode::monte_carlo(500, 3, 1));
  const auto b = expected_mmpe_max(inst.z, design, p, {1.0, 1.0}, ExpectationMode::monte_carlo(500, 3, 4));
  CHECK(a.value == b.value);
  CHECK(a.std_error == b.std_error);
}

TEST_CASE("all-singular patterns are infeasible") {
  Eigen::MatrixXd z(2, 2);
  z << 1, 0, 1, 1;
  CHECK_THROWS_AS(expected_mmpe_max(z, ExactDesign({1, 0}), Eigen::Vector2d(0.5, 0.5), {1.0, 1.0},
                                    ExpectationMode::enumerate()),
                  InfeasibleProblem);
  CHECK_THROWS_AS(expected_mmpe_max(z, ExactDesign({1, 1}), Eigen::Vector2d(0.1, 0.1), {1.0, 1.0},
                                    ExpectationMode::monte_carlo(200, 1)),
                  InfeasibleProblem);
}

TEST_CASE("worst-case contamination lies in the neighbourhood and attains the maximum") {
  QuietWarnings quiet;
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd z = testing_support::random_matrix(rng, 6, 2);
  const ExactDesign design({2, 1, 2, 1, 2, 1});
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(6, 0.85);
  const RobustnessParams params{0.8, 0.3};
  const WorstCase wc = worst_case_contamination(z, design, p, params, WorstCaseMode::enumerate());
  CHECK(!wc.saturated);
  CHECK(wc.psi.norm() == doctest::Approx(std::sqrt(params.eta2)).epsilon(1e-12));
  CHECK((z.transpose() * wc.psi).norm() < 1e-10);
  CHECK(wc.value <= wc.bound * (1.0 + 1e-12));
  CHECK(mmpe_for_contamination(z, design, p, params, wc.psi) == doctest::Approx(wc.value).epsilon(1e-12));
  const Eigen::MatrixXd k = numerics::orthonormal_complement(z);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd u = testing_support::random_matrix(rng, k.cols(), 1);
    const Eigen::VectorXd psi = std::sqrt(params.eta2) * k * u.normalized();
    CHECK(mmpe_for_contamination(z, design, p, params, psi) <= wc.value * (1.0 + 1e-12));
  }
}

TEST_CASE("plug-in worst case uses D_xi") {
  std::mt19937_64 rng(18);
  const Eigen::MatrixXd z = testing_support::random_matrix(rng, 8, 3);
  const Design design(testing_support::random_simplex(rng, 8), 10);
  const RobustnessParams params{1.0, 0.1};
  const WorstCase wc = worst_case_contamination(z, design, Eigen::VectorXd::Constant(8, 0.9), params);
  const Eigen::MatrixXd k = numerics::orthonormal_complement(z);
  const Eigen::MatrixXd g = k.transpose() * (dense_drrd(z, design.scaled()) + Eigen::MatrixXd::Identity(8, 8)) * k;
  const double lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (g + g.transpose())).eigenvalues().maxCoeff();
  CHECK(wc.value == doctest::Approx(params.eta2 / 80.0 * lam + params.sigma2 / 8.0 * hat(z, design.scaled()).r.trace()));
}

TEST_CASE("saturated design space gives zero contamination") {
  reset_warning_counts();
  QuietWarnings quiet;
  std::mt19937_64 rng(19);
  const Eigen::MatrixXd z = testing_support::random_matrix(rng, 3, 3);
  const WorstCase wc =
      worst_case_contamination(z, Design::uniform(3, 6), Eigen::VectorXd::Constant(3, 0.9), {1.0, 0.1});
  CHECK(wc.saturated);
  CHECK(wc.psi.norm() == 0.0);
  CHECK(wc.value == doctest::Approx(wc.variance_part));
  CHECK(wc.bound > wc.value);
  CHECK(warning_count("saturated_design_space") == 1);
}

TEST_CASE("bayesian loss with a linear model equals the plain taylor loss") {
  const DesignSpace space = DesignSpace::grid({{0.0, 1.0, 12}});
  const LinearBasis basis = models::polynomial(2);
  const auto nl = models::from_linear(basis, {Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()},
                                      {numerics::Prior::uniform(), numerics::Prior::uniform(), numerics::Prior::uniform()});
  const Eigen::VectorXd p = MissingnessModel(Eigen::Vector2d(1.0, 1.0)).probabilities(space);
  std::mt19937_64 rng(20);
  const Design design(testing_support::random_simplex(rng, 12), 20);
  const RobustnessParams params{0.5, 0.1};
  const LossReport a = bayesian_loss(nl, space, design, p, params, prior_rule(nl, 3), CorrectionVariant::PaperLiteral);
  const LossReport b = taylor_loss(design_matrix(basis, space), design, p, params, CorrectionVariant::PaperLiteral);
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
  CHECK(a.bias_correction == doctest::Approx(b.bias_correction).epsilon(1e-10));
}

TEST_CASE("bayesian loss is the prior-weighted average of node losses") {
  const DesignSpace space = DesignSpace::grid({{1.0, 30.0, 30}});
  const auto m = models::exponential({Eigen::Vector2d(28.5, -0.02), Eigen::Vector2d(85.5, -0.06)},
                                     {numerics::Prior::beta(2.0, 4.0), numerics::Prior::beta(2.0, 4.0)});
  const Eigen::VectorXd p = MissingnessModel(Eigen::Vector2d(2.0, 0.05)).probabilities(space);
  const Design design = Design::uniform(30, 15);
  const RobustnessParams params{1.0, 0.01};
  const numerics::TensorRule rule = prior_rule(m, 4);
  const LossReport avg = bayesian_loss(m, space, design, p, params, rule, CorrectionVariant::DerivationConsistent);
  double total = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    total += rule.weights[k] * nonlinear_taylor_loss(m, m.transform.map(rule.nodes[k]), space, design, p, params,
                                                      CorrectionVariant::DerivationConsistent)
                                   .total;
    mass += rule.weights[k];
  }
  CHECK(avg.total == doctest::Approx(total / mass).epsilon(1e-12));
}

TEST_CASE("variant names") {
  CHECK(parse_variant("paper") == CorrectionVariant::PaperLiteral);
  CHECK(parse_variant("derivation-consistent") == CorrectionVariant::DerivationConsistent);
  CHECK_THROWS_AS(parse_variant("other"), InvalidArgument);
  CHECK(to_string(CorrectionVariant::PaperLiteral) == "paper-literal");
}
