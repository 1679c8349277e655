#ifndef ROBUST_DESIGN_CRITERION_HPP
#define ROBUST_DESIGN_CRITERION_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "robust_design/model.hpp"
#include "robust_design/numerics.hpp"

namespace robust_design {

/// Which weight matrix C multiplies the first-order missingness corrections.
///
/// PaperLiteral: C = I - D_xi P and the eigenvalue sensitivity
///   (I - R D_xi) v1 v1^T R, both exactly as printed in the source theorem.
/// DerivationConsistent: C = D_xi (I - P), the expectation of sum_j (m_ij - 1),
///   with the exact sensitivity lambda_max (I - R D_xi) v1 v1^T R. Both
///   corrections vanish when P = I.
enum class CorrectionVariant { PaperLiteral, DerivationConsistent };

std::string to_string(CorrectionVariant v);
/// Accepts "paper", "paper-literal", "derivation", "derivation-consistent".
CorrectionVariant parse_variant(const std::string& s);

/// R = Z (Z^T D Z)^{-1} Z^T for a diagonal weight vector D.
struct HatMatrices {
  Eigen::MatrixXd r;
  Eigen::VectorXd d;
  Eigen::MatrixXd info;  // Z^T D Z
};

HatMatrices hat(const Eigen::MatrixXd& z, const Eigen::VectorXd& d);

/// Z together with Z^T Z and its Cholesky factor; reused across every weight
/// vector evaluated against the same model matrix.
class ProjectionGeometry {
 public:
  explicit ProjectionGeometry(Eigen::MatrixXd z);

  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const numerics::Cholesky& gram_factor() const { return gram_chol_; }
  Eigen::Index rows() const { return z_.rows(); }
  Eigen::Index cols() const { return z_.cols(); }

 private:
  Eigen::MatrixXd z_;
  Eigen::MatrixXd gram_;
  numerics::Cholesky gram_chol_;
};

/// Everything the criteria need from (Z, D) without forming N x N matrices.
/// The nonzero spectrum of D R^2 D equals that of the p x p matrix V^T V with
/// V = D Z (Z^T D Z)^{-1} L, where Z^T Z = L L^T.
struct SpectralTerms {
  double chmax = 0.0;         // largest eigenvalue of D R^2 D
  Eigen::VectorXd v1;         // its unit eigenvector (canonical sign)
  double gap_ratio = 1.0;
  double trace_r = 0.0;       // tr R
  Eigen::VectorXd r2_diag;    // diag(R^2)
  Eigen::VectorXd r_v1;       // R v1
  Eigen::VectorXd rd_v1;      // R D v1
};

SpectralTerms spectral_terms(const ProjectionGeometry& geom, const Eigen::VectorXd& d);

/// Terms of the maximized MMPE for one realized missing pattern.
struct PatternTerms {
  double chmax = 0.0;    // Ch_max(D_xiM R^2(xi, M) D_xiM)
  double trace_r = 0.0;  // tr R(xi, M)
  double gap_ratio = 1.0;
  double value = 0.0;    // eta2/(N n) (chmax + 1) + sigma2/N trace_r
};

PatternTerms mmpe_max_given_pattern(const Eigen::MatrixXd& z, const MissingPattern& pattern,
                                    const RobustnessParams& params, int n);
PatternTerms mmpe_max_given_pattern(const ProjectionGeometry& geom, const Eigen::VectorXd& observed,
                                    const RobustnessParams& params, int n);

/// How E_M is taken: exhaustive product-binomial enumeration or seeded
/// Monte Carlo over count vectors.
struct ExpectationMode {
  enum class Kind { Enumerate, MonteCarlo };
  Kind kind = Kind::Enumerate;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  static ExpectationMode enumerate() { return {}; }
  static ExpectationMode monte_carlo(std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
    return {Kind::MonteCarlo, reps, seed, threads};
  }
};

/// Maximum number of count vectors enumerate mode will visit.
inline constexpr double kMaxEnumeratedPatterns = 1e6;

struct ExpectedMmpe {
  double value = 0.0;
  double std_error = 0.0;
  double expected_chmax = 0.0;
  double expected_chmax_se = 0.0;
  double expected_trace = 0.0;
  double expected_trace_se = 0.0;
  std::size_t evaluated = 0;      // nonsingular patterns / accepted draws
  std::size_t singular = 0;       // singular patterns / discarded draws
  double singular_mass = 0.0;     // enumerate mode: probability of a singular pattern
};

/// E_M of the maximized MMPE, conditional on a nonsingular pattern.
ExpectedMmpe expected_mmpe_max(const Eigen::MatrixXd& z, const ExactDesign& design,
                               const Eigen::VectorXd& retention, const RobustnessParams& params,
                               const ExpectationMode& mode);

/// Five-term breakdown of the first-order (Taylor) robust loss.
struct LossReport {
  double total = 0.0;
  double bias_eig_term = 0.0;        // eta2/(N n) Ch_max(D R^2 D)
  double variance_term = 0.0;        // sigma2/N tr R
  double constant_term = 0.0;        // eta2/(N n)
  double bias_correction = 0.0;      // -2 eta2/(N n) tr[C A]
  double variance_correction = 0.0;  // sigma2/N tr[C R^2]
  CorrectionVariant variant = CorrectionVariant::DerivationConsistent;
  double eig_gap_ratio = 1.0;

  double term_sum() const;
  nlohmann::json to_json() const;
};

LossReport taylor_loss(const ProjectionGeometry& geom, const Design& design, const Eigen::VectorXd& retention,
                       const RobustnessParams& params, CorrectionVariant variant);
LossReport taylor_loss(const Eigen::MatrixXd& z, const Design& design, const Eigen::VectorXd& retention,
                       const RobustnessParams& params, CorrectionVariant variant);

/// taylor_loss with Z = Z(beta).
LossReport nonlinear_taylor_loss(const NonlinearModel& model, const Eigen::VectorXd& beta,
                                 const DesignSpace& space, const Design& design,
                                 const Eigen::VectorXd& retention, const RobustnessParams& params,
                                 CorrectionVariant variant);

/// Prior-averaged nonlinear loss. Z(beta(t)) is computed once per quadrature
/// node at construction, so evaluating many designs is cheap.
class BayesianLoss {
 public:
  BayesianLoss(const NonlinearModel& model, const DesignSpace& space, Eigen::VectorXd retention,
               RobustnessParams params, numerics::TensorRule rule, CorrectionVariant variant);

  /// Term-wise weighted average over nodes; eig_gap_ratio is the minimum
  /// over nodes.
  LossReport operator()(const Design& design) const;

  std::size_t num_nodes() const { return rule_.size(); }
  const numerics::TensorRule& rule() const { return rule_; }

 private:
  std::vector<ProjectionGeometry> nodes_;
  std::vector<Eigen::VectorXd> betas_;
  Eigen::VectorXd retention_;
  RobustnessParams params_;
  numerics::TensorRule rule_;
  double weight_sum_ = 0.0;
  CorrectionVariant variant_;
};

/// Builds the tensor rule from the model's priors with k nodes per coordinate.
numerics::TensorRule prior_rule(const NonlinearModel& model, std::size_t k);

LossReport bayesian_loss(const NonlinearModel& model, const DesignSpace& space, const Design& design,
                         const Eigen::VectorXd& retention, const RobustnessParams& params,
                         const numerics::TensorRule& rule, CorrectionVariant variant);

/// Gradient of Ch_max(D R^2 D) with respect to the diagonal weights d_i
/// (one missing indicator m_ij moves d_i by one).
Eigen::VectorXd chmax_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& d);
/// The sensitivity as printed in the source derivation, 2((I - R D) v1 v1^T R)_ii.
/// It equals chmax_gradient / Ch_max.
Eigen::VectorXd chmax_gradient_printed(const Eigen::MatrixXd& z, const Eigen::VectorXd& d);

/// Least-favourable contamination Psi* = eta K u1 within the neighbourhood
/// {Psi : Z^T Psi = 0, ||Psi|| <= eta}.
struct WorstCase {
  Eigen::VectorXd psi;
  double value = 0.0;          // attained maximum of the MMPE over the neighbourhood
  double bound = 0.0;          // full-matrix form eta2/(Nn)(E[Ch_max] + 1) + sigma2/N E[tr R]
  double variance_part = 0.0;  // sigma2/N E[tr R]
  bool saturated = false;      // N == rank(Z): empty complement, Psi* = 0
};

struct WorstCaseMode {
  enum class Kind { PlugIn, Enumerate, MonteCarlo };
  Kind kind = Kind::PlugIn;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  static WorstCaseMode plug_in() { return {}; }
  static WorstCaseMode enumerate() { return {Kind::Enumerate}; }
  static WorstCaseMode monte_carlo(std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
    return {Kind::MonteCarlo, reps, seed, threads};
  }
};

/// Plug-in mode uses M = 1 (D = D_xi, fractional weights allowed).
WorstCase worst_case_contamination(const Eigen::MatrixXd& z, const Design& design,
                                   const Eigen::VectorXd& retention, const RobustnessParams& params);
/// Enumerate / Monte-Carlo modes take E_M over integer replicate counts.
WorstCase worst_case_contamination(const Eigen::MatrixXd& z, const ExactDesign& design,
                                   const Eigen::VectorXd& retention, const RobustnessParams& params,
                                   const WorstCaseMode& mode);

/// Exact maximized-MMPE value for a given contamination vector (linear model):
/// (1/(N n)) psi^T (E_M[D R^2 D] + I) psi + sigma2/N E_M[tr R].
double mmpe_for_contamination(const Eigen::MatrixXd& z, const ExactDesign& design,
                              const Eigen::VectorXd& retention, const RobustnessParams& params,
                              const Eigen::VectorXd& psi);

}  // namespace robust_design

#endif  // ROBUST_DESIGN_CRITERION_HPP
