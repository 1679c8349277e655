#ifndef ROBUST_DESIGN_CONFIG_HPP
#define ROBUST_DESIGN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"
#include "robust_design/criterion.hpp"
#include "robust_design/model.hpp"
#include "robust_design/optimizer.hpp"

namespace robust_design {

/// A fully validated problem: design space, model, missingness, robustness
/// parameters, sample size, variant, prior quadrature and PSO settings.
///
/// JSON layout (unknown keys are rejected):
///   design_space: {"grid": [{"min", "max", "count"}, ...]} | {"points": [[x...], ...]}
///   model: {"type": "polynomial", "degree"} | {"type": "full_quadratic"} |
///          {"type": "intercept"} |
///          {"type": "exponential", "transform": {"at_zero": [...], "at_one": [...]}}
///   missingness: {"gamma": [intercept, slope...]}
///   eta2, sigma2, n, variant ("paper" | "derivation"),
///   prior: {"type": "uniform"} | {"type": "beta", "a", "b"}   (nonlinear only)
///   quadrature_nodes (per parameter, default 16), beta_true (optional),
///   pso: {"swarm", "iterations", "restarts", "inertia", "cognitive", "social",
///         "tolerance", "patience"}, seed
struct ProblemConfig {
  DesignSpace space{Eigen::MatrixXd::Zero(1, 1)};
  ModelSpec model;
  Eigen::VectorXd gamma;
  RobustnessParams params;
  int n = 1;
  CorrectionVariant variant = CorrectionVariant::DerivationConsistent;
  std::size_t quadrature_nodes = 16;
  PsoConfig pso;
  std::uint64_t seed = 0;
  /// Parameter used by simulate / worstcase for nonlinear models; defaults to
  /// the transform image of the unit-cube centre.
  std::optional<Eigen::VectorXd> beta_true;

  bool nonlinear() const { return std::holds_alternative<NonlinearModel>(model); }
  Eigen::VectorXd retention() const;
  /// beta_true, the transform centre (nonlinear) or zeros (linear).
  Eigen::VectorXd reference_beta() const;
  /// Z at reference_beta().
  Eigen::MatrixXd reference_z() const;
};

/// Throws ConfigError with the offending key path on any problem.
ProblemConfig parse_config(const nlohmann::json& j);
ProblemConfig load_config(const std::filesystem::path& path);

/// The configured design criterion (Taylor loss for linear models, the
/// prior-averaged loss for nonlinear ones). Precomputes everything that does
/// not depend on the design.
class Problem {
 public:
  explicit Problem(ProblemConfig config);

  const ProblemConfig& config() const { return config_; }
  LossReport evaluate(const Design& design) const;
  double value(const Design& design) const { return evaluate(design).total; }

 private:
  ProblemConfig config_;
  Eigen::VectorXd retention_;
  std::optional<ProjectionGeometry> geometry_;
  std::unique_ptr<BayesianLoss> bayes_;
};

}  // namespace robust_design

#endif  // ROBUST_DESIGN_CONFIG_HPP
