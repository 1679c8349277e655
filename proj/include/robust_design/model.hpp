#ifndef ROBUST_DESIGN_MODEL_HPP
#define ROBUST_DESIGN_MODEL_HPP

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "robust_design/numerics.hpp"

namespace robust_design {

/// Finite candidate set S = {x_1, ..., x_N}; one covariate vector per row.
class DesignSpace {
 public:
  struct Axis {
    double min = 0.0;
    double max = 1.0;
    std::size_t count = 1;
  };

  /// Rows of `points` are the candidate covariates. Points must be distinct.
  explicit DesignSpace(Eigen::MatrixXd points);

  /// Cartesian grid of equally spaced values per axis; the last axis varies
  /// fastest.
  static DesignSpace grid(const std::vector<Axis>& axes);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  Eigen::VectorXd point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  Eigen::MatrixXd points_;
};

/// Continuous design: probability weights on the design space and the total
/// sample size n. D_xi = diag(n * xi).
class Design {
 public:
  Design(Eigen::VectorXd weights, int n);

  static Design uniform(std::size_t size, int n);

  const Eigen::VectorXd& weights() const { return weights_; }
  int n() const { return n_; }
  std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
  /// Diagonal of D_xi.
  Eigen::VectorXd scaled() const { return static_cast<double>(n_) * weights_; }
  std::size_t support_size() const;

 private:
  Eigen::VectorXd weights_;
  int n_;
};

/// Integer replicate counts n_i.
class ExactDesign {
 public:
  explicit ExactDesign(std::vector<int> counts);

  const std::vector<int>& counts() const { return counts_; }
  int n() const { return n_; }
  std::size_t size() const { return counts_.size(); }
  Eigen::VectorXd as_vector() const;
  /// xi_i = n_i / n.
  Design as_design() const;
  /// Throws unless support(counts) is contained in support(parent).
  void check_support_within(const Design& parent) const;

 private:
  std::vector<int> counts_;
  int n_ = 0;
};

/// Realized number of non-missing responses k_i at each design point.
class MissingPattern {
 public:
  MissingPattern(std::vector<int> observed, const ExactDesign& design);
  explicit MissingPattern(std::vector<int> observed);

  const std::vector<int>& observed() const { return observed_; }
  /// Diagonal of D_{xi M}.
  Eigen::VectorXd as_vector() const;

 private:
  std::vector<int> observed_;
};

/// exp(eta) / (1 + exp(eta)) with eta = gamma_0 + gamma_1 x_1 + ... + gamma_q x_q,
/// evaluated without overflow.
double retention_probability(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma);

/// Logistic MCAR mechanism; gamma holds the intercept followed by one slope
/// per covariate.
class MissingnessModel {
 public:
  explicit MissingnessModel(Eigen::VectorXd gamma);

  const Eigen::VectorXd& gamma() const { return gamma_; }
  double probability(const Eigen::VectorXd& x) const { return retention_probability(x, gamma_); }
  /// Diagonal of P over the design space. Every entry must lie strictly in (0, 1).
  Eigen::VectorXd probabilities(const DesignSpace& space) const;

 private:
  Eigen::VectorXd gamma_;
};

struct RobustnessParams {
  double eta2 = 0.0;
  double sigma2 = 1.0;

  void validate() const;
};

/// Linear-in-parameters model f(x; beta) = z(x)^T beta.
struct LinearBasis {
  std::string name;
  std::size_t input_dim = 1;
  std::size_t num_params = 1;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> evaluate;
};

/// beta_j = at_zero_j + (at_one_j - at_zero_j) * t_j for unit-cube t.
struct AffineTransform {
  Eigen::VectorXd at_zero;
  Eigen::VectorXd at_one;

  Eigen::VectorXd map(const Eigen::VectorXd& t) const;
};

/// Response f(x; beta) with analytic Jacobian, prior over the unit cube and
/// the transform into parameter space.
struct NonlinearModel {
  std::string name;
  std::size_t input_dim = 1;
  std::size_t num_params = 1;
  std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& beta)> response;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& beta)> jacobian;
  AffineTransform transform;
  std::vector<numerics::Prior> priors;
};

using ModelSpec = std::variant<LinearBasis, NonlinearModel>;

std::size_t num_params(const ModelSpec& model);

namespace models {

/// 1, x, ..., x^degree in one variable.
LinearBasis polynomial(int degree);
/// 1, x1, x2, x1 x2, x1^2, x2^2.
LinearBasis full_quadratic();
/// Intercept only.
LinearBasis intercept();
/// beta_0 exp(beta_1 x).
NonlinearModel exponential(AffineTransform transform, std::vector<numerics::Prior> priors);
/// f(x; beta) = z(x)^T beta viewed as a nonlinear model (exact Jacobian z(x)).
NonlinearModel from_linear(const LinearBasis& basis, AffineTransform transform,
                           std::vector<numerics::Prior> priors);

}  // namespace models

/// Checks p <= N, finiteness of z / the Jacobian on every point (at `beta`, or
/// at the transform's centre for nonlinear models) and that each prior
/// integrates to 1 within 1e-8.
void validate_model(const ModelSpec& model, const DesignSpace& space,
                    const std::optional<Eigen::VectorXd>& beta = std::nullopt);

/// N x p matrix with rows z(x_i) (linear) or df(x_i; beta)/dbeta (nonlinear).
Eigen::MatrixXd design_matrix(const LinearBasis& basis, const DesignSpace& space);
Eigen::MatrixXd design_matrix(const NonlinearModel& model, const DesignSpace& space,
                              const Eigen::VectorXd& beta);
Eigen::MatrixXd design_matrix(const ModelSpec& model, const DesignSpace& space,
                              const std::optional<Eigen::VectorXd>& beta);

/// F(beta) = (f(x_i; beta))_i.
Eigen::VectorXd mean_response(const ModelSpec& model, const DesignSpace& space,
                              const Eigen::VectorXd& beta);

/// Max relative deviation between the analytic Jacobian and central finite
/// differences with step 1e-6 (1 + |beta_j|). Deviations are measured
/// relative to max(|analytic|, |fd|, 1e-6 * row scale).
double jacobian_check(const NonlinearModel& model, const Eigen::VectorXd& beta,
                      const DesignSpace& space);

/// Thread-safe memo of Z(beta) for one (model, space) pair.
class DesignMatrixCache {
 public:
  DesignMatrixCache(const NonlinearModel& model, const DesignSpace& space)
      : model_(&model), space_(&space) {}

  std::shared_ptr<const Eigen::MatrixXd> get(const Eigen::VectorXd& beta) const;
  std::size_t size() const;

 private:
  const NonlinearModel* model_;
  const DesignSpace* space_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<double>, std::shared_ptr<const Eigen::MatrixXd>> cache_;
};

}  // namespace robust_design

#endif  // ROBUST_DESIGN_MODEL_HPP
