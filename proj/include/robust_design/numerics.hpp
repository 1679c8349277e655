#ifndef ROBUST_DESIGN_NUMERICS_HPP
#define ROBUST_DESIGN_NUMERICS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace robust_design::numerics {

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Factorization fails with SingularInformation when a pivot drops to
/// `rel_tol * trace(A) / p` or below.
class Cholesky {
 public:
  explicit Cholesky(const Eigen::MatrixXd& a, double rel_tol = 1e-12);

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd inverse() const;
  const Eigen::MatrixXd& lower() const { return l_; }
  std::size_t dim() const { return static_cast<std::size_t>(l_.rows()); }

 private:
  Eigen::MatrixXd l_;
};

/// Solves A X = B for symmetric positive-definite A.
Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct SymTopEig {
  double lambda_max = 0.0;
  Eigen::VectorXd v1;
  /// (lambda_1 - lambda_2) / max(lambda_1, eps); 1 for a 1x1 matrix.
  double gap_ratio = 1.0;

  bool degenerate(double threshold = 1e-8) const { return gap_ratio < threshold; }
};

/// Flips v so that its largest-magnitude component (first one on ties) is
/// non-negative.
void canonical_sign(Eigen::VectorXd& v);

/// Top eigenpair of a symmetric matrix. Dense decomposition up to 512 rows,
/// shifted power iteration with deflation above. Warns (key
/// "degenerate_top_eigenvalue") when gap_ratio < 1e-8.
SymTopEig sym_top_eig(const Eigen::MatrixXd& a);

/// Numerical rank at tolerance rel_tol * sigma_max.
std::size_t numerical_rank(const Eigen::MatrixXd& z, double rel_tol = 1e-10);

/// Orthonormal basis K (N x (N - r)) of the orthogonal complement of the
/// column space of Z, r being the numerical rank at 1e-10 * ||Z||.
Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& z);

/// Prior density on [0, 1] for one unit-cube coordinate.
struct Prior {
  enum class Kind { Uniform, Beta };
  Kind kind = Kind::Uniform;
  double a = 1.0;
  double b = 1.0;

  static Prior uniform() { return {}; }
  static Prior beta(double a, double b);

  double density(double t) const;
};

/// Beta(a, b) density at t in [0, 1].
double beta_density(double t, double a, double b);

struct QuadratureRule {
  std::vector<double> nodes;    // in (0, 1)
  std::vector<double> weights;  // Gauss-Legendre weight times prior density
  std::size_t size() const { return nodes.size(); }
};

/// K-point Gauss-Legendre rule on (0, 1) (weights sum to 1).
QuadratureRule gauss_legendre_unit(std::size_t k);

/// Gauss-Legendre rule with weights multiplied by the prior density.
QuadratureRule quadrature_rule(const Prior& prior, std::size_t k);

struct TensorRule {
  std::vector<Eigen::VectorXd> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

/// Tensor product of one-dimensional rules; the last coordinate varies fastest.
TensorRule tensor_product(std::span<const QuadratureRule> rules);

}  // namespace robust_design::numerics

#endif  // ROBUST_DESIGN_NUMERICS_HPP
