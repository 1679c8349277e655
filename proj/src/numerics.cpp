#include "robust_design/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"

namespace robust_design::numerics {

namespace {

void require_symmetric(const Eigen::MatrixXd& a, const char* who) {
  if (a.rows() != a.cols()) {
    throw InvalidArgument(std::string(who) + ": matrix is not square");
  }
  if (!a.allFinite()) {
    throw InvalidArgument(std::string(who) + ": matrix has non-finite entries");
  }
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream os;
    os << who << ": matrix is not symmetric (max |A - A^T| = " << asym << ")";
    throw InvalidArgument(os.str());
  }
}

constexpr Eigen::Index kDenseEigenLimit = 512;

// Power iteration on (A + shift I), optionally deflating a known eigenvector.
std::pair<double, Eigen::VectorXd> power_iteration(const Eigen::MatrixXd& a, double shift,
                                                   const Eigen::VectorXd* deflate,
                                                   double deflate_value) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
  if (deflate) x -= deflate->dot(x) * *deflate;
  x.normalize();
  double mu = 0.0;
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd y = a * x + shift * x;
    if (deflate) y -= (deflate_value + shift) * deflate->dot(x) * *deflate;
    const double next_mu = x.dot(y);
    const double norm = y.norm();
    if (norm == 0.0) return {-shift, x};
    y /= norm;
    const double change = (y - x).norm();
    x = std::move(y);
    if (it > 0 && std::abs(next_mu - mu) <= 1e-15 * std::abs(next_mu) && change < 1e-10) {
      mu = next_mu;
      break;
    }
    mu = next_mu;
  }
  return {mu - shift, x};
}

}  // namespace

Cholesky::Cholesky(const Eigen::MatrixXd& a, double rel_tol) {
  require_symmetric(a, "Cholesky");
  const Eigen::Index p = a.rows();
  const double threshold = rel_tol * std::max(a.trace(), 0.0) / std::max<Eigen::Index>(p, 1);
  l_ = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double d = a(j, j) - l_.row(j).head(j).squaredNorm();
    if (!(d > threshold) || d <= 0.0) {
      std::ostringstream os;
      os << "information matrix is not positive definite (pivot " << j << " = " << d << ")";
      throw SingularInformation(os.str(), static_cast<std::size_t>(j));
    }
    const double ljj = std::sqrt(d);
    l_(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < p; ++i) {
      l_(i, j) = (a(i, j) - l_.row(i).head(j).dot(l_.row(j).head(j))) / ljj;
    }
  }
}

Eigen::MatrixXd Cholesky::solve(const Eigen::MatrixXd& b) const {
  const auto l = l_.triangularView<Eigen::Lower>();
  Eigen::MatrixXd y = l.solve(b);
  return l.transpose().solve(y);
}

Eigen::VectorXd Cholesky::solve(const Eigen::VectorXd& b) const {
  const auto l = l_.triangularView<Eigen::Lower>();
  Eigen::VectorXd y = l.solve(b);
  return l.transpose().solve(y);
}

Eigen::MatrixXd Cholesky::inverse() const {
  return solve(Eigen::MatrixXd::Identity(l_.rows(), l_.cols()).eval());
}

Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (b.rows() != a.rows()) throw InvalidArgument("spd_solve: dimension mismatch");
  return Cholesky(a).solve(b);
}

void canonical_sign(Eigen::VectorXd& v) {
  if (v.size() == 0) return;
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v(idx) < 0.0) v = -v;
}

SymTopEig sym_top_eig(const Eigen::MatrixXd& a) {
  require_symmetric(a, "sym_top_eig");
  const Eigen::Index n = a.rows();
  if (n == 0) throw InvalidArgument("sym_top_eig: empty matrix");
  SymTopEig out;
  double lambda2 = 0.0;
  if (n <= kDenseEigenLimit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    out.lambda_max = es.eigenvalues()(n - 1);
    out.v1 = es.eigenvectors().col(n - 1);
    lambda2 = n > 1 ? es.eigenvalues()(n - 2) : out.lambda_max;
  } else {
    // Gershgorin bound makes A + shift I positive semi-definite.
    const double shift = a.cwiseAbs().rowwise().sum().maxCoeff();
    auto [l1, v1] = power_iteration(a, shift, nullptr, 0.0);
    auto [l2, v2] = power_iteration(a, shift, &v1, l1);
    out.lambda_max = l1;
    out.v1 = v1;
    lambda2 = l2;
  }
  out.v1.normalize();
  canonical_sign(out.v1);
  out.gap_ratio = n > 1 ? (out.lambda_max - lambda2) /
                              std::max(out.lambda_max, std::numeric_limits<double>::epsilon())
                        : 1.0;
  if (out.degenerate()) {
    warn("degenerate_top_eigenvalue",
         "top eigenvalue is not simple (gap ratio " + std::to_string(out.gap_ratio) +
             "); using the canonical eigenvector");
  }
  return out;
}

std::size_t numerical_rank(const Eigen::MatrixXd& z, double rel_tol) {
  if (z.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& z) {
  const Eigen::Index n = z.rows();
  if (z.cols() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeFullU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > 1e-10 * s(0)) ++r;
    }
  }
  return svd.matrixU().rightCols(n - r);
}

Prior Prior::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidArgument("beta prior requires finite a, b > 0");
  }
  return Prior{Kind::Beta, a, b};
}

double Prior::density(double t) const {
  if (t < 0.0 || t > 1.0) return 0.0;
  return kind == Kind::Uniform ? 1.0 : beta_density(t, a, b);
}

double beta_density(double t, double a, double b) {
  if (t < 0.0 || t > 1.0) return 0.0;
  if (t == 0.0 || t == 1.0) {
    const double e = t == 0.0 ? a : b;
    if (e < 1.0) return std::numeric_limits<double>::infinity();
    if (e > 1.0) return 0.0;
  }
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double la = a == 1.0 ? 0.0 : (a - 1.0) * std::log(t);
  const double lb = b == 1.0 ? 0.0 : (b - 1.0) * std::log1p(-t);
  return std::exp(log_norm + la + lb);
}

QuadratureRule gauss_legendre_unit(std::size_t k) {
  if (k < 2) throw InvalidArgument("quadrature rule needs at least 2 nodes");
  QuadratureRule rule;
  rule.nodes.resize(k);
  rule.weights.resize(k);
  const auto n = static_cast<double>(k);
  for (std::size_t i = 0; i < (k + 1) / 2; ++i) {
    // Newton iteration on P_k from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t j = 2; j <= k; ++j) {
        const auto jd = static_cast<double>(j);
        const double p2 = ((2.0 * jd - 1.0) * x * p1 - (jd - 1.0) * p0) / jd;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> (0, 1); ascending order
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[k - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = 0.5 * w;
    rule.weights[k - 1 - i] = 0.5 * w;
  }
  return rule;
}

QuadratureRule quadrature_rule(const Prior& prior, std::size_t k) {
  if (prior.kind == Prior::Kind::Beta) {
    // validates a, b
    (void)Prior::beta(prior.a, prior.b);
  }
  QuadratureRule rule = gauss_legendre_unit(k);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    rule.weights[i] *= prior.density(rule.nodes[i]);
  }
  return rule;
}

TensorRule tensor_product(std::span<const QuadratureRule> rules) {
  TensorRule out;
  if (rules.empty()) return out;
  std::size_t total = 1;
  for (const auto& r : rules) total *= r.size();
  const auto dim = static_cast<Eigen::Index>(rules.size());
  out.nodes.reserve(total);
  out.weights.reserve(total);
  std::vector<std::size_t> idx(rules.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Eigen::VectorXd node(dim);
    double w = 1.0;
    for (std::size_t d = 0; d < rules.size(); ++d) {
      node(static_cast<Eigen::Index>(d)) = rules[d].nodes[idx[d]];
      w *= rules[d].weights[idx[d]];
    }
    out.nodes.push_back(std::move(node));
    out.weights.push_back(w);
    for (std::size_t d = rules.size(); d-- > 0;) {
      if (++idx[d] < rules[d].size()) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace robust_design::numerics
