#include "robust_design/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "robust_design/errors.hpp"

namespace robust_design {

namespace {

std::string describe_point(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ')';
  return os.str();
}

}  // namespace

DesignSpace::DesignSpace(Eigen::MatrixXd points) : points_(std::move(points)) {
  if (points_.rows() < 1) throw InvalidArgument("design space needs at least one point");
  if (points_.cols() < 1) throw InvalidArgument("design points need at least one coordinate");
  if (!points_.allFinite()) throw InvalidArgument("design points must be finite");
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < points_.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(points_.cols()));
    for (Eigen::Index j = 0; j < points_.cols(); ++j) row[static_cast<std::size_t>(j)] = points_(i, j);
    if (!seen.insert(row).second) {
      throw InvalidArgument("design space has a repeated point " +
                            describe_point(points_.row(i).transpose()));
    }
  }
}

DesignSpace DesignSpace::grid(const std::vector<Axis>& axes) {
  if (axes.empty()) throw InvalidArgument("grid needs at least one axis");
  std::size_t total = 1;
  for (const auto& ax : axes) {
    if (ax.count < 1) throw InvalidArgument("grid axis needs count >= 1");
    if (ax.count > 1 && !(ax.max > ax.min)) throw InvalidArgument("grid axis needs max > min");
    total *= ax.count;
  }
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(axes.size()));
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t r = 0; r < total; ++r) {
    for (std::size_t d = 0; d < axes.size(); ++d) {
      const auto& ax = axes[d];
      const double v = ax.count == 1 ? ax.min
                                     : ax.min + (ax.max - ax.min) * static_cast<double>(idx[d]) /
                                                    static_cast<double>(ax.count - 1);
      pts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = v;
    }
    for (std::size_t d = axes.size(); d-- > 0;) {
      if (++idx[d] < axes[d].count) break;
      idx[d] = 0;
    }
  }
  return DesignSpace(std::move(pts));
}

Design::Design(Eigen::VectorXd weights, int n) : weights_(std::move(weights)), n_(n) {
  if (n_ < 1) throw InvalidArgument("design sample size n must be >= 1");
  if (weights_.size() < 1) throw InvalidArgument("design needs at least one weight");
  if (!weights_.allFinite() || weights_.minCoeff() < 0.0) {
    throw InvalidArgument("design weights must be finite and non-negative");
  }
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "design weights must sum to 1 (sum = " << total << ")";
    throw InvalidArgument(os.str());
  }
}

Design Design::uniform(std::size_t size, int n) {
  return Design(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(size), 1.0 / static_cast<double>(size)), n);
}

std::size_t Design::support_size() const {
  return static_cast<std::size_t>((weights_.array() > 0.0).count());
}

ExactDesign::ExactDesign(std::vector<int> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) throw InvalidArgument("exact design needs at least one count");
  for (int c : counts_) {
    if (c < 0) throw InvalidArgument("exact design counts must be non-negative");
  }
  n_ = std::accumulate(counts_.begin(), counts_.end(), 0);
  if (n_ < 1) throw InvalidArgument("exact design must allocate at least one run");
}

Eigen::VectorXd ExactDesign::as_vector() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(counts_.size()));
  for (std::size_t i = 0; i < counts_.size(); ++i) v(static_cast<Eigen::Index>(i)) = counts_[i];
  return v;
}

Design ExactDesign::as_design() const {
  Eigen::VectorXd w = as_vector() / static_cast<double>(n_);
  // exact renormalization keeps the unit-sum invariant to the last bit
  w /= w.sum();
  return Design(std::move(w), n_);
}

void ExactDesign::check_support_within(const Design& parent) const {
  if (parent.size() != counts_.size()) throw InvalidArgument("exact design size differs from parent design");
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] > 0 && parent.weights()(static_cast<Eigen::Index>(i)) <= 0.0) {
      throw InvalidArgument("exact design puts runs outside the parent design's support (index " +
                            std::to_string(i) + ")");
    }
  }
}

MissingPattern::MissingPattern(std::vector<int> observed) : observed_(std::move(observed)) {
  for (int k : observed_) {
    if (k < 0) throw InvalidArgument("observed counts must be non-negative");
  }
}

MissingPattern::MissingPattern(std::vector<int> observed, const ExactDesign& design)
    : MissingPattern(std::move(observed)) {
  if (observed_.size() != design.size()) throw InvalidArgument("pattern size differs from design size");
  for (std::size_t i = 0; i < observed_.size(); ++i) {
    if (observed_[i] > design.counts()[i]) {
      throw InvalidArgument("observed count exceeds replicate count at index " + std::to_string(i));
    }
  }
}

Eigen::VectorXd MissingPattern::as_vector() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(observed_.size()));
  for (std::size_t i = 0; i < observed_.size(); ++i) v(static_cast<Eigen::Index>(i)) = observed_[i];
  return v;
}

double retention_probability(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma) {
  if (gamma.size() != x.size() + 1) {
    throw InvalidArgument("gamma must hold an intercept plus one slope per covariate (expected " +
                          std::to_string(x.size() + 1) + " entries, got " +
                          std::to_string(gamma.size()) + ")");
  }
  if (!x.allFinite() || !gamma.allFinite()) throw InvalidArgument("retention_probability: non-finite input");
  const double eta = gamma(0) + gamma.tail(x.size()).dot(x);
  if (eta < 0.0) {
    const double e = std::exp(eta);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(-eta));
}

MissingnessModel::MissingnessModel(Eigen::VectorXd gamma) : gamma_(std::move(gamma)) {
  if (gamma_.size() < 1) throw InvalidArgument("gamma needs at least an intercept");
  if (!gamma_.allFinite()) throw InvalidArgument("gamma must be finite");
}

Eigen::VectorXd MissingnessModel::probabilities(const DesignSpace& space) const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(space.size()));
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double pi = probability(space.point(i));
    if (!(pi > 0.0 && pi < 1.0)) {
      throw InvalidArgument("retention probability at " + describe_point(space.point(i)) +
                            " is not strictly inside (0, 1)");
    }
    p(static_cast<Eigen::Index>(i)) = pi;
  }
  return p;
}

void RobustnessParams::validate() const {
  if (!(eta2 >= 0.0) || !std::isfinite(eta2)) throw InvalidArgument("eta2 must be finite and >= 0");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be finite and > 0");
}

Eigen::VectorXd AffineTransform::map(const Eigen::VectorXd& t) const {
  if (t.size() != at_zero.size() || t.size() != at_one.size()) {
    throw InvalidArgument("parameter transform dimension mismatch");
  }
  return at_zero + (at_one - at_zero).cwiseProduct(t);
}

std::size_t num_params(const ModelSpec& model) {
  return std::visit([](const auto& m) { return m.num_params; }, model);
}

namespace models {

LinearBasis polynomial(int degree) {
  if (degree < 0) throw InvalidArgument("polynomial degree must be >= 0");
  LinearBasis b;
  b.name = "polynomial(" + std::to_string(degree) + ")";
  b.input_dim = 1;
  b.num_params = static_cast<std::size_t>(degree) + 1;
  b.evaluate = [degree](const Eigen::VectorXd& x) {
    Eigen::VectorXd z(degree + 1);
    double v = 1.0;
    for (int k = 0; k <= degree; ++k) {
      z(k) = v;
      v *= x(0);
    }
    return z;
  };
  return b;
}

LinearBasis full_quadratic() {
  LinearBasis b;
  b.name = "full_quadratic";
  b.input_dim = 2;
  b.num_params = 6;
  b.evaluate = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd z(6);
    z << 1.0, x(0), x(1), x(0) * x(1), x(0) * x(0), x(1) * x(1);
    return z;
  };
  return b;
}

LinearBasis intercept() {
  LinearBasis b;
  b.name = "intercept";
  b.input_dim = 0;  // accepts any covariate dimension
  b.num_params = 1;
  b.evaluate = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Ones(1).eval(); };
  return b;
}

NonlinearModel exponential(AffineTransform transform, std::vector<numerics::Prior> priors) {
  NonlinearModel m;
  m.name = "exponential";
  m.input_dim = 1;
  m.num_params = 2;
  m.response = [](const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
    return beta(0) * std::exp(beta(1) * x(0));
  };
  m.jacobian = [](const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
    const double e = std::exp(beta(1) * x(0));
    Eigen::VectorXd g(2);
    g << e, beta(0) * x(0) * e;
    return g;
  };
  m.transform = std::move(transform);
  m.priors = std::move(priors);
  return m;
}

NonlinearModel from_linear(const LinearBasis& basis, AffineTransform transform,
                           std::vector<numerics::Prior> priors) {
  NonlinearModel m;
  m.name = basis.name + " (as nonlinear)";
  m.input_dim = basis.input_dim;
  m.num_params = basis.num_params;
  auto eval = basis.evaluate;
  m.response = [eval](const Eigen::VectorXd& x, const Eigen::VectorXd& beta) { return eval(x).dot(beta); };
  m.jacobian = [eval](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return eval(x); };
  m.transform = std::move(transform);
  m.priors = std::move(priors);
  return m;
}

}  // namespace models

namespace {

void check_input_dim(std::size_t expected, const DesignSpace& space, const std::string& name) {
  if (expected != 0 && expected != space.dim()) {
    throw InvalidArgument("model '" + name + "' expects " + std::to_string(expected) +
                          "-dimensional covariates, design space has " + std::to_string(space.dim()));
  }
}

void check_row(const Eigen::VectorXd& row, std::size_t p, const Eigen::VectorXd& x, const std::string& name) {
  if (static_cast<std::size_t>(row.size()) != p) {
    throw InvalidArgument("model '" + name + "' returned " + std::to_string(row.size()) +
                          " entries at point " + describe_point(x) + ", expected " + std::to_string(p));
  }
  if (!row.allFinite()) {
    throw InvalidArgument("model '" + name + "' is not finite at point " + describe_point(x));
  }
}

}  // namespace

Eigen::MatrixXd design_matrix(const LinearBasis& basis, const DesignSpace& space) {
  check_input_dim(basis.input_dim, space, basis.name);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(basis.num_params));
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Eigen::VectorXd x = space.point(i);
    const Eigen::VectorXd row = basis.evaluate(x);
    check_row(row, basis.num_params, x, basis.name);
    z.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return z;
}

Eigen::MatrixXd design_matrix(const NonlinearModel& model, const DesignSpace& space,
                              const Eigen::VectorXd& beta) {
  check_input_dim(model.input_dim, space, model.name);
  if (static_cast<std::size_t>(beta.size()) != model.num_params || !beta.allFinite()) {
    throw InvalidArgument("model '" + model.name + "' needs a finite parameter vector of length " +
                          std::to_string(model.num_params));
  }
  Eigen::MatrixXd z(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(model.num_params));
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Eigen::VectorXd x = space.point(i);
    const Eigen::VectorXd row = model.jacobian(x, beta);
    check_row(row, model.num_params, x, model.name);
    z.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return z;
}

Eigen::MatrixXd design_matrix(const ModelSpec& model, const DesignSpace& space,
                              const std::optional<Eigen::VectorXd>& beta) {
  if (const auto* lin = std::get_if<LinearBasis>(&model)) return design_matrix(*lin, space);
  const auto& nl = std::get<NonlinearModel>(model);
  if (!beta) throw InvalidArgument("nonlinear model '" + nl.name + "' needs a parameter vector");
  return design_matrix(nl, space, *beta);
}

Eigen::VectorXd mean_response(const ModelSpec& model, const DesignSpace& space, const Eigen::VectorXd& beta) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(space.size()));
  if (const auto* lin = std::get_if<LinearBasis>(&model)) {
    return design_matrix(*lin, space) * beta;
  }
  const auto& nl = std::get<NonlinearModel>(model);
  for (std::size_t i = 0; i < space.size(); ++i) f(static_cast<Eigen::Index>(i)) = nl.response(space.point(i), beta);
  return f;
}

void validate_model(const ModelSpec& model, const DesignSpace& space, const std::optional<Eigen::VectorXd>& beta) {
  const std::size_t p = num_params(model);
  if (p < 1) throw InvalidArgument("model needs at least one parameter");
  if (p > space.size()) {
    throw InvalidArgument("model has " + std::to_string(p) + " parameters but the design space only " +
                          std::to_string(space.size()) + " points");
  }
  if (const auto* lin = std::get_if<LinearBasis>(&model)) {
    (void)design_matrix(*lin, space);
    return;
  }
  const auto& nl = std::get<NonlinearModel>(model);
  if (static_cast<std::size_t>(nl.transform.at_zero.size()) != p ||
      static_cast<std::size_t>(nl.transform.at_one.size()) != p) {
    throw InvalidArgument("parameter transform of '" + nl.name + "' must have " + std::to_string(p) + " entries");
  }
  if (nl.priors.size() != p) {
    throw InvalidArgument("model '" + nl.name + "' needs one prior per parameter");
  }
  const auto check = numerics::gauss_legendre_unit(64);
  for (std::size_t j = 0; j < p; ++j) {
    double mass = 0.0;
    for (std::size_t k = 0; k < check.size(); ++k) {
      const double d = nl.priors[j].density(check.nodes[k]);
      if (!(d >= 0.0)) throw InvalidArgument("prior density must be non-negative");
      mass += check.weights[k] * d;
    }
    if (std::abs(mass - 1.0) > 1e-8) {
      throw InvalidArgument("prior for parameter " + std::to_string(j) + " integrates to " +
                            std::to_string(mass) + ", not 1");
    }
  }
  const Eigen::VectorXd at = beta ? *beta : nl.transform.map(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), 0.5));
  (void)design_matrix(nl, space, at);
}

double jacobian_check(const NonlinearModel& model, const Eigen::VectorXd& beta, const DesignSpace& space) {
  const Eigen::MatrixXd analytic = design_matrix(model, space, beta);
  double worst = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Eigen::VectorXd x = space.point(i);
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::VectorXd fd(beta.size());
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      const double h = 1e-6 * (1.0 + std::abs(beta(j)));
      Eigen::VectorXd up = beta;
      Eigen::VectorXd down = beta;
      up(j) += h;
      down(j) -= h;
      fd(j) = (model.response(x, up) - model.response(x, down)) / (up(j) - down(j));
    }
    const double row_scale = std::max(analytic.row(row).cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      const double a = analytic(row, j);
      const double denom = std::max({std::abs(a), std::abs(fd(j)), 1e-6 * row_scale});
      if (denom == 0.0) continue;
      worst = std::max(worst, std::abs(a - fd(j)) / denom);
    }
  }
  return worst;
}

std::shared_ptr<const Eigen::MatrixXd> DesignMatrixCache::get(const Eigen::VectorXd& beta) const {
  std::vector<double> key(beta.data(), beta.data() + beta.size());
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto z = std::make_shared<const Eigen::MatrixXd>(design_matrix(*model_, *space_, beta));
  std::lock_guard lock(mutex_);
  return cache_.try_emplace(std::move(key), std::move(z)).first->second;
}

std::size_t DesignMatrixCache::size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

}  // namespace robust_design
