#include "robust_design/simulate.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"
#include "robust_design/parallel.hpp"

namespace robust_design {

double DecompositionReport::sum_gap() const {
  return mmpe.mean - (mb.mean + mv.mean + cross.mean + psi_norm_term);
}

double DecompositionReport::combined_se() const {
  return std::sqrt(mmpe.se * mmpe.se + mb.se * mb.se + mv.se * mv.se + cross.se * cross.se);
}

nlohmann::json DecompositionReport::to_json() const {
  auto term = [](const TermEstimate& t) { return nlohmann::json{{"estimate", t.mean}, {"std_error", t.se}}; };
  return nlohmann::json{{"mmpe", term(mmpe)},
                        {"mb", term(mb)},
                        {"mv", term(mv)},
                        {"cross", term(cross)},
                        {"psi_norm_term", psi_norm_term},
                        {"replicates", replicates},
                        {"singular", singular},
                        {"nonconverged", nonconverged}};
}

void DecompositionReport::write_csv(std::ostream& os) const {
  os << std::setprecision(17);
  os << "term,estimate,std_error\n";
  os << "mmpe_hat," << mmpe.mean << ',' << mmpe.se << '\n';
  os << "mb_hat," << mb.mean << ',' << mb.se << '\n';
  os << "mv_hat," << mv.mean << ',' << mv.se << '\n';
  os << "cross_hat," << cross.mean << ',' << cross.se << '\n';
  os << "psi_norm_term," << psi_norm_term << ",0\n";
  os << "replicates," << replicates << ",0\n";
  os << "singular," << singular << ",0\n";
}

namespace {

TermEstimate estimate(const std::vector<double>& xs) {
  TermEstimate t;
  if (xs.empty()) return t;
  const auto m = static_cast<double>(xs.size());
  t.mean = pairwise_sum(xs.begin(), xs.end()) / m;
  if (xs.size() > 1) {
    std::vector<double> dev(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = (xs[i] - t.mean) * (xs[i] - t.mean);
    t.se = std::sqrt(pairwise_sum(dev.begin(), dev.end()) / (m - 1.0) / m);
  }
  return t;
}

enum class FitStatus { Ok, Singular, NonConverged };

struct Fit {
  FitStatus status = FitStatus::Ok;
  Eigen::VectorXd fitted;  // f(x_i; beta_hat) on every point
};

// Per-point means ybar with weights k reproduce the complete-case least
// squares objective up to a constant.
Fit fit_linear(const Eigen::MatrixXd& z, const Eigen::VectorXd& k, const Eigen::VectorXd& ybar) {
  Fit fit;
  Eigen::MatrixXd info = z.transpose() * k.asDiagonal() * z;
  info = 0.5 * (info + info.transpose());
  try {
    const numerics::Cholesky chol(info);
    const Eigen::VectorXd rhs = z.transpose() * k.cwiseProduct(ybar);
    fit.fitted = z * chol.solve(rhs);
  } catch (const SingularInformation&) {
    fit.status = FitStatus::Singular;
  }
  return fit;
}

Fit fit_gauss_newton(const NonlinearModel& model, const DesignSpace& space, const Eigen::VectorXd& k,
                     const Eigen::VectorXd& ybar, const Eigen::VectorXd& beta_start) {
  Fit fit;
  auto objective = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& f) {
    f = mean_response(model, space, beta);
    return k.dot((ybar - f).cwiseAbs2());
  };
  Eigen::VectorXd beta = beta_start;
  Eigen::VectorXd f;
  double obj = objective(beta, f);
  bool converged = false;
  for (int it = 0; it < 50 && !converged; ++it) {
    const Eigen::MatrixXd j = design_matrix(model, space, beta);
    Eigen::MatrixXd info = j.transpose() * k.asDiagonal() * j;
    info = 0.5 * (info + info.transpose());
    Eigen::VectorXd step;
    try {
      step = numerics::Cholesky(info).solve(Eigen::VectorXd(j.transpose() * k.cwiseProduct(ybar - f)));
    } catch (const SingularInformation&) {
      fit.status = it == 0 ? FitStatus::Singular : FitStatus::NonConverged;
      return fit;
    }
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h, scale *= 0.5) {
      Eigen::VectorXd trial = beta + scale * step;
      Eigen::VectorXd ft;
      const double o = objective(trial, ft);
      if (std::isfinite(o) && o <= obj) {
        const double drop = obj - o;
        beta = std::move(trial);
        f = std::move(ft);
        converged = scale * step.norm() <= 1e-10 * (1.0 + beta.norm()) || drop <= 1e-15 * (1.0 + obj);
        obj = o;
        accepted = true;
        break;
      }
    }
    if (!accepted) converged = step.norm() <= 1e-8 * (1.0 + beta.norm());
    if (!accepted && !converged) break;
  }
  if (!converged) fit.status = FitStatus::NonConverged;
  fit.fitted = f;
  return fit;
}

}  // namespace

DecompositionReport simulate_mmpe(const ModelSpec& model, const DesignSpace& space, const ExactDesign& exact,
                                  const Eigen::VectorXd& retention, const Eigen::VectorXd& psi,
                                  const Eigen::VectorXd& beta_true, double sigma2, const SimulationOptions& options) {
  const auto big_n = static_cast<Eigen::Index>(space.size());
  if (static_cast<Eigen::Index>(exact.size()) != big_n) throw InvalidArgument("exact design size differs from the space");
  if (retention.size() != big_n || psi.size() != big_n) {
    throw InvalidArgument("retention and psi must have one entry per design point");
  }
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be finite and >= 0");
  if (options.reps < 2) throw InvalidArgument("simulation needs at least 2 replicates");
  if (beta_true.size() != static_cast<Eigen::Index>(num_params(model))) {
    throw InvalidArgument("beta_true length differs from the number of model parameters");
  }

  const Eigen::MatrixXd z = design_matrix(model, space, beta_true);
  const Eigen::VectorXd f_true = mean_response(model, space, beta_true);
  const double n = exact.n();
  const double root_n = std::sqrt(n);
  if (options.eta2 && psi.squaredNorm() > *options.eta2 * (1.0 + 1e-9)) {
    warn("psi_outside_neighbourhood", "||psi||^2 exceeds eta2; psi lies outside the contamination neighbourhood");
  }
  const double orth = (z.transpose() * psi).norm();
  if (orth > 1e-8 * std::max(1.0, z.norm() * psi.norm())) {
    warn("psi_not_orthogonal", "Z(beta)^T psi is not ~0; psi is not in the contamination neighbourhood");
  }

  const auto* nonlinear = std::get_if<NonlinearModel>(&model);
  const Eigen::VectorXd mu = f_true + psi / root_n;
  const double sigma = std::sqrt(sigma2);
  const std::size_t reps = options.reps;

  std::vector<double> mmpe(reps), mb(reps), mv(reps), cross(reps);
  std::vector<FitStatus> status(reps, FitStatus::Ok);
  parallel_for(reps, options.threads, [&](std::size_t r) {
    auto rng = substream(options.seed, 0x53494du, r);
    Eigen::VectorXd k(big_n);
    for (Eigen::Index i = 0; i < big_n; ++i) {
      const int ni = exact.counts()[static_cast<std::size_t>(i)];
      const double p = retention(i);
      if (ni == 0 || p <= 0.0) {
        k(i) = 0;
      } else if (p >= 1.0) {
        k(i) = ni;
      } else {
        k(i) = std::binomial_distribution<int>(ni, p)(rng);
      }
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd delta[2];
    for (int a = 0; a < 2; ++a) {
      // sum of k_i iid N(0, sigma2) noise terms at point i, divided by k_i
      Eigen::VectorXd ybar = mu;
      for (Eigen::Index i = 0; i < big_n; ++i) {
        const double e = normal(rng);
        if (k(i) > 0) ybar(i) += sigma * e / std::sqrt(k(i));
      }
      const Fit fit = nonlinear ? fit_gauss_newton(*nonlinear, space, k, ybar, beta_true) : fit_linear(z, k, ybar);
      if (fit.status != FitStatus::Ok) {
        if (status[r] == FitStatus::Ok) status[r] = fit.status;
        return;
      }
      delta[a] = fit.fitted - f_true;
    }
    const double nn = static_cast<double>(big_n);
    const Eigen::VectorXd e1 = delta[0] - psi / root_n;
    const Eigen::VectorXd e2 = delta[1] - psi / root_n;
    mmpe[r] = 0.5 * (e1.squaredNorm() + e2.squaredNorm()) / nn;
    mb[r] = delta[0].dot(delta[1]) / nn;
    mv[r] = 0.5 * (delta[0] - delta[1]).squaredNorm() / nn;
    cross[r] = -(2.0 / nn) * 0.5 * (delta[0] + delta[1]).dot(psi) / root_n;
  });

  DecompositionReport rep;
  std::vector<double> a, b, c, d;
  for (std::size_t r = 0; r < reps; ++r) {
    if (status[r] == FitStatus::Singular) {
      ++rep.singular;
      continue;
    }
    if (status[r] == FitStatus::NonConverged) {
      ++rep.nonconverged;
      continue;
    }
    a.push_back(mmpe[r]);
    b.push_back(mb[r]);
    c.push_back(mv[r]);
    d.push_back(cross[r]);
  }
  if (2 * rep.singular > reps) {
    throw InfeasibleProblem("more than half of the simulated replicates have a singular complete-case fit (" +
                            std::to_string(rep.singular) + " of " + std::to_string(reps) + ")");
  }
  if (100 * rep.nonconverged > reps) {
    throw Error("Gauss-Newton failed to converge in " + std::to_string(rep.nonconverged) + " of " +
                std::to_string(reps) + " replicates");
  }
  rep.replicates = a.size();
  rep.mmpe = estimate(a);
  rep.mb = estimate(b);
  rep.mv = estimate(c);
  rep.cross = estimate(d);
  rep.psi_norm_term = psi.squaredNorm() / (static_cast<double>(big_n) * n);
  return rep;
}

std::vector<TaylorExactRow> taylor_vs_exact_report(const TaylorExactInstance& instance,
                                                   const std::vector<CorrectionVariant>& variants) {
  const ExpectedMmpe exact = expected_mmpe_max(instance.z, instance.design, instance.retention, instance.params,
                                               ExpectationMode::enumerate());
  const Design design = instance.design.as_design();
  std::vector<TaylorExactRow> rows;
  for (CorrectionVariant v : variants) {
    TaylorExactRow row;
    row.variant = v;
    row.taylor = taylor_loss(instance.z, design, instance.retention, instance.params, v).total;
    row.exact = exact.value;
    row.relative_gap = std::abs(row.taylor - row.exact) / std::abs(row.exact);
    rows.push_back(row);
  }
  return rows;
}

void write_taylor_exact_csv(std::ostream& os, const std::vector<TaylorExactRow>& rows) {
  os << std::setprecision(17);
  os << "variant,taylor,exact,relative_gap\n";
  for (const auto& r : rows) {
    os << to_string(r.variant) << ',' << r.taylor << ',' << r.exact << ',' << r.relative_gap << '\n';
  }
}

}  // namespace robust_design
