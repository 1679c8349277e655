#include "robust_design/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "robust_design/diagnostics.hpp"
#include "robust_design/errors.hpp"
#include "robust_design/parallel.hpp"

namespace robust_design {

std::string to_string(CorrectionVariant v) {
  return v == CorrectionVariant::PaperLiteral ? "paper-literal" : "derivation-consistent";
}

CorrectionVariant parse_variant(const std::string& s) {
  if (s == "paper" || s == "paper-literal") return CorrectionVariant::PaperLiteral;
  if (s == "derivation" || s == "derivation-consistent") return CorrectionVariant::DerivationConsistent;
  throw InvalidArgument("unknown correction variant '" + s + "' (expected paper or derivation)");
}

namespace {

void check_weights(const Eigen::MatrixXd& z, const Eigen::VectorXd& d) {
  if (d.size() != z.rows()) throw InvalidArgument("weight vector length differs from the number of design points");
  if (!d.allFinite() || (d.size() > 0 && d.minCoeff() < 0.0)) {
    throw InvalidArgument("diagonal weights must be finite and non-negative");
  }
}

void check_retention(const Eigen::VectorXd& p, Eigen::Index n) {
  if (p.size() != n) throw InvalidArgument("retention vector length differs from the number of design points");
  if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) {
    throw InvalidArgument("retention probabilities must lie in [0, 1]");
  }
}

std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  if (p >= 1.0) {
    pmf.back() = 1.0;
    return pmf;
  }
  if (p <= 0.0) {
    pmf.front() = 1.0;
    return pmf;
  }
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const double lfact_n = std::lgamma(n + 1.0);
  for (int k = 0; k <= n; ++k) {
    const double lchoose = lfact_n - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    pmf[static_cast<std::size_t>(k)] = std::exp(lchoose + k * lp + (n - k) * lq);
  }
  return pmf;
}

// Visits every count vector k (0 <= k_i <= n_i) with its product-binomial
// probability; zero-probability vectors are skipped.
template <class Fn>
void for_each_pattern(const std::vector<int>& counts, const Eigen::VectorXd& retention, Fn&& fn) {
  double total = 1.0;
  for (int c : counts) total *= static_cast<double>(c) + 1.0;
  if (total > kMaxEnumeratedPatterns) {
    std::ostringstream os;
    os << "enumeration over " << total << " missing patterns exceeds the limit of " << kMaxEnumeratedPatterns
       << "; use Monte-Carlo mode";
    throw InvalidArgument(os.str());
  }
  std::vector<std::vector<double>> pmf;
  pmf.reserve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    pmf.push_back(binomial_pmf(counts[i], retention(static_cast<Eigen::Index>(i))));
  }
  std::vector<int> k(counts.size(), 0);
  Eigen::VectorXd kv = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(counts.size()));
  for (;;) {
    double w = 1.0;
    for (std::size_t i = 0; i < counts.size() && w > 0.0; ++i) w *= pmf[i][static_cast<std::size_t>(k[i])];
    if (w > 0.0) {
      for (std::size_t i = 0; i < counts.size(); ++i) kv(static_cast<Eigen::Index>(i)) = k[i];
      fn(kv, w);
    }
    std::size_t pos = 0;
    for (; pos < counts.size(); ++pos) {
      if (++k[pos] <= counts[pos]) break;
      k[pos] = 0;
    }
    if (pos == counts.size()) return;
  }
}

Eigen::VectorXd draw_pattern(const std::vector<int>& counts, const Eigen::VectorXd& retention, std::uint64_t seed,
                             std::uint64_t replicate) {
  auto rng = substream(seed, 0x4d4953u, replicate);
  Eigen::VectorXd k(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double p = retention(static_cast<Eigen::Index>(i));
    if (counts[i] == 0 || p <= 0.0) {
      k(static_cast<Eigen::Index>(i)) = 0;
    } else if (p >= 1.0) {
      k(static_cast<Eigen::Index>(i)) = counts[i];
    } else {
      std::binomial_distribution<int> dist(counts[i], p);
      k(static_cast<Eigen::Index>(i)) = dist(rng);
    }
  }
  return k;
}

bool obviously_singular(const Eigen::VectorXd& k, Eigen::Index p) {
  return (k.array() > 0.0).count() < p;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  const auto m = static_cast<double>(xs.size());
  out.mean = pairwise_sum(xs.begin(), xs.end()) / m;
  if (xs.size() > 1) {
    std::vector<double> dev(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
    out.se = std::sqrt(pairwise_sum(dev.begin(), dev.end()) / (m - 1.0) / m);
  }
  return out;
}

}  // namespace

HatMatrices hat(const Eigen::MatrixXd& z, const Eigen::VectorXd& d) {
  check_weights(z, d);
  HatMatrices h;
  h.d = d;
  h.info = z.transpose() * d.asDiagonal() * z;
  h.info = 0.5 * (h.info + h.info.transpose());
  const numerics::Cholesky chol(h.info);
  h.r = z * chol.solve(Eigen::MatrixXd(z.transpose()));
  h.r = 0.5 * (h.r + h.r.transpose());
  return h;
}

ProjectionGeometry::ProjectionGeometry(Eigen::MatrixXd z)
    : z_(std::move(z)),
      gram_(0.5 * (z_.transpose() * z_ + (z_.transpose() * z_).transpose())),
      gram_chol_(gram_, 1e-14) {}

SpectralTerms spectral_terms(const ProjectionGeometry& geom, const Eigen::VectorXd& d) {
  const Eigen::MatrixXd& z = geom.z();
  check_weights(z, d);
  const Eigen::Index p = z.cols();
  const Eigen::Index n_points = z.rows();

  const Eigen::MatrixXd dz = d.asDiagonal() * z;
  Eigen::MatrixXd info = z.transpose() * dz;
  info = 0.5 * (info + info.transpose());
  const numerics::Cholesky chol(info);
  const Eigen::MatrixXd info_inv = chol.inverse();

  SpectralTerms t;
  // V = D Z G^{-1} L with Z^T Z = L L^T; D R^2 D = V V^T.
  const Eigen::MatrixXd v = dz * (info_inv * geom.gram_factor().lower());
  Eigen::MatrixXd s = v.transpose() * v;
  s = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  t.chmax = std::max(es.eigenvalues()(p - 1), 0.0);
  const double lambda2 = p > 1 ? std::max(es.eigenvalues()(p - 2), 0.0) : 0.0;
  if (n_points == 1) {
    t.gap_ratio = 1.0;
  } else {
    t.gap_ratio = (t.chmax - lambda2) / std::max(t.chmax, std::numeric_limits<double>::epsilon());
  }
  if (t.chmax > 0.0) {
    t.v1 = v * es.eigenvectors().col(p - 1);
    t.v1.normalize();
  } else {
    t.v1 = Eigen::VectorXd::Zero(n_points);
    t.v1(0) = 1.0;
  }
  numerics::canonical_sign(t.v1);
  if (t.gap_ratio < 1e-8) {
    warn("degenerate_top_eigenvalue",
         "top eigenvalue of D R^2 D is not simple (gap ratio " + std::to_string(t.gap_ratio) +
             "); using the canonical eigenvector");
  }

  const Eigen::MatrixXd m = info_inv * geom.gram() * info_inv;  // G^{-1} Z^T Z G^{-1}
  t.trace_r = (info_inv.cwiseProduct(geom.gram())).sum();
  t.r2_diag = ((z * m).cwiseProduct(z)).rowwise().sum();
  t.r_v1 = z * (info_inv * (z.transpose() * t.v1));
  t.rd_v1 = z * (info_inv * (dz.transpose() * t.v1));
  return t;
}

PatternTerms mmpe_max_given_pattern(const ProjectionGeometry& geom, const Eigen::VectorXd& observed,
                                    const RobustnessParams& params, int n) {
  params.validate();
  if (n < 1) throw InvalidArgument("sample size n must be >= 1");
  const SpectralTerms s = spectral_terms(geom, observed);
  const double big_n = static_cast<double>(geom.rows());
  PatternTerms out;
  out.chmax = s.chmax;
  out.trace_r = s.trace_r;
  out.gap_ratio = s.gap_ratio;
  out.value = params.eta2 / (big_n * n) * (s.chmax + 1.0) + params.sigma2 / big_n * s.trace_r;
  return out;
}

PatternTerms mmpe_max_given_pattern(const Eigen::MatrixXd& z, const MissingPattern& pattern,
                                    const RobustnessParams& params, int n) {
  return mmpe_max_given_pattern(ProjectionGeometry(z), pattern.as_vector(), params, n);
}

ExpectedMmpe expected_mmpe_max(const Eigen::MatrixXd& z, const ExactDesign& design, const Eigen::VectorXd& retention,
                               const RobustnessParams& params, const ExpectationMode& mode) {
  params.validate();
  if (static_cast<Eigen::Index>(design.size()) != z.rows()) throw InvalidArgument("design size differs from Z rows");
  check_retention(retention, z.rows());
  const ProjectionGeometry geom(z);
  const Eigen::Index p = z.cols();
  const int n = design.n();
  ExpectedMmpe out;

  if (mode.kind == ExpectationMode::Kind::Enumerate) {
    std::vector<double> ws, chs, trs;
    double singular_mass = 0.0;
    for_each_pattern(design.counts(), retention, [&](const Eigen::VectorXd& k, double w) {
      if (obviously_singular(k, p)) {
        singular_mass += w;
        ++out.singular;
        return;
      }
      try {
        const PatternTerms t = mmpe_max_given_pattern(geom, k, params, n);
        ws.push_back(w);
        chs.push_back(w * t.chmax);
        trs.push_back(w * t.trace_r);
      } catch (const SingularInformation&) {
        singular_mass += w;
        ++out.singular;
      }
    });
    if (ws.empty()) throw InfeasibleProblem("every missing pattern leaves a singular information matrix");
    const double mass = pairwise_sum(ws.begin(), ws.end());
    out.evaluated = ws.size();
    out.singular_mass = singular_mass;
    out.expected_chmax = pairwise_sum(chs.begin(), chs.end()) / mass;
    out.expected_trace = pairwise_sum(trs.begin(), trs.end()) / mass;
  } else {
    if (mode.reps < 2) throw InvalidArgument("Monte-Carlo mode needs at least 2 replicates");
    std::vector<double> chs(mode.reps), trs(mode.reps);
    std::vector<char> ok(mode.reps, 0);
    parallel_for(mode.reps, mode.threads, [&](std::size_t r) {
      const Eigen::VectorXd k = draw_pattern(design.counts(), retention, mode.seed, r);
      if (obviously_singular(k, p)) return;
      try {
        const PatternTerms t = mmpe_max_given_pattern(geom, k, params, n);
        chs[r] = t.chmax;
        trs[r] = t.trace_r;
        ok[r] = 1;
      } catch (const SingularInformation&) {
      }
    });
    std::vector<double> ch_ok, tr_ok, val_ok;
    const double big_n = static_cast<double>(z.rows());
    for (std::size_t r = 0; r < mode.reps; ++r) {
      if (!ok[r]) continue;
      ch_ok.push_back(chs[r]);
      tr_ok.push_back(trs[r]);
      val_ok.push_back(params.eta2 / (big_n * n) * (chs[r] + 1.0) + params.sigma2 / big_n * trs[r]);
    }
    out.evaluated = ch_ok.size();
    out.singular = mode.reps - ch_ok.size();
    if (2 * out.singular > mode.reps) {
      throw InfeasibleProblem("more than half of the Monte-Carlo missing patterns are singular (" +
                              std::to_string(out.singular) + " of " + std::to_string(mode.reps) +
                              "); the design is incompatible with the missingness model");
    }
    const MeanSe ch = mean_and_se(ch_ok);
    const MeanSe tr = mean_and_se(tr_ok);
    out.expected_chmax = ch.mean;
    out.expected_chmax_se = ch.se;
    out.expected_trace = tr.mean;
    out.expected_trace_se = tr.se;
    out.std_error = mean_and_se(val_ok).se;
  }
  const double big_n = static_cast<double>(z.rows());
  out.value = params.eta2 / (big_n * n) * (out.expected_chmax + 1.0) + params.sigma2 / big_n * out.expected_trace;
  return out;
}

double LossReport::term_sum() const {
  return bias_eig_term + variance_term + constant_term + bias_correction + variance_correction;
}

nlohmann::json LossReport::to_json() const {
  return nlohmann::json{{"total", total},
                        {"bias_eig_term", bias_eig_term},
                        {"variance_term", variance_term},
                        {"constant_term", constant_term},
                        {"bias_correction", bias_correction},
                        {"variance_correction", variance_correction},
                        {"variant", to_string(variant)},
                        {"eig_gap_ratio", eig_gap_ratio}};
}

LossReport taylor_loss(const ProjectionGeometry& geom, const Design& design, const Eigen::VectorXd& retention,
                       const RobustnessParams& params, CorrectionVariant variant) {
  params.validate();
  if (static_cast<Eigen::Index>(design.size()) != geom.rows()) {
    throw InvalidArgument("design size differs from the number of design points");
  }
  check_retention(retention, geom.rows());
  const Eigen::VectorXd d = design.scaled();
  const SpectralTerms s = spectral_terms(geom, d);
  const double big_n = static_cast<double>(geom.rows());
  const double n = design.n();
  const double bias_scale = params.eta2 / (big_n * n);
  const double var_scale = params.sigma2 / big_n;

  // diagonal of the correction weight matrix C
  Eigen::VectorXd c;
  if (variant == CorrectionVariant::PaperLiteral) {
    c = Eigen::VectorXd::Ones(d.size()) - d.cwiseProduct(retention);
  } else {
    c = d.cwiseProduct(Eigen::VectorXd::Ones(d.size()) - retention);
  }
  // diag(A) for A = (I - R D) v1 v1^T R
  Eigen::VectorXd a_diag = (s.v1 - s.rd_v1).cwiseProduct(s.r_v1);
  if (variant == CorrectionVariant::DerivationConsistent) a_diag *= s.chmax;

  LossReport rep;
  rep.variant = variant;
  rep.eig_gap_ratio = s.gap_ratio;
  rep.bias_eig_term = bias_scale * s.chmax;
  rep.variance_term = var_scale * s.trace_r;
  rep.constant_term = bias_scale;
  rep.bias_correction = -2.0 * bias_scale * c.dot(a_diag);
  rep.variance_correction = var_scale * c.dot(s.r2_diag);
  rep.total = rep.term_sum();
  return rep;
}

LossReport taylor_loss(const Eigen::MatrixXd& z, const Design& design, const Eigen::VectorXd& retention,
                       const RobustnessParams& params, CorrectionVariant variant) {
  return taylor_loss(ProjectionGeometry(z), design, retention, params, variant);
}

LossReport nonlinear_taylor_loss(const NonlinearModel& model, const Eigen::VectorXd& beta, const DesignSpace& space,
                                 const Design& design, const Eigen::VectorXd& retention,
                                 const RobustnessParams& params, CorrectionVariant variant) {
  return taylor_loss(design_matrix(model, space, beta), design, retention, params, variant);
}

numerics::TensorRule prior_rule(const NonlinearModel& model, std::size_t k) {
  std::vector<numerics::QuadratureRule> rules;
  rules.reserve(model.priors.size());
  for (const auto& prior : model.priors) rules.push_back(numerics::quadrature_rule(prior, k));
  return numerics::tensor_product(rules);
}

BayesianLoss::BayesianLoss(const NonlinearModel& model, const DesignSpace& space, Eigen::VectorXd retention,
                           RobustnessParams params, numerics::TensorRule rule, CorrectionVariant variant)
    : retention_(std::move(retention)), params_(params), rule_(std::move(rule)), variant_(variant) {
  params_.validate();
  if (rule_.size() == 0) throw InvalidArgument("quadrature rule has no nodes");
  check_retention(retention_, static_cast<Eigen::Index>(space.size()));
  DesignMatrixCache cache(model, space);
  nodes_.reserve(rule_.size());
  betas_.reserve(rule_.size());
  for (std::size_t k = 0; k < rule_.size(); ++k) {
    Eigen::VectorXd beta = model.transform.map(rule_.nodes[k]);
    try {
      nodes_.emplace_back(*cache.get(beta));
    } catch (const SingularInformation& e) {
      throw SingularInformation("Z(beta) is rank deficient at quadrature node " + std::to_string(k) + ": " +
                                    e.what(),
                                e.pivot());
    }
    betas_.push_back(std::move(beta));
    weight_sum_ += rule_.weights[k];
  }
  if (!(weight_sum_ > 0.0)) throw InvalidArgument("quadrature weights sum to zero");
}

LossReport BayesianLoss::operator()(const Design& design) const {
  LossReport avg;
  avg.variant = variant_;
  avg.eig_gap_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    LossReport r;
    try {
      r = taylor_loss(nodes_[k], design, retention_, params_, variant_);
    } catch (const SingularInformation& e) {
      std::ostringstream os;
      os << "singular information at quadrature node " << k << " (beta = " << betas_[k].transpose()
         << "): " << e.what();
      throw SingularInformation(os.str(), e.pivot());
    }
    const double w = rule_.weights[k] / weight_sum_;
    avg.bias_eig_term += w * r.bias_eig_term;
    avg.variance_term += w * r.variance_term;
    avg.constant_term += w * r.constant_term;
    avg.bias_correction += w * r.bias_correction;
    avg.variance_correction += w * r.variance_correction;
    avg.eig_gap_ratio = std::min(avg.eig_gap_ratio, r.eig_gap_ratio);
  }
  avg.total = avg.term_sum();
  return avg;
}

LossReport bayesian_loss(const NonlinearModel& model, const DesignSpace& space, const Design& design,
                         const Eigen::VectorXd& retention, const RobustnessParams& params,
                         const numerics::TensorRule& rule, CorrectionVariant variant) {
  return BayesianLoss(model, space, retention, params, rule, variant)(design);
}

Eigen::VectorXd chmax_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& d) {
  const SpectralTerms s = spectral_terms(ProjectionGeometry(z), d);
  // d lambda / d d_i = 2 (R^2 D v1)_i ((I - R D) v1)_i and R^2 D v1 = lambda R v1.
  return 2.0 * s.chmax * (s.v1 - s.rd_v1).cwiseProduct(s.r_v1);
}

Eigen::VectorXd chmax_gradient_printed(const Eigen::MatrixXd& z, const Eigen::VectorXd& d) {
  const SpectralTerms s = spectral_terms(ProjectionGeometry(z), d);
  return 2.0 * (s.v1 - s.rd_v1).cwiseProduct(s.r_v1);
}

namespace {

struct MomentMatrices {
  Eigen::MatrixXd drrd;  // E_M[D R^2 D]
  double chmax = 0.0;    // E_M[Ch_max(D R^2 D)]
  double trace = 0.0;    // E_M[tr R]
};

void accumulate_pattern(const Eigen::MatrixXd& z, const Eigen::VectorXd& k, double w, MomentMatrices& acc) {
  const HatMatrices h = hat(z, k);
  const Eigen::MatrixXd dr = k.asDiagonal() * h.r;
  Eigen::MatrixXd m = dr * dr.transpose();
  m = 0.5 * (m + m.transpose());
  acc.drrd += w * m;
  acc.chmax += w * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  acc.trace += w * h.r.trace();
}

MomentMatrices pattern_moments(const Eigen::MatrixXd& z, const ExactDesign& design, const Eigen::VectorXd& retention,
                               const WorstCaseMode& mode) {
  const Eigen::Index n_points = z.rows();
  const Eigen::Index p = z.cols();
  MomentMatrices acc{Eigen::MatrixXd::Zero(n_points, n_points), 0.0, 0.0};
  double mass = 0.0;
  if (mode.kind == WorstCaseMode::Kind::Enumerate) {
    for_each_pattern(design.counts(), retention, [&](const Eigen::VectorXd& k, double w) {
      if (obviously_singular(k, p)) return;
      try {
        MomentMatrices one{Eigen::MatrixXd::Zero(n_points, n_points), 0.0, 0.0};
        accumulate_pattern(z, k, w, one);
        acc.drrd += one.drrd;
        acc.chmax += one.chmax;
        acc.trace += one.trace;
        mass += w;
      } catch (const SingularInformation&) {
      }
    });
    if (!(mass > 0.0)) throw InfeasibleProblem("every missing pattern leaves a singular information matrix");
  } else {
    if (mode.reps < 2) throw InvalidArgument("Monte-Carlo mode needs at least 2 replicates");
    std::vector<MomentMatrices> per(mode.reps);
    std::vector<char> ok(mode.reps, 0);
    parallel_for(mode.reps, mode.threads, [&](std::size_t r) {
      const Eigen::VectorXd k = draw_pattern(design.counts(), retention, mode.seed, r);
      if (obviously_singular(k, p)) return;
      try {
        MomentMatrices one{Eigen::MatrixXd::Zero(n_points, n_points), 0.0, 0.0};
        accumulate_pattern(z, k, 1.0, one);
        per[r] = std::move(one);
        ok[r] = 1;
      } catch (const SingularInformation&) {
      }
    });
    std::size_t accepted = 0;
    for (std::size_t r = 0; r < mode.reps; ++r) {
      if (!ok[r]) continue;
      acc.drrd += per[r].drrd;
      acc.chmax += per[r].chmax;
      acc.trace += per[r].trace;
      ++accepted;
    }
    if (2 * (mode.reps - accepted) > mode.reps) {
      throw InfeasibleProblem("more than half of the Monte-Carlo missing patterns are singular");
    }
    mass = static_cast<double>(accepted);
  }
  acc.drrd /= mass;
  acc.chmax /= mass;
  acc.trace /= mass;
  return acc;
}

WorstCase maximize_over_complement(const Eigen::MatrixXd& z, const MomentMatrices& moments, const RobustnessParams& params,
                                   int n) {
  const Eigen::Index n_points = z.rows();
  const double big_n = static_cast<double>(n_points);
  const double bias_scale = params.eta2 / (big_n * n);
  WorstCase wc;
  wc.variance_part = params.sigma2 / big_n * moments.trace;
  wc.bound = bias_scale * (moments.chmax + 1.0) + wc.variance_part;
  const Eigen::MatrixXd k = numerics::orthonormal_complement(z);
  if (k.cols() == 0) {
    wc.saturated = true;
    wc.psi = Eigen::VectorXd::Zero(n_points);
    wc.value = wc.variance_part;
    warn("saturated_design_space",
         "Z has full row rank: the contamination neighbourhood is {0}, so the worst case is Psi* = 0");
    return wc;
  }
  Eigen::MatrixXd g = k.transpose() * (moments.drrd + Eigen::MatrixXd::Identity(n_points, n_points)) * k;
  g = 0.5 * (g + g.transpose());
  const numerics::SymTopEig top = numerics::sym_top_eig(g);
  const double eta = std::sqrt(params.eta2);
  wc.psi = eta * (k * top.v1);
  numerics::canonical_sign(wc.psi);
  wc.value = bias_scale * top.lambda_max + wc.variance_part;
  return wc;
}

}  // namespace

WorstCase worst_case_contamination(const Eigen::MatrixXd& z, const Design& design, const Eigen::VectorXd& retention,
                                   const RobustnessParams& params) {
  params.validate();
  if (static_cast<Eigen::Index>(design.size()) != z.rows()) throw InvalidArgument("design size differs from Z rows");
  check_retention(retention, z.rows());
  const Eigen::VectorXd d = design.scaled();
  const HatMatrices h = hat(z, d);
  MomentMatrices m;
  const Eigen::MatrixXd dr = d.asDiagonal() * h.r;
  m.drrd = dr * dr.transpose();
  m.drrd = 0.5 * (m.drrd + m.drrd.transpose());
  m.chmax = spectral_terms(ProjectionGeometry(z), d).chmax;
  m.trace = h.r.trace();
  return maximize_over_complement(z, m, params, design.n());
}

WorstCase worst_case_contamination(const Eigen::MatrixXd& z, const ExactDesign& design,
                                   const Eigen::VectorXd& retention, const RobustnessParams& params,
                                   const WorstCaseMode& mode) {
  if (mode.kind == WorstCaseMode::Kind::PlugIn) {
    return worst_case_contamination(z, design.as_design(), retention, params);
  }
  params.validate();
  if (static_cast<Eigen::Index>(design.size()) != z.rows()) throw InvalidArgument("design size differs from Z rows");
  check_retention(retention, z.rows());
  return maximize_over_complement(z, pattern_moments(z, design, retention, mode), params, design.n());
}

double mmpe_for_contamination(const Eigen::MatrixXd& z, const ExactDesign& design, const Eigen::VectorXd& retention,
                              const RobustnessParams& params, const Eigen::VectorXd& psi) {
  params.validate();
  check_retention(retention, z.rows());
  if (psi.size() != z.rows()) throw InvalidArgument("psi length differs from the number of design points");
  const MomentMatrices m = pattern_moments(z, design, retention, WorstCaseMode::enumerate());
  const double big_n = static_cast<double>(z.rows());
  const double quad = psi.dot(m.drrd * psi) + psi.squaredNorm();
  return quad / (big_n * design.n()) + params.sigma2 / big_n * m.trace;
}

}  // namespace robust_design
