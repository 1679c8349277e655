#ifndef ROBUST_DESIGN_SIMULATE_HPP
#define ROBUST_DESIGN_SIMULATE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "robust_design/criterion.hpp"
#include "robust_design/model.hpp"

namespace robust_design {

struct TermEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Simulated MMPE and its split into squared bias, variance, cross term and
/// the contamination norm. Each replicate draws one missing pattern and two
/// independent noise sets; the product of the two prediction errors
/// estimates the squared-bias part and half their squared difference the
/// variance part.
struct DecompositionReport {
  TermEstimate mmpe;
  TermEstimate mb;
  TermEstimate mv;
  TermEstimate cross;
  double psi_norm_term = 0.0;  // ||psi||^2 / (N n)
  std::size_t replicates = 0;  // accepted replicates
  std::size_t singular = 0;    // discarded (singular pattern)
  std::size_t nonconverged = 0;

  /// mmpe - (mb + mv + cross + psi_norm_term).
  double sum_gap() const;
  /// Standard error of that gap's components combined in quadrature.
  double combined_se() const;
  nlohmann::json to_json() const;
  /// One row per term: term,estimate,std_error.
  void write_csv(std::ostream& os) const;
};

struct SimulationOptions {
  std::size_t reps = 20000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// When set, warns if ||psi|| exceeds sqrt(eta2).
  std::optional<double> eta2;
};

/// Data-generation simulation of y = f(x; beta) + psi / sqrt(n) + eps with MCAR
/// missingness and complete-case least squares (closed form for linear
/// models, Gauss-Newton from beta_true for nonlinear ones).
DecompositionReport simulate_mmpe(const ModelSpec& model, const DesignSpace& space, const ExactDesign& exact,
                                  const Eigen::VectorXd& retention, const Eigen::VectorXd& psi,
                                  const Eigen::VectorXd& beta_true, double sigma2, const SimulationOptions& options);

struct TaylorExactInstance {
  Eigen::MatrixXd z;
  ExactDesign design;
  Eigen::VectorXd retention;
  RobustnessParams params;
};

struct TaylorExactRow {
  CorrectionVariant variant;
  double taylor = 0.0;
  double exact = 0.0;
  double relative_gap = 0.0;  // |taylor - exact| / |exact|
};

/// Taylor criterion at xi = n_i / n against the enumerated E_M of the
/// maximized MMPE, per variant.
std::vector<TaylorExactRow> taylor_vs_exact_report(const TaylorExactInstance& instance,
                                                   const std::vector<CorrectionVariant>& variants);

void write_taylor_exact_csv(std::ostream& os, const std::vector<TaylorExactRow>& rows);

}  // namespace robust_design

#endif  // ROBUST_DESIGN_SIMULATE_HPP
