#include "robust_design/apportion.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "robust_design/errors.hpp"

namespace robust_design {

ExactDesign efficient_apportionment(const Design& design, int n) {
  if (n < 1) throw InvalidArgument("apportionment needs n >= 1");
  const Eigen::VectorXd& xi = design.weights();
  const auto size = static_cast<std::size_t>(xi.size());
  std::size_t support = 0;
  for (std::size_t i = 0; i < size; ++i) support += xi(static_cast<Eigen::Index>(i)) > 0.0 ? 1 : 0;
  if (support < 1) throw InvalidArgument("design has empty support");
  if (support > static_cast<std::size_t>(n)) {
    throw InvalidArgument("support size " + std::to_string(support) + " exceeds n = " + std::to_string(n) +
                          "; cannot give every support point one run");
  }

  const double multiplier = static_cast<double>(n) - 0.5 * static_cast<double>(support);
  std::vector<int> counts(size, 0);
  long total = 0;
  for (std::size_t i = 0; i < size; ++i) {
    const double w = xi(static_cast<Eigen::Index>(i));
    if (w <= 0.0) continue;
    const double q = multiplier * w;
    // guard against q = 3.0000000000000004 style round-off
    counts[i] = static_cast<int>(std::ceil(q - 1e-9 * std::max(1.0, q)));
    total += counts[i];
  }

  while (total < n) {
    std::size_t best = size;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size; ++i) {
      const double w = xi(static_cast<Eigen::Index>(i));
      if (w <= 0.0) continue;
      const double ratio = counts[i] / w;
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best = i;
      }
    }
    ++counts[best];
    ++total;
  }
  while (total > n) {
    std::size_t best = size;
    double best_ratio = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size; ++i) {
      const double w = xi(static_cast<Eigen::Index>(i));
      if (w <= 0.0 || counts[i] <= 1) continue;
      const double ratio = (counts[i] - 1) / w;
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = i;
      }
    }
    if (best == size) throw Error("apportionment could not reduce counts without emptying a support point");
    --counts[best];
    --total;
  }
  return ExactDesign(std::move(counts));
}

}  // namespace robust_design
