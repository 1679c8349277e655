#ifndef ROBUST_DESIGN_APPORTION_HPP
#define ROBUST_DESIGN_APPORTION_HPP

#include "robust_design/model.hpp"

namespace robust_design {

/// Multiplier rounding with quotient adjustments. Starts from
/// ceil((n - l/2) xi_i) on the support (l = support size), then increments
/// argmin n_i/xi_i or decrements argmax (n_i - 1)/xi_i until the counts sum
/// to n. Ties go to the smallest index. Throws InvalidArgument when l > n.
ExactDesign efficient_apportionment(const Design& design, int n);

}  // namespace robust_design

#endif  // ROBUST_DESIGN_APPORTION_HPP
