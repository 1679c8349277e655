#ifndef ROBUST_DESIGN_OPTIMIZER_HPP
#define ROBUST_DESIGN_OPTIMIZER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "robust_design/model.hpp"

namespace robust_design {

struct PsoConfig {
  std::size_t swarm_size = 64;
  std::size_t iterations = 500;
  double inertia = 0.729;
  double cognitive = 1.49445;
  double social = 1.49445;
  std::uint64_t seed = 0;
  std::size_t restarts = 4;
  /// Stop a restart when the best value improved by less than this relative
  /// amount over the last `patience` iterations.
  double tolerance = 1e-9;
  std::size_t patience = 50;
  unsigned threads = 1;
  /// Support size of the evenly spaced sentinel particle (usually p); 0 skips it.
  std::size_t sentinel_support = 0;

  void validate() const;
};

struct SolveResult {
  Design best_design;
  double best_value = 0.0;
  /// Best value seen so far after each iteration, restarts concatenated.
  std::vector<double> history;
  std::size_t evaluations = 0;
  std::uint64_t seed = 0;
};

using DesignCriterion = std::function<double(const Design&)>;

/// Particle-swarm search over the weight simplex. Particles live in [0,1]^N
/// and map to xi = u / sum(u). A criterion throwing SingularInformation (or
/// returning a non-finite value) scores +inf. Results depend only on
/// config.seed, never on config.threads.
SolveResult minimize_over_simplex(const DesignCriterion& criterion, const DesignSpace& space, int n,
                                  const PsoConfig& config);

/// xi = u / sum(u), or uniform when u is all zero.
Design simplex_map(const Eigen::VectorXd& u, int n);

/// Zeroes weights below `threshold` and renormalizes.
Design truncate_small_weights(const Design& design, double threshold = 1e-6);

}  // namespace robust_design

#endif  // ROBUST_DESIGN_OPTIMIZER_HPP
