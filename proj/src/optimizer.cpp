#include "robust_design/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "robust_design/errors.hpp"
#include "robust_design/parallel.hpp"

namespace robust_design {

void PsoConfig::validate() const {
  if (swarm_size < 1 || iterations < 1 || restarts < 1 || patience < 1) {
    throw InvalidArgument("PSO swarm size, iterations, restarts and patience must be positive");
  }
  if (!(inertia > 0.0 && inertia < 1.0)) throw InvalidArgument("PSO inertia must lie in (0, 1)");
  if (!(cognitive >= 0.0) || !(social >= 0.0)) throw InvalidArgument("PSO acceleration constants must be >= 0");
  if (!(tolerance >= 0.0)) throw InvalidArgument("PSO tolerance must be >= 0");
}

Design simplex_map(const Eigen::VectorXd& u, int n) {
  const double total = u.sum();
  if (!(total > 0.0)) return Design::uniform(static_cast<std::size_t>(u.size()), n);
  Eigen::VectorXd xi = u / total;
  // absorb the last ulp of round-off so the sum is exact to 1e-12
  xi /= xi.sum();
  return Design(std::move(xi), n);
}

Design truncate_small_weights(const Design& design, double threshold) {
  Eigen::VectorXd xi = design.weights();
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    if (xi(i) < threshold) xi(i) = 0.0;
  }
  if (!(xi.sum() > 0.0)) return design;
  return Design(xi / xi.sum(), design.n());
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const DesignCriterion& criterion, const Design& design) {
  try {
    const double v = criterion(design);
    return std::isfinite(v) ? v : kInf;
  } catch (const SingularInformation&) {
    return kInf;
  }
}

struct Particle {
  Eigen::VectorXd position;
  Eigen::VectorXd velocity;
  Eigen::VectorXd best_position;
  double best_value = kInf;
  double value = kInf;
  std::mt19937_64 rng;
};

Eigen::VectorXd sentinel_position(std::size_t size, std::size_t support) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
  if (support <= 1) {
    u(0) = 1.0;
    return u;
  }
  for (std::size_t k = 0; k < support; ++k) {
    const auto idx = static_cast<Eigen::Index>(
        std::llround(static_cast<double>(k) * static_cast<double>(size - 1) / static_cast<double>(support - 1)));
    u(idx) = 1.0;
  }
  return u;
}

struct RestartOutcome {
  Eigen::VectorXd best_position;
  double best_value = kInf;
  std::vector<double> history;
  std::size_t evaluations = 0;
};

RestartOutcome run_restart(const DesignCriterion& criterion, std::size_t size, int n, const PsoConfig& cfg,
                           std::size_t restart) {
  const std::uint64_t stream = 0x50534f00u + restart;
  std::vector<Particle> swarm(cfg.swarm_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t k = 0; k < swarm.size(); ++k) {
    Particle& pt = swarm[k];
    pt.rng = substream(cfg.seed, stream, k);
    pt.position.resize(static_cast<Eigen::Index>(size));
    pt.velocity.resize(static_cast<Eigen::Index>(size));
    for (Eigen::Index i = 0; i < pt.position.size(); ++i) {
      pt.position(i) = unit(pt.rng);
      pt.velocity(i) = 0.2 * (unit(pt.rng) - 0.5);
    }
  }
  swarm[0].position.setOnes();
  if (cfg.sentinel_support > 0 && cfg.sentinel_support < size && swarm.size() > 1) {
    swarm[1].position = sentinel_position(size, cfg.sentinel_support);
  }

  RestartOutcome out;
  auto evaluate_all = [&] {
    parallel_for(swarm.size(), cfg.threads, [&](std::size_t k) {
      swarm[k].value = safe_eval(criterion, simplex_map(swarm[k].position, n));
    });
    out.evaluations += swarm.size();
  };
  Eigen::VectorXd global_position = swarm[0].position;
  double global_value = kInf;
  auto update_bests = [&] {
    for (Particle& pt : swarm) {
      if (pt.value < pt.best_value) {
        pt.best_value = pt.value;
        pt.best_position = pt.position;
      }
      if (pt.value < global_value) {
        global_value = pt.value;
        global_position = pt.position;
      }
    }
  };

  evaluate_all();
  for (Particle& pt : swarm) pt.best_position = pt.position;
  update_bests();
  if (!std::isfinite(global_value)) {
    throw InfeasibleProblem("every initial particle gives a singular or non-finite criterion value");
  }

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    parallel_for(swarm.size(), cfg.threads, [&](std::size_t k) {
      Particle& pt = swarm[k];
      for (Eigen::Index i = 0; i < pt.position.size(); ++i) {
        const double r1 = unit(pt.rng);
        const double r2 = unit(pt.rng);
        double v = cfg.inertia * pt.velocity(i) + cfg.cognitive * r1 * (pt.best_position(i) - pt.position(i)) +
                   cfg.social * r2 * (global_position(i) - pt.position(i));
        v = std::clamp(v, -1.0, 1.0);
        double x = pt.position(i) + v;
        if (x < 0.0) {
          x = -x;
          v = -v;
        } else if (x > 1.0) {
          x = 2.0 - x;
          v = -v;
        }
        pt.position(i) = std::clamp(x, 0.0, 1.0);
        pt.velocity(i) = v;
      }
      pt.value = safe_eval(criterion, simplex_map(pt.position, n));
    });
    out.evaluations += swarm.size();
    update_bests();
    out.history.push_back(global_value);
    if (out.history.size() > cfg.patience) {
      const double old = out.history[out.history.size() - 1 - cfg.patience];
      if (old - global_value <= cfg.tolerance * std::abs(old)) break;
    }
  }
  out.best_position = global_position;
  out.best_value = global_value;
  return out;
}

}  // namespace

SolveResult minimize_over_simplex(const DesignCriterion& criterion, const DesignSpace& space, int n,
                                  const PsoConfig& config) {
  config.validate();
  if (n < 1) throw InvalidArgument("sample size n must be >= 1");
  const std::size_t size = space.size();
  const Design uniform = Design::uniform(size, n);
  const double uniform_value = safe_eval(criterion, uniform);
  if (!std::isfinite(uniform_value)) {
    throw InfeasibleProblem("criterion is not finite on the uniform design");
  }

  SolveResult result{uniform, uniform_value, {}, 1, config.seed};
  double running = uniform_value;
  Eigen::VectorXd best_position = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(size));
  double best_raw = uniform_value;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    RestartOutcome o = run_restart(criterion, size, n, config, r);
    result.evaluations += o.evaluations;
    for (double h : o.history) {
      running = std::min(running, h);
      result.history.push_back(running);
    }
    if (o.best_value < best_raw) {
      best_raw = o.best_value;
      best_position = o.best_position;
    }
  }

  const Design candidate = truncate_small_weights(simplex_map(best_position, n));
  const double value = safe_eval(criterion, candidate);
  ++result.evaluations;
  if (value <= uniform_value) {
    result.best_design = candidate;
    result.best_value = value;
  }
  if (!result.history.empty()) result.history.back() = std::min(result.history.back(), result.best_value);
  return result;
}

}  // namespace robust_design
