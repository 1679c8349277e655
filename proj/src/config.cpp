#include "robust_design/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "robust_design/errors.hpp"

namespace robust_design {

namespace {

using nlohmann::json;

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

const json& require(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return obj.at(key);
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<std::int64_t>();
}

std::size_t positive(const json& v, const std::string& where) {
  const auto x = integer(v, where);
  if (x < 1) throw ConfigError(where + ": must be >= 1");
  return static_cast<std::size_t>(x);
}

Eigen::VectorXd vector(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = number(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

DesignSpace parse_space(const json& j) {
  const std::string where = "design_space";
  allow_keys(j, where, {"grid", "points"});
  if (j.contains("grid") == j.contains("points")) {
    throw ConfigError(where + ": give exactly one of 'grid' or 'points'");
  }
  try {
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (!g.is_array() || g.empty()) throw ConfigError(where + ".grid: expected a non-empty array of axes");
      std::vector<DesignSpace::Axis> axes;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::string w = where + ".grid[" + std::to_string(i) + "]";
        allow_keys(g[i], w, {"min", "max", "count"});
        axes.push_back({number(require(g[i], w, "min"), w + ".min"), number(require(g[i], w, "max"), w + ".max"),
                        positive(require(g[i], w, "count"), w + ".count")});
      }
      return DesignSpace::grid(axes);
    }
    const json& pts = j.at("points");
    if (!pts.is_array() || pts.empty()) throw ConfigError(where + ".points: expected a non-empty array");
    std::size_t dim = 0;
    Eigen::MatrixXd m;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string w = where + ".points[" + std::to_string(i) + "]";
      const Eigen::VectorXd row = pts[i].is_number() ? Eigen::VectorXd::Constant(1, number(pts[i], w)) : vector(pts[i], w);
      if (i == 0) {
        dim = static_cast<std::size_t>(row.size());
        m.resize(static_cast<Eigen::Index>(pts.size()), row.size());
      } else if (static_cast<std::size_t>(row.size()) != dim) {
        throw ConfigError(w + ": every point needs the same number of coordinates");
      }
      m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return DesignSpace(std::move(m));
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::vector<numerics::Prior> parse_priors(const json& root, std::size_t count) {
  numerics::Prior prior = numerics::Prior::uniform();
  if (root.contains("prior")) {
    const json& j = root.at("prior");
    allow_keys(j, "prior", {"type", "a", "b"});
    const json& type = require(j, "prior", "type");
    if (type == "uniform") {
      if (j.contains("a") || j.contains("b")) throw ConfigError("prior: uniform prior takes no 'a'/'b'");
    } else if (type == "beta") {
      try {
        prior = numerics::Prior::beta(number(require(j, "prior", "a"), "prior.a"),
                                      number(require(j, "prior", "b"), "prior.b"));
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("prior: ") + e.what());
      }
    } else {
      throw ConfigError("prior.type: expected 'uniform' or 'beta'");
    }
  }
  return std::vector<numerics::Prior>(count, prior);
}

ModelSpec parse_model(const json& j, const json& root) {
  const std::string where = "model";
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const json& type = require(j, where, "type");
  if (!type.is_string()) throw ConfigError(where + ".type: expected a string");
  const std::string t = type.get<std::string>();
  if (t == "polynomial") {
    allow_keys(j, where, {"type", "degree"});
    const auto degree = integer(require(j, where, "degree"), where + ".degree");
    if (degree < 0 || degree > 20) throw ConfigError(where + ".degree: must lie in [0, 20]");
    return models::polynomial(static_cast<int>(degree));
  }
  if (t == "full_quadratic") {
    allow_keys(j, where, {"type"});
    return models::full_quadratic();
  }
  if (t == "intercept") {
    allow_keys(j, where, {"type"});
    return models::intercept();
  }
  if (t == "exponential") {
    allow_keys(j, where, {"type", "transform"});
    const json& tr = require(j, where, "transform");
    allow_keys(tr, where + ".transform", {"at_zero", "at_one"});
    AffineTransform transform{vector(require(tr, where + ".transform", "at_zero"), where + ".transform.at_zero"),
                              vector(require(tr, where + ".transform", "at_one"), where + ".transform.at_one")};
    if (transform.at_zero.size() != 2 || transform.at_one.size() != 2) {
      throw ConfigError(where + ".transform: exponential model has 2 parameters");
    }
    return models::exponential(std::move(transform), parse_priors(root, 2));
  }
  throw ConfigError(where + ".type: unknown model '" + t + "'");
}

PsoConfig parse_pso(const json& j) {
  PsoConfig cfg;
  allow_keys(j, "pso", {"swarm", "iterations", "restarts", "inertia", "cognitive", "social", "tolerance", "patience"});
  if (j.contains("swarm")) cfg.swarm_size = positive(j.at("swarm"), "pso.swarm");
  if (j.contains("iterations")) cfg.iterations = positive(j.at("iterations"), "pso.iterations");
  if (j.contains("restarts")) cfg.restarts = positive(j.at("restarts"), "pso.restarts");
  if (j.contains("patience")) cfg.patience = positive(j.at("patience"), "pso.patience");
  if (j.contains("inertia")) cfg.inertia = number(j.at("inertia"), "pso.inertia");
  if (j.contains("cognitive")) cfg.cognitive = number(j.at("cognitive"), "pso.cognitive");
  if (j.contains("social")) cfg.social = number(j.at("social"), "pso.social");
  if (j.contains("tolerance")) cfg.tolerance = number(j.at("tolerance"), "pso.tolerance");
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("pso: ") + e.what());
  }
  return cfg;
}

}  // namespace

ProblemConfig parse_config(const json& j) {
  allow_keys(j, "config", {"design_space", "model", "missingness", "eta2", "sigma2", "n", "variant", "prior",
                           "quadrature_nodes", "beta_true", "pso", "seed"});
  ProblemConfig cfg;
  cfg.space = parse_space(require(j, "config", "design_space"));
  cfg.model = parse_model(require(j, "config", "model"), j);
  if (!cfg.nonlinear() && j.contains("prior")) throw ConfigError("prior: only nonlinear models take a prior");

  const json& miss = require(j, "config", "missingness");
  allow_keys(miss, "missingness", {"gamma"});
  cfg.gamma = vector(require(miss, "missingness", "gamma"), "missingness.gamma");
  if (static_cast<std::size_t>(cfg.gamma.size()) != cfg.space.dim() + 1) {
    throw ConfigError("missingness.gamma: expected " + std::to_string(cfg.space.dim() + 1) +
                      " entries (intercept plus one slope per covariate)");
  }

  cfg.params.eta2 = number(require(j, "config", "eta2"), "eta2");
  cfg.params.sigma2 = number(require(j, "config", "sigma2"), "sigma2");
  const auto n = integer(require(j, "config", "n"), "n");
  if (n < 1 || n > 1000000) throw ConfigError("n: must lie in [1, 1e6]");
  cfg.n = static_cast<int>(n);
  if (j.contains("variant")) {
    if (!j.at("variant").is_string()) throw ConfigError("variant: expected a string");
    try {
      cfg.variant = parse_variant(j.at("variant").get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("variant: ") + e.what());
    }
  }
  if (j.contains("quadrature_nodes")) cfg.quadrature_nodes = positive(j.at("quadrature_nodes"), "quadrature_nodes");
  if (j.contains("pso")) cfg.pso = parse_pso(j.at("pso"));
  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      throw ConfigError("seed: expected a non-negative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("beta_true")) cfg.beta_true = vector(j.at("beta_true"), "beta_true");

  try {
    cfg.params.validate();
    (void)cfg.retention();
    if (cfg.beta_true && static_cast<std::size_t>(cfg.beta_true->size()) != num_params(cfg.model)) {
      throw InvalidArgument("beta_true length differs from the number of model parameters");
    }
    validate_model(cfg.model, cfg.space, cfg.nonlinear() ? std::optional(cfg.reference_beta()) : std::nullopt);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  cfg.pso.seed = cfg.seed;
  cfg.pso.sentinel_support = num_params(cfg.model);
  return cfg;
}

ProblemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

Eigen::VectorXd ProblemConfig::retention() const { return MissingnessModel(gamma).probabilities(space); }

Eigen::VectorXd ProblemConfig::reference_beta() const {
  if (beta_true) return *beta_true;
  if (const auto* nl = std::get_if<NonlinearModel>(&model)) {
    return nl->transform.map(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nl->num_params), 0.5));
  }
  return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params(model)));
}

Eigen::MatrixXd ProblemConfig::reference_z() const { return design_matrix(model, space, reference_beta()); }

Problem::Problem(ProblemConfig config) : config_(std::move(config)), retention_(config_.retention()) {
  if (const auto* nl = std::get_if<NonlinearModel>(&config_.model)) {
    bayes_ = std::make_unique<BayesianLoss>(*nl, config_.space, retention_, config_.params,
                                            prior_rule(*nl, config_.quadrature_nodes), config_.variant);
  } else {
    geometry_.emplace(design_matrix(std::get<LinearBasis>(config_.model), config_.space));
  }
}

LossReport Problem::evaluate(const Design& design) const {
  if (design.n() != config_.n) throw InvalidArgument("design n differs from the configured n");
  if (bayes_) return (*bayes_)(design);
  return taylor_loss(*geometry_, design, retention_, config_.params, config_.variant);
}

}  // namespace robust_design
