#include "robust_design/version.hpp"

#include <string>

#include <Eigen/Core>

namespace robust_design {

nlohmann::json version_info() {
  return nlohmann::json{
      {"robust_design", std::string(kVersion)},
      {"compiler", std::string(__VERSION__)},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                   "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

}  // namespace robust_design
