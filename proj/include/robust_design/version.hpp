#ifndef ROBUST_DESIGN_VERSION_HPP
#define ROBUST_DESIGN_VERSION_HPP

#include <string_view>

#include "json.hpp"

namespace robust_design {

inline constexpr std::string_view kVersion = "0.1.0";

/// Library, compiler and Eigen versions for run metadata.
nlohmann::json version_info();

}  // namespace robust_design

#endif  // ROBUST_DESIGN_VERSION_HPP
