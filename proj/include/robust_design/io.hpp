#ifndef ROBUST_DESIGN_IO_HPP
#define ROBUST_DESIGN_IO_HPP

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "robust_design/model.hpp"

namespace robust_design {

/// A design read from disk: continuous weights plus, when the file carries
/// them, integer counts.
struct DesignFile {
  Design design;
  std::optional<ExactDesign> exact;
};

/// Reads design.json ({"n", "weights"} and/or {"counts"}) or a CSV with an
/// `xi` and/or `n_i`/`n_i_rounded` column. Throws ConfigError when malformed or
/// when the length differs from `expected_size` (0 accepts any length).
DesignFile read_design(const std::filesystem::path& path, std::size_t expected_size);

nlohmann::json design_to_json(const DesignSpace& space, const Design& design,
                              const std::optional<ExactDesign>& exact);
void write_design_csv(std::ostream& os, const DesignSpace& space, const Design& design,
                      const std::optional<ExactDesign>& exact);
void write_exact_csv(std::ostream& os, const DesignSpace& space, const ExactDesign& exact);

/// Bar chart of the weights over the design-space index.
std::string weights_svg(const DesignSpace& space, const Design& design, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace robust_design

#endif  // ROBUST_DESIGN_IO_HPP
