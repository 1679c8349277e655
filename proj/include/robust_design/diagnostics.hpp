#ifndef ROBUST_DESIGN_DIAGNOSTICS_HPP
#define ROBUST_DESIGN_DIAGNOSTICS_HPP

#include <cstddef>
#include <functional>
#include <string>

namespace robust_design {

using WarningHandler = std::function<void(const std::string& key, const std::string& message)>;

/// Installs a process-wide warning sink and returns the previous one. The
/// default handler prints the first occurrence of each key to stderr and
/// counts the rest.
WarningHandler set_warning_handler(WarningHandler handler);

/// Emits a warning. `key` groups repeats of the same condition (e.g. a
/// degenerate top eigenvalue inside an optimization loop).
void warn(const std::string& key, const std::string& message);

/// Number of warnings emitted under `key` since start-up (or the last reset).
std::size_t warning_count(const std::string& key);
void reset_warning_counts();

}  // namespace robust_design

#endif  // ROBUST_DESIGN_DIAGNOSTICS_HPP
