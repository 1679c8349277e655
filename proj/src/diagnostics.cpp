#include "robust_design/diagnostics.hpp"

#include <iostream>
#include <map>
#include <mutex>
#include <utility>

namespace robust_design {
namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, std::size_t>& counts() {
  static std::map<std::string, std::size_t> c;
  return c;
}

void default_handler(const std::string& key, const std::string& message) {
  // counts() was already bumped by warn(); only the first one is printed
  if (counts()[key] == 1) {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningHandler& handler() {
  static WarningHandler h = default_handler;
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(registry_mutex());
  auto previous = std::move(handler());
  handler() = h ? std::move(h) : WarningHandler(default_handler);
  return previous;
}

void warn(const std::string& key, const std::string& message) {
  std::lock_guard lock(registry_mutex());
  ++counts()[key];
  handler()(key, message);
}

std::size_t warning_count(const std::string& key) {
  std::lock_guard lock(registry_mutex());
  auto it = counts().find(key);
  return it == counts().end() ? 0 : it->second;
}

void reset_warning_counts() {
  std::lock_guard lock(registry_mutex());
  counts().clear();
}

}  // namespace robust_design
