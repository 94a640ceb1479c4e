#include "vdforge/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace vdforge {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void set_quiet(bool quiet) noexcept { g_quiet = quiet; }

void log_info(std::string_view msg) {
  if (g_quiet) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[vdforge] " << msg << '\n';
}

void log_warn(std::string_view msg) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[vdforge] warning: " << msg << '\n';
}

}  // namespace vdforge
