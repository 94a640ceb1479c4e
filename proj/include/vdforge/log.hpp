#pragma once

#include <string_view>

namespace vdforge {

// Progress and diagnostics go to stderr so stdout stays clean for data.
void set_quiet(bool quiet) noexcept;
void log_info(std::string_view msg);
void log_warn(std::string_view msg);

}  // namespace vdforge
