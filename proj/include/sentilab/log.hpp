#pragma once

#include <string_view>

namespace sentilab::log {

// Diagnostics go to stderr. SENTILAB_LOG=quiet silences info and warnings.
void info(std::string_view msg);
void warn(std::string_view msg);

}  // namespace sentilab::log
