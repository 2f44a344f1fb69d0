// Compiled without the libtorch include path: libtorch bundles its own fmt,
// which is incompatible with the one spdlog is built against.
#include "stylos/log.hpp"

#include <spdlog/spdlog.h>

namespace stylos::log {

void debug(const std::string& message) { spdlog::debug(message); }
void info(const std::string& message) { spdlog::info(message); }
void warn(const std::string& message) { spdlog::warn(message); }
void error(const std::string& message) { spdlog::error(message); }

void set_level(const std::string& level) { spdlog::set_level(spdlog::level::from_str(level)); }

} // namespace stylos::log
