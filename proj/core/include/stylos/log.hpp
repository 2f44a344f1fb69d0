#pragma once

#include <string>

namespace stylos::log {

void debug(const std::string& message);
void info(const std::string& message);
void warn(const std::string& message);
void error(const std::string& message);

/// "debug", "info", "warn", "error" or "off".
void set_level(const std::string& level);

} // namespace stylos::log
