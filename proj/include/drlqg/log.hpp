#pragma once

#include <string>

namespace drlqg {

enum class LogLevel { Off = 0, Info = 1, Debug = 2 };

// Parsed once from the DRLQG_LOG environment variable (off|info|debug).
LogLevel log_level();

void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace drlqg
