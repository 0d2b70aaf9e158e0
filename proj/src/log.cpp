#include "drlqg/log.hpp"

#include <cstdlib>
#include <iostream>

namespace drlqg {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("DRLQG_LOG");
    if (!env) return LogLevel::Off;
    const std::string v(env);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    return LogLevel::Off;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[drlqg] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[drlqg:debug] " << msg << "\n";
}

}  // namespace drlqg
