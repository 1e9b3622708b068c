#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace chronotoken {

// Verbosity comes from the CHRONOTOKEN_LOG environment variable:
// error, warn (default), info, debug.
enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("CHRONOTOKEN_LOG");
    if (env == nullptr) return LogLevel::kWarn;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

inline void log_msg(LogLevel lvl, const char* tag, const std::string& msg) {
  if (static_cast<int>(lvl) <= static_cast<int>(log_level())) {
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
  }
}

inline void log_error(const std::string& m) { log_msg(LogLevel::kError, "error", m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::kWarn, "warn", m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::kInfo, "info", m); }
inline void log_debug(const std::string& m) { log_msg(LogLevel::kDebug, "debug", m); }

}  // namespace chronotoken
