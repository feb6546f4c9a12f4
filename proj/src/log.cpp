#include "fadnet/log.hpp"

#include <atomic>
#include <iostream>

namespace fadnet {
namespace {
std::atomic<LogLevel> g_level{LogLevel::warning};
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log(LogLevel level, std::string_view message) {
  if (level < g_level.load()) return;
  static constexpr const char* tags[] = {"debug", "info", "warning", "error"};
  std::cerr << "[fadnet " << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace fadnet
