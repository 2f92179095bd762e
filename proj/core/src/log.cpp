#include "tsan/log.hpp"

#include <iostream>
#include <mutex>

namespace tsan::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

const char* label(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warning";
    case Level::error: return "error";
  }
  return "?";
}

Level g_min_level = Level::info;

Sink& current_sink() {
  static Sink sink = [](Level level, std::string_view message) {
    std::cerr << "[tsan " << label(level) << "] " << message << '\n';
  };
  return sink;
}

}  // namespace

Sink set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  Sink previous = std::move(current_sink());
  current_sink() = std::move(sink);
  return previous;
}

void set_min_level(Level level) {
  std::lock_guard lock(sink_mutex());
  g_min_level = level;
}

void write(Level level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (level < g_min_level || !current_sink()) return;
  current_sink()(level, message);
}

}  // namespace tsan::log
