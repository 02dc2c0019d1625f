#include "seqgeo/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string>

namespace seqgeo::log {
namespace {

Level from_env() {
  const char* env = std::getenv("SEQGEO_LOG");
  if (!env) return Level::kWarn;
  const std::string v(env);
  if (v == "error") return Level::kError;
  if (v == "info") return Level::kInfo;
  if (v == "debug") return Level::kDebug;
  return Level::kWarn;
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

constexpr std::string_view kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

Level threshold() { return static_cast<Level>(current().load()); }

void set_threshold(Level level) { current().store(static_cast<int>(level)); }

void write(Level level, std::string_view msg) {
  if (static_cast<int>(level) > current().load()) return;
  std::cerr << "[" << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace seqgeo::log
