#include "sentilab/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace sentilab::log {

namespace {

std::mutex mu;

bool quiet() {
  static const bool q = [] {
    const char* v = std::getenv("SENTILAB_LOG");
    return v && std::string(v) == "quiet";
  }();
  return q;
}

}  // namespace

void info(std::string_view msg) {
  if (quiet()) return;
  std::lock_guard lock(mu);
  std::cerr << "[info] " << msg << '\n';
}

void warn(std::string_view msg) {
  if (quiet()) return;
  std::lock_guard lock(mu);
  std::cerr << "[warn] " << msg << '\n';
}

}  // namespace sentilab::log
