#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "sentilab/io.hpp"
#include "sentilab/synth.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the build tree, unique per process and call.
inline fs::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() / "sentilab-tests" /
                       (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// The synthetic desk datasets, written once per test process.
inline const fs::path& desk_data() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir("desk-data");
    sentilab::synth::write_datasets(d, {});
    return d;
  }();
  return dir;
}

}  // namespace testing
