#pragma once

#include <filesystem>
#include <string>

#include "chronotopic/io.hpp"

namespace ct_test {

namespace fs = std::filesystem;

// Scratch directory wiped on scope exit.
struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("chronotopic_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path file(const std::string& name) const { return path / name; }
};

inline fs::path data_dir() { return fs::path(CHRONOTOPIC_DATA_DIR); }

}  // namespace ct_test
