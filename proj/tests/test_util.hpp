#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "akgan/common.hpp"

namespace testutil {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("akgan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct QuietWarnings {
  QuietWarnings() { akgan::set_warnings_enabled(false); }
  ~QuietWarnings() { akgan::set_warnings_enabled(true); }
};

}  // namespace testutil
