#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "relpretext/relstore.hpp"

namespace relpretext::testing {

#ifndef RELPRETEXT_TEST_DATA_DIR
#define RELPRETEXT_TEST_DATA_DIR "tests/data"
#endif

inline std::string toy_amz_dir() { return std::string(RELPRETEXT_TEST_DATA_DIR) + "/toy_amz"; }

inline RelationalStore load_toy_amz() {
  return RelationalStore::load(toy_amz_dir() + "/schema.json", toy_amz_dir());
}

// Unique scratch directory under the build tree, wiped on construction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = (std::filesystem::temp_directory_path() / ("relpretext_" + tag)).string();
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace relpretext::testing
