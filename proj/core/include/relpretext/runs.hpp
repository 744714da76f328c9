#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relpretext/config.hpp"

namespace relpretext {

inline constexpr const char* kToolVersion = "relpretext 0.1.0";

// Stage directories are write-once: a second attempt to produce the same
// stage in the same run is rejected so earlier outputs are never mutated.
struct RunDir {
  std::string root;  // runs/<name>

  std::string stage_dir(const std::string& stage) const { return root + "/" + stage; }
  // Creates the stage directory, failing with ArtifactExists if it already
  // holds a manifest.
  std::string create_stage(const std::string& stage) const;
  // Fails with MissingArtifact naming the stage that has not run yet.
  std::string require_stage(const std::string& stage) const;
};

uint64_t file_digest(const std::string& path);

struct ManifestInfo {
  Config config;
  std::vector<uint64_t> seeds;
  std::map<std::string, std::string> inputs;     // label -> path
  std::vector<std::string> artifacts;            // files written by the stage
};

void write_manifest(const std::string& stage_dir, const ManifestInfo& info);

}  // namespace relpretext
