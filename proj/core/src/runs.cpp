#include "relpretext/runs.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "relpretext/error.hpp"

namespace relpretext {

namespace fs = std::filesystem;
using nlohmann::json;

std::string RunDir::create_stage(const std::string& stage) const {
  const std::string dir = stage_dir(stage);
  if (fs::exists(dir + "/manifest.json"))
    fail("ArtifactExists", "stage '" + stage + "' already ran in " + root +
                               "; use a fresh --run name (run directories are write-once)");
  fs::create_directories(dir);
  return dir;
}

std::string RunDir::require_stage(const std::string& stage) const {
  const std::string dir = stage_dir(stage);
  if (!fs::exists(dir + "/manifest.json"))
    fail("MissingArtifact", "stage '" + stage + "' has not run in " + root + "; run `relpretext " +
                                stage + "` first");
  return dir;
}

uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("MissingArtifact", "cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void write_manifest(const std::string& stage_dir, const ManifestInfo& info) {
  json j;
  j["tool_version"] = kToolVersion;
  j["config"] = json::object();
  for (const auto& [k, v] : info.config.raw()) j["config"][k] = v;
  j["seeds"] = info.seeds;
  j["inputs"] = json::object();
  for (const auto& [label, path] : info.inputs) {
    j["inputs"][label] = {{"path", path},
                          {"digest", fs::exists(path) ? file_digest(path) : 0}};
  }
  j["artifacts"] = info.artifacts;
  std::ofstream out(stage_dir + "/manifest.json");
  if (!out) fail("FileWrite", "cannot write manifest in " + stage_dir);
  out << j.dump(2) << "\n";
}

}  // namespace relpretext
