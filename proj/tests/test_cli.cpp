#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "relpretext/config.hpp"
#include "relpretext/error.hpp"
#include "test_util.hpp"

using namespace relpretext;
using namespace relpretext::testing;

namespace {

namespace fs = std::filesystem;

std::string cli_bin() {
  const char* bin = std::getenv("RELPRETEXT_BIN");
  return bin ? bin : "";
}

int run_cli(const std::string& args, const std::string& capture_file = "") {
  std::string cmd = cli_bin() + " " + args;
  if (!capture_file.empty()) cmd += " > " + capture_file + " 2>&1";
  else cmd += " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string write_config(const std::string& dir) {
  std::string path = dir + "/relpretext.toml";
  std::ofstream out(path);
  out << "[data]\n"
      << "schema = \"" << toy_amz_dir() << "/schema.json\"\n"
      << "dir = \"" << toy_amz_dir() << "\"\n"
      << "root = \"customer\"\n"
      << "[compile]\n"
      << "k = 2\n"
      << "dt = 7\n"
      << "grid = [4, 10, 16]\n"
      << "aggregators = [\"count\", \"mean\", \"sum\"]\n";
  return path;
}

}  // namespace

TEST_CASE("config parser handles sections, types, comments, overrides") {
  Config cfg = Config::parse_string(R"(
# top comment
[data]
schema = "s.json"  # trailing comment
root = "customer"
[pretrain]
epochs = 7
lr = 0.05
deterministic = true
seeds = [1, 2, 3]
names = ["a", "b"]
)");
  CHECK(cfg.get_string("data.schema") == "s.json");
  CHECK(cfg.get_int("pretrain.epochs", 0) == 7);
  CHECK(cfg.get_double("pretrain.lr", 0) == doctest::Approx(0.05));
  CHECK(cfg.get_bool("pretrain.deterministic", false));
  CHECK(cfg.get_int_list("pretrain.seeds") == std::vector<int64_t>{1, 2, 3});
  CHECK(cfg.get_string_list("pretrain.names") == std::vector<std::string>{"a", "b"});
  CHECK(cfg.get_int("pretrain.missing", 42) == 42);
  cfg.set("pretrain.epochs", "9");
  CHECK(cfg.get_int("pretrain.epochs", 0) == 9);

  try {
    Config::parse_string("keywithoutvalue\n");
    FAIL("expected ConfigParse");
  } catch (const Error& e) {
    CHECK(e.code() == "ConfigParse");
  }
}

TEST_CASE("cli: paths subcommand prints the four-set enumeration") {
  REQUIRE(!cli_bin().empty());
  TempDir tmp("cli_paths");
  std::string cfg = write_config(tmp.path());
  std::string out_file = tmp.path() + "/paths.txt";
  int rc = run_cli("paths --config " + cfg + " --root customer --k 2", out_file);
  CHECK(rc == 0);
  std::string out = slurp(out_file);
  CHECK(out.find("review") != std::string::npos);
  CHECK(out.find("product") != std::string::npos);
  CHECK(out.find("review_1") != std::string::npos);
  CHECK(out.find("review_2") != std::string::npos);
}

TEST_CASE("cli: verify-info is deterministic across reruns") {
  REQUIRE(!cli_bin().empty());
  TempDir tmp("cli_vinfo");
  std::string cfg = write_config(tmp.path());
  int rc1 = run_cli("verify-info --config " + cfg + " --runs-dir " + tmp.path() +
                    "/runs --run a --trials 10 --seed 1");
  int rc2 = run_cli("verify-info --config " + cfg + " --runs-dir " + tmp.path() +
                    "/runs --run b --trials 10 --seed 1");
  CHECK(rc1 == 0);
  CHECK(rc2 == 0);
  std::string r1 = slurp(tmp.path() + "/runs/a/verify-info/infotheory_report.csv");
  std::string r2 = slurp(tmp.path() + "/runs/b/verify-info/infotheory_report.csv");
  CHECK(!r1.empty());
  CHECK(r1 == r2);
}

TEST_CASE("cli: compile before ingest fails with MissingArtifact") {
  REQUIRE(!cli_bin().empty());
  TempDir tmp("cli_missing");
  std::string cfg = write_config(tmp.path());
  std::string out_file = tmp.path() + "/err.txt";
  int rc = run_cli("compile --config " + cfg + " --runs-dir " + tmp.path() + "/runs --run x",
                   out_file);
  CHECK(rc != 0);
  std::string out = slurp(out_file);
  CHECK(out.find("MissingArtifact") != std::string::npos);
  CHECK(out.find("ingest") != std::string::npos);  // names the absent stage
}

TEST_CASE("cli: ingest + compile + make-labels pipeline on toy data") {
  REQUIRE(!cli_bin().empty());
  TempDir tmp("cli_pipe");
  std::string cfg_path = tmp.path() + "/relpretext.toml";
  std::ofstream out(cfg_path);
  out << "[data]\n"
      << "schema = \"" << toy_amz_dir() << "/schema.json\"\n"
      << "dir = \"" << toy_amz_dir() << "\"\n"
      << "root = \"customer\"\n"
      << "[compile]\nk = 2\ndt = 7\ngrid = [4, 10, 16]\n"
      << "aggregators = [\"count\", \"mean\"]\n"
      << "[labels]\ntask = \"churn\"\nkind = \"churn\"\nvalue_column = \"amount\"\ndt = 7\n"
      << "cutoffs = [10, 12, 16]\nval_cutoff = 12\ntest_cutoff = 16\n";
  out.close();

  std::string base = " --config " + cfg_path + " --runs-dir " + tmp.path() + "/runs --run p";
  CHECK(run_cli("ingest" + base) == 0);
  CHECK(run_cli("compile" + base) == 0);
  CHECK(run_cli("make-labels" + base) == 0);
  CHECK(fs::exists(tmp.path() + "/runs/p/ingest/store_summary.json"));
  CHECK(fs::exists(tmp.path() + "/runs/p/compile/pretrain_table.csv"));
  CHECK(fs::exists(tmp.path() + "/runs/p/compile/layout.json"));
  CHECK(fs::exists(tmp.path() + "/runs/p/labels/labels_churn.csv"));

  // Stage directories are write-once.
  std::string err_file = tmp.path() + "/exists.txt";
  CHECK(run_cli("compile" + base, err_file) != 0);
  CHECK(slurp(err_file).find("ArtifactExists") != std::string::npos);

  // Reruns into a fresh run name produce byte-identical CSV artifacts.
  std::string base2 = " --config " + cfg_path + " --runs-dir " + tmp.path() + "/runs --run q";
  CHECK(run_cli("ingest" + base2) == 0);
  CHECK(run_cli("compile" + base2) == 0);
  CHECK(run_cli("make-labels" + base2) == 0);
  CHECK(slurp(tmp.path() + "/runs/p/compile/pretrain_table.csv") ==
        slurp(tmp.path() + "/runs/q/compile/pretrain_table.csv"));
  CHECK(slurp(tmp.path() + "/runs/p/labels/labels_churn.csv") ==
        slurp(tmp.path() + "/runs/q/labels/labels_churn.csv"));
}

TEST_CASE("cli: quick demo runs end-to-end and writes a report") {
  REQUIRE(!cli_bin().empty());
  TempDir tmp("cli_demo");
  std::string cfg = write_config(tmp.path());
  int rc = run_cli("demo --config " + cfg + " --runs-dir " + tmp.path() + "/runs --run d --quick");
  CHECK(rc == 0);
  std::string report = slurp(tmp.path() + "/runs/d/report/report.md");
  CHECK(report.find("pass") != std::string::npos);
  CHECK(report.find("probe") != std::string::npos);
}
