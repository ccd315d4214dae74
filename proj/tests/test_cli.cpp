#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef NMQ_CLI_PATH
#error "NMQ_CLI_PATH must point at the command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

fs::path work_root() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "nmq_cli_tests";
    fs::remove_all(r);
    fs::create_directories(r);
    return r;
  }();
  return root;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NMQ_CLI_PATH) + " " + args +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

void put_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

const char* kTinyConfig = R"({
  "preset": "markov-consistent",
  "n_steps": 2000,
  "burn_in": 100,
  "seeds": [1, 2],
  "analyses": {
    "convergence": {},
    "decomposition": {"n_steps": 300, "bound_n0": 50},
    "dependence": {"horizon": 3}
  }
})";

}  // namespace

TEST_CASE("run: tiny experiment succeeds and writes the expected files") {
  const auto root = work_root();
  const auto cfg = root / "tiny.json";
  put_file(cfg, kTinyConfig);
  const auto out = root / "tiny_run";

  const int rc = run_cli("run " + cfg.string() + " --out " + out.string());
  CHECK(rc == 0);
  for (const char* name :
       {"config.json", "manifest.json", "oracle.json", "constants.json",
        "convergence_seed1.csv", "convergence_seed2.csv",
        "convergence_summary.csv", "decomp_summary.csv",
        "decomp_trace_seed1.csv", "decomp_delta_series_seed1.csv",
        "decomp_bound.json", "dependence_phi.csv", "dependence_psi.csv",
        "dependence_summary.csv"}) {
    CHECK_MESSAGE(fs::exists(out / name), name);
  }
}

TEST_CASE("run: identical configs give byte-identical result tables") {
  const auto root = work_root();
  const auto cfg = root / "tiny.json";
  REQUIRE(fs::exists(cfg));  // written by the previous case
  const auto out_a = root / "tiny_run";
  const auto out_b = root / "tiny_run_again";

  const int rc = run_cli("run " + cfg.string() + " --out " + out_b.string());
  CHECK(rc == 0);
  for (const char* name :
       {"convergence_seed1.csv", "convergence_seed2.csv",
        "convergence_summary.csv", "decomp_summary.csv",
        "decomp_trace_seed1.csv", "decomp_delta_series_seed1.csv",
        "oracle.json", "dependence_phi.csv", "dependence_psi.csv",
        "decomp_bound.json"}) {
    CHECK_MESSAGE(slurp(out_a / name) == slurp(out_b / name), name);
  }
}

TEST_CASE("report: summarizes a finished run and writes plot tables") {
  const auto root = work_root();
  const auto out = root / "tiny_run";
  REQUIRE(fs::exists(out / "manifest.json"));

  const int rc = run_cli("report " + out.string());
  CHECK(rc == 0);
  CHECK(fs::exists(out / "plots" / "plot_convergence.csv"));
  CHECK(fs::exists(out / "plots" / "plot_delta_series.csv"));
}

TEST_CASE("report: refuses a tampered run directory") {
  const auto root = work_root();
  const auto out = root / "tiny_run_again";
  REQUIRE(fs::exists(out / "manifest.json"));
  auto bytes = slurp(out / "convergence_seed1.csv");
  bytes += "tampered\n";
  put_file(out / "convergence_seed1.csv", bytes);

  CHECK(run_cli("report " + out.string()) == 4);  // integrity failure
}

TEST_CASE("run: configuration mistakes exit with the config status") {
  const auto root = work_root();

  const auto bad_preset = root / "bad_preset.json";
  put_file(bad_preset,
           R"({"preset": "no-such-setup", "n_steps": 10, "seeds": [1]})");
  CHECK(run_cli("run " + bad_preset.string()) == 2);

  const auto malformed = root / "malformed.json";
  put_file(malformed, "{ this is not json");
  CHECK(run_cli("run " + malformed.string()) == 2);

  CHECK(run_cli("run " + (root / "absent.json").string()) == 2);
}

TEST_CASE("run: analysis refusals exit with the analysis status") {
  const auto root = work_root();
  // The copy-process setup has no unique closed class, so any analysis
  // that needs the stationary law must refuse it.
  const auto cfg = root / "copy.json";
  put_file(cfg, R"({
    "preset": "copy-process",
    "n_steps": 100,
    "burn_in": 10,
    "seeds": [1],
    "analyses": {"convergence": {}}
  })");
  CHECK(run_cli("run " + cfg.string() + " --out " +
                (root / "copy_run").string()) == 3);
}

TEST_CASE("report: missing directory is a usage error") {
  const auto root = work_root();
  CHECK(run_cli("report " + (root / "never_ran").string()) == 2);
}
