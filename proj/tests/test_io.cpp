#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "yamabe/io.hpp"

using namespace yamabe;
namespace fs = std::filesystem;

namespace {

// removed on destruction
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("yamabe_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> errors_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.errors;
  }
  return {};
}

bool mentions(const std::vector<std::string>& errs, std::string_view what) {
  for (const auto& e : errs)
    if (e.find(what) != std::string::npos) return true;
  return false;
}

constexpr const char* kSoliton = R"({"command":"soliton","n":3,"beta":1,"lambda":1})";

RunOutcome run_text(std::string_view text, const fs::path& out, bool strict = false, int parallel = 1) {
  RunSettings st;
  st.out = out;
  st.strict = strict;
  st.parallel = parallel;
  return run(parse_config(text), st);
}

int exit_status(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("minimal soliton config fills defaults") {
  const auto cfg = parse_config(R"({"command":"soliton","n":3,"beta":1,"lambda":1})");
  CHECK(cfg.command == Command::Soliton);
  CHECK(cfg.body["kind"] == "steady");
  CHECK(cfg.body["s_end"] == 200.0);
  CHECK(cfg.body["schema"] == std::string(kConfigSchema));
  CHECK(cfg.output_dir.empty());
}

TEST_CASE("schema errors are collected") {
  const auto errs = errors_of(R"({"command":"soliton","n":3,"beta":0,"lambda":1,"kind":"expander","colour":"red"})");
  CHECK(errs.size() == 3);
  CHECK(mentions(errs, "beta"));
  CHECK(mentions(errs, "kind"));
  CHECK(mentions(errs, "colour: unknown key"));
  CHECK(mentions(errors_of(R"({"command":"soliton","beta":1,"lambda":1})"), "n"));
  CHECK(mentions(errors_of(R"({"command":"soliton","n":2,"beta":1,"lambda":1})"), "n"));
  CHECK(mentions(errors_of(R"({"command":"soliton","n":3,"beta":"one","lambda":1})"), "beta"));
}

TEST_CASE("nested keys are reported with their path") {
  const auto errs = errors_of(
      R"({"command":"evolve","horizon":1,"data":{"kind":"soliton_perturbed","amplitude":-2,"bogus":1},"mesh":{"nodes":4}})");
  CHECK(mentions(errs, "data.amplitude"));
  CHECK(mentions(errs, "data.bogus: unknown key"));
  CHECK(mentions(errs, "mesh.nodes"));
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config("[]"), ConfigError);
  CHECK(mentions(errors_of(R"({"n":3})"), "command"));
  CHECK(mentions(errors_of(R"({"command":"expand"})"), "command"));
  CHECK(mentions(errors_of(R"({"command":"soliton","n":3,"beta":1,"lambda":1,"schema":"yamabe.config/9"})"), "schema"));
}

TEST_CASE("sweep jobs are validated individually") {
  const auto errs = errors_of(
      R"({"command":"sweep","base":{"command":"soliton","n":3,"lambda":1},"grid":{"beta":[1,0,-1]}})");
  CHECK(errs.size() == 2);
  CHECK(mentions(errs, "job 1 {\"beta\":0}"));
  CHECK(mentions(errs, "job 2"));
  CHECK(mentions(errors_of(R"({"command":"sweep","base":{"command":"sweep"},"grid":{"x":[1]}})"), "do not nest"));
  CHECK(mentions(errors_of(R"({"command":"sweep","base":{"command":"soliton"},"grid":{"beta":[]}})"), "grid.beta"));
}

TEST_CASE("convergence data must carry the steady tail") {
  CHECK(mentions(errors_of(R"({"command":"converge","data":{"kind":"slow_log_tail"}})"), "data.kind"));
  CHECK(mentions(errors_of(R"({"command":"converge","data":{"kind":"log_tail","A":1,"K":1}})"), "tail slope"));
  CHECK(errors_of(R"({"command":"converge","data":{"kind":"log_tail","A":2,"K":1}})").empty());
}

TEST_CASE("soliton run writes its artifacts") {
  Scratch s("soliton");
  const auto r = run_text(kSoliton, s.dir / "run");
  REQUIRE(r.exit_code == kExitOk);
  CHECK(r.status == "ok");
  for (const char* f : {"profile.csv", "fit.json", "report.json", "manifest.json"}) CHECK(fs::exists(r.dir / f));
  const auto fit = nlohmann::json::parse(slurp(r.dir / "fit.json"));
  CHECK(fit["schema"] == "yamabe.fit/1");
  for (const char* k : {"A", "K", "C3"}) CHECK(fit.contains(k));
  CHECK(fit["A"].get<double>() == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(slurp(r.dir / "profile.csv").rfind("# schema=yamabe.profile/1", 0) == 0);
  const auto manifest = nlohmann::json::parse(slurp(r.dir / "manifest.json"));
  CHECK(manifest["schema"] == "yamabe.manifest/1");
  CHECK(manifest["config"]["n"] == 3);
  CHECK(manifest.contains("created_utc"));
  CHECK(nlohmann::json::parse(slurp(r.dir / "report.json"))["schema"] == "yamabe.report/1");
}

TEST_CASE("runs are deterministic and digests verify") {
  Scratch s("determinism");
  const auto a = run_text(kSoliton, s.dir / "a"), b = run_text(kSoliton, s.dir / "b");
  REQUIRE(a.exit_code == kExitOk);
  REQUIRE(b.exit_code == kExitOk);
  for (const char* f : {"profile.csv", "fit.json", "report.json"}) {
    CAPTURE(f);
    CHECK(slurp(a.dir / f) == slurp(b.dir / f));
  }
  // timestamps live only in the manifest
  CHECK(slurp(a.dir / "report.json").find("utc") == std::string::npos);
  const auto ok = verify_run_dir(a.dir);
  CHECK(ok.present);
  CHECK(ok.valid);
  {
    std::ofstream f(a.dir / "fit.json", std::ios::app);
    f << " ";
  }
  const auto bad = verify_run_dir(a.dir);
  CHECK(bad.present);
  CHECK_FALSE(bad.valid);
  CHECK_FALSE(verify_run_dir(s.dir).present);
}

TEST_CASE("sha256 of a known string") {
  Scratch s("sha");
  {
    std::ofstream f(s.dir / "abc", std::ios::binary);
    f << "abc";
  }
  CHECK(sha256_file(s.dir / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("json artifacts carry no NaN or Infinity") {
  Scratch s("finite");
  const auto r = run_text(
      R"({"command":"evolve","horizon":0.2,"data":{"kind":"log_tail","A":2,"K":1},"mesh":{"nodes":256,"log_r_max":8},"snapshots":2})",
      s.dir / "run");
  REQUIRE(r.exit_code == kExitOk);
  for (const auto& e : fs::directory_iterator(r.dir)) {
    const auto text = slurp(e.path());
    CAPTURE(e.path().filename().string());
    CHECK(text.find("NaN") == std::string::npos);
    CHECK(text.find("nan") == std::string::npos);
    CHECK(text.find("inf") == std::string::npos);
    CHECK(text.find("schema") != std::string::npos);
  }
  const auto snaps = slurp(r.dir / "snapshots.csv");
  CHECK(snaps.find("\nt,r,u,R\n") != std::string::npos);
}

TEST_CASE("solver failure leaves a failed report and no manifest") {
  Scratch s("failure");
  const auto r = run_text(R"({"command":"soliton","n":3,"beta":1,"lambda":1,"s_end":20,"fit_window":[10,20]})",
                          s.dir / "run");
  CHECK(r.exit_code == kExitSolver);
  CHECK(r.status == "failed");
  CHECK_FALSE(fs::exists(r.dir / "manifest.json"));
  const auto rep = nlohmann::json::parse(slurp(r.dir / "report.json"));
  CHECK(rep["status"] == "failed");
  CHECK(rep.contains("error"));
}

TEST_CASE("strict mode turns an inconclusive verdict into exit 4") {
  Scratch s("strict");
  const char* single =
      R"({"command":"singularity-finite","data":{"kind":"cylinder","T":1},"ladder":[50],"extinction_floor":1e-6})";
  const auto loose = run_text(single, s.dir / "loose");
  CHECK(loose.exit_code == kExitOk);
  CHECK(loose.status == "inconclusive");
  const auto strict = run_text(single, s.dir / "strict", true);
  CHECK(strict.exit_code == kExitInconclusive);
  CHECK(fs::exists(strict.dir / "manifest.json"));
}

TEST_CASE("resolution scale multiplies node counts") {
  Scratch s("scale");
  RunSettings st;
  st.out = s.dir / "run";
  st.resolution_scale = 2;
  const auto r = run(parse_config(
                         R"({"command":"evolve","horizon":0.05,"data":{"kind":"log_tail","A":2,"K":1},"mesh":{"nodes":128,"log_r_max":6},"snapshots":1})"),
                     st);
  REQUIRE(r.exit_code == kExitOk);
  const auto m = nlohmann::json::parse(slurp(r.dir / "manifest.json"));
  CHECK(m["config"]["mesh"]["nodes"] == 256);
  st.resolution_scale = 0;
  CHECK(run(parse_config(kSoliton), st).exit_code == kExitConfig);
}

TEST_CASE("merge keyed by parameters") {
  Scratch s("merge");
  std::vector<fs::path> dirs;
  for (double lambda : {0.5, 1.0, 2.0}) {
    std::string cfg = kSoliton;
    cfg.replace(cfg.find("\"lambda\":1"), 10, "\"lambda\":" + std::to_string(lambda));
    const auto r = run_text(cfg, s.dir / ("b" + std::to_string(dirs.size())));
    REQUIRE(r.exit_code == kExitOk);
    dirs.push_back(r.dir);
  }
  fs::create_directories(s.dir / "stray");
  dirs.push_back(s.dir / "stray");

  std::ostringstream csv;
  const auto m = merge_sweep(dirs, csv);
  CHECK(m.rows == 3);
  CHECK(m.exit_code == kExitOk);
  CHECK(m.incomplete.size() == 1);
  const auto text = csv.str();
  CHECK(text.rfind("# schema=yamabe.summary/1", 0) == 0);
  CHECK(text.find("run,command,status") != std::string::npos);
  CHECK(text.find(",lambda,") != std::string::npos);

  std::ostringstream again;
  merge_sweep({dirs[2], dirs[0], dirs[1]}, again);
  CHECK(again.str() == text);

  std::ostringstream empty;
  const auto e = merge_sweep({}, empty);
  CHECK(e.exit_code == kExitOk);
  CHECK(e.rows == 0);
  CHECK_FALSE(e.warnings.empty());

  {
    std::ofstream f(dirs[1] / "profile.csv", std::ios::app);
    f << "1,2,3\n";
  }
  std::ostringstream corrupt;
  const auto c = merge_sweep(dirs, corrupt);
  CHECK(c.exit_code == kExitCorrupt);
  CHECK(c.corrupt.size() == 1);
  CHECK(c.rows == 2);
}

TEST_CASE("sweep output does not depend on parallelism") {
  Scratch s("sweep");
  const char* cfg = R"({"command":"sweep","base":{"command":"soliton","n":3,"beta":1},"grid":{"lambda":[0.5,1,2]}})";
  const auto a = run_text(cfg, s.dir / "serial", false, 1);
  const auto b = run_text(cfg, s.dir / "parallel", false, 3);
  REQUIRE(a.exit_code == kExitOk);
  REQUIRE(b.exit_code == kExitOk);
  CHECK(fs::exists(a.dir / "job_002" / "manifest.json"));
  const auto sa = slurp(a.dir / "summary.csv");
  CHECK(sa == slurp(b.dir / "summary.csv"));
  CHECK(std::count(sa.begin(), sa.end(), '\n') == 5);
  CHECK(slurp(a.dir / "job_001" / "fit.json") == slurp(b.dir / "job_001" / "fit.json"));
}

}

TEST_SUITE("cli") {

TEST_CASE("exit codes of the binary") {
  Scratch s("cli");
  const std::string exe = YAMABE_LAB_EXE;
  {
    std::ofstream f(s.dir / "bad.json");
    f << R"({"command":"soliton","n":3,"beta":0,"lambda":1})";
  }
  {
    std::ofstream f(s.dir / "good.json");
    f << kSoliton;
  }
  CHECK(exit_status(exe + " --config " + (s.dir / "bad.json").string() + " --out " + (s.dir / "x").string()) == 2);
  CHECK(exit_status(exe + " --config " + (s.dir / "missing.json").string() + " --out " + (s.dir / "x").string()) == 2);
  CHECK(exit_status(exe + " --no-such-flag") == 2);
  CHECK(exit_status(exe + " --config " + (s.dir / "good.json").string() + " --check") == 0);
  CHECK(exit_status(exe + " --config " + (s.dir / "good.json").string() + " --out " + (s.dir / "run").string()) == 0);
  CHECK(fs::exists(s.dir / "run" / "manifest.json"));
  CHECK(exit_status(exe + " merge " + (s.dir / "run").string() + " -o " + (s.dir / "m.csv").string()) == 0);
  CHECK(exit_status(exe + " merge -o " + (s.dir / "empty.csv").string()) == 0);
  {
    std::ofstream f(s.dir / "run" / "fit.json", std::ios::app);
    f << "\n";
  }
  CHECK(exit_status(exe + " merge " + (s.dir / "run").string() + " -o " + (s.dir / "m2.csv").string()) == 5);
}

}
