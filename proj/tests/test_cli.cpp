#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "flock/experiments.hpp"

using namespace flock;
namespace fs = std::filesystem;

namespace {

struct Ran {
  int code;
  std::string out;
};

Ran sh(const std::string& args) {
  const std::string cmd = std::string(FLOCK_CLI) + " " + args + " 2>&1";
  Ran r{-1, {}};
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string cfg(const std::string& name) { return std::string(FLOCK_SOURCE_DIR) + "/configs/" + name; }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("flock_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentResult fake(const std::string& name, bool pass) {
  ExperimentResult r;
  r.name = name;
  StageResult s;
  s.stage = "fake";
  s.checks.push_back({"always-ok", true, "x=1"});
  s.checks.push_back({"maybe", pass, "x=2"});
  r.stages.push_back(s);
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("list prints every experiment") {
  const auto r = sh("list");
  CHECK(r.code == 0);
  for (const auto& n : experiment_names()) CHECK(r.out.find(n) != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(sh("").code == 2);
  CHECK(sh("no-such-experiment").code == 2);
  CHECK(sh("oracle-suite").code == 2);
  const auto empty = sh("oracle-suite --config " + cfg("empty.cfg"));
  CHECK(empty.code == 2);
  CHECK(empty.out.find("missing config keys") != std::string::npos);
  CHECK(sh("oracle-suite --config /nonexistent.cfg").code == 2);
  CHECK(sh("kinetic --config " + cfg("kinetic-constant.cfg") + " --grid 1,2,3").code == 2);
  CHECK(sh("kinetic --config " + cfg("kinetic-constant.cfg") + " --mode sideways").code == 2);
}

TEST_CASE("an experiment run writes artifacts and a reproducible report") {
  const auto dir = scratch("run");
  const auto r = sh("oracle-suite --config " + cfg("oracle-suite.cfg") + " --replicas 10 --out " + (dir / "oracle").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("LemA1-em-halving") != std::string::npos);
  CHECK(fs::exists(dir / "oracle" / "manifest.txt"));
  const auto manifest = slurp(dir / "oracle" / "manifest.txt");
  CHECK(manifest.find("status=pass") != std::string::npos);
  CHECK(manifest.find("config.replicas=10") != std::string::npos);

  CHECK(sh("report " + dir.string()).code == 0);
  const auto first = slurp(dir / "summary.txt");
  CHECK(sh("report " + dir.string()).code == 0);
  CHECK(slurp(dir / "summary.txt") == first);
  CHECK(first.find("overall=pass") != std::string::npos);
}

TEST_CASE("seed precedence: flag over environment over file") {
  const auto dir = scratch("seed");
  const std::string base = "oracle-suite --config " + cfg("oracle-suite.cfg") + " --replicas 3 --out ";
  sh(base + (dir / "file").string());
  CHECK(slurp(dir / "file" / "manifest.txt").find("seed=20240601") != std::string::npos);
  setenv("FLOCK_SEED", "4242", 1);
  sh(base + (dir / "env").string());
  sh(base + (dir / "flag").string() + " --seed 99");
  unsetenv("FLOCK_SEED");
  CHECK(slurp(dir / "env" / "manifest.txt").find("seed=4242") != std::string::npos);
  CHECK(slurp(dir / "flag" / "manifest.txt").find("seed=99") != std::string::npos);
}

TEST_CASE("report over mixed results") {
  const auto dir = scratch("mixed");
  ExperimentContext ctx;
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  write_manifest(fake("alpha", true), ctx, (dir / "a" / "manifest.txt").string());
  write_manifest(fake("beta", false), ctx, (dir / "b" / "manifest.txt").string());
  const auto rep = emit_report(dir.string());
  CHECK(!rep.pass);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].experiment.find("alpha") == 0);
  CHECK(rep.rows[3].tag == "maybe");
  CHECK(!rep.rows[3].pass);
  const auto text = slurp(rep.file);
  CHECK(text.rfind("overall=fail") != std::string::npos);
  CHECK(text.find("experiment\tcheck\tstatus\tmeasured") == 0);
  const auto again = emit_report(dir.string());
  CHECK(slurp(again.file) == text);
  CHECK(sh("report " + dir.string()).code == 1);
}

TEST_CASE("report without manifests is an error") {
  const auto dir = scratch("none");
  CHECK_THROWS_AS(emit_report(dir.string()), ConfigError);
  CHECK(sh("report " + dir.string()).code == 2);
}

TEST_CASE("experiment names") {
  CHECK(is_experiment("chaos"));
  CHECK(!is_experiment("report"));
  CHECK(parse_kinetic_mode("semi-lagrangian") == KineticOptions::Mode::SemiLagrangian);
  CHECK(to_string(KineticOptions::Mode::FixedPoint) == "fixed-point");
  CHECK_THROWS_AS(parse_kinetic_mode("fast"), ConfigError);
  ExperimentContext ctx;
  CHECK_THROWS_AS(run_experiment("nope", ctx), ConfigError);
}

}
