#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flock/config.hpp"
#include "flock/experiments.hpp"

namespace {

constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> replicas;
  int threads = 1;
  std::string grid;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::string mode = "fixed-point";
  std::optional<double> sl_dt;
};

void add_run_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "key=value configuration file")->required();
  sub->add_option("--seed", f.seed, "master seed (overrides FLOCK_SEED and the config)");
  sub->add_option("--out", f.out, "output directory (default out/<experiment>)");
  sub->add_option("--replicas", f.replicas, "replica count override");
  sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--grid", f.grid, "kinetic grid xmin,xmax,vmin,vmax,nx,nv");
  sub->add_option("--tol", f.tol, "kinetic tolerance relative to the sup norm of f_in");
  sub->add_option("--max-iter", f.max_iter, "kinetic fixed-point iteration cap");
  sub->add_option("--mode", f.mode, "kinetic mode")->check(CLI::IsMember({"fixed-point", "semi-lagrangian"}));
  sub->add_option("--sl-dt", f.sl_dt, "semi-Lagrangian macro step");
}

flock::KineticOptions kinetic_options(const Flags& f) {
  flock::KineticOptions k;
  if (!f.grid.empty()) {
    std::vector<double> v;
    std::stringstream ss(f.grid);
    for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
    if (v.size() != 6) throw flock::ConfigError("--grid needs xmin,xmax,vmin,vmax,nx,nv");
    k.x_min = v[0];
    k.x_max = v[1];
    k.v_min = v[2];
    k.v_max = v[3];
    k.nx = static_cast<int>(v[4]);
    k.nv = static_cast<int>(v[5]);
  }
  if (f.tol) k.tol = *f.tol;
  if (f.max_iter) k.max_iter = *f.max_iter;
  if (f.sl_dt) k.sl_dt = *f.sl_dt;
  k.mode = flock::parse_kinetic_mode(f.mode);
  return k;
}

int run_one(const std::string& name, const Flags& f) {
  flock::ExperimentContext ctx;
  ctx.config = flock::config_from_key_values(flock::load_key_values(f.config));
  flock::apply_seed_override(ctx.config);
  if (f.seed) ctx.config.seed = *f.seed;
  if (f.replicas) ctx.config.replicas = *f.replicas;
  ctx.config.validate();
  ctx.kinetic = kinetic_options(f);
  ctx.threads = f.threads;
  ctx.out_dir = f.out.empty() ? "out/" + name : f.out;

  const auto result = flock::run_experiment(name, ctx);
  for (const auto& s : result.stages)
    for (const auto& c : s.checks)
      std::printf("%-4s %-28s %s\n", c.pass ? "pass" : "FAIL", c.tag.c_str(), c.measured.c_str());
  std::printf("%s: %s in %.1f s, artifacts in %s\n", name.c_str(), result.passed() ? "pass" : "fail",
              result.wall_seconds, ctx.out_dir.c_str());
  return result.passed() ? 0 : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic Cucker-Smale experiments"};
  app.require_subcommand(1);
  Flags flags;
  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& name : flock::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    add_run_flags(sub, flags);
    subs.emplace_back(name, sub);
  }
  std::string report_dir;
  auto* report = app.add_subcommand("report", "summarise every manifest below DIR into DIR/summary.txt");
  report->add_option("dir", report_dir, "directory holding experiment outputs")->required();
  app.add_subcommand("list", "print the experiment names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand("list")) {
      for (const auto& n : flock::experiment_names()) std::printf("%s\n", n.c_str());
      return 0;
    }
    if (report->parsed()) {
      const auto r = flock::emit_report(report_dir);
      std::printf("%zu checks, overall %s -> %s\n", r.rows.size(), r.pass ? "pass" : "fail", r.file.c_str());
      return r.pass ? 0 : kExitCheckFailure;
    }
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) return run_one(name, flags);
  } catch (const flock::ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const flock::ShapeError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
