#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flock/config.hpp"
#include "flock/io.hpp"
#include "flock/kinetic.hpp"

namespace flock {

inline constexpr const char* kVersion = "1.0.0";

/// One embedded acceptance check. `measured` is a space-separated list of
/// key=value pairs.
struct Check {
  std::string tag;
  bool pass = false;
  std::string measured;
};

struct NamedTable {
  std::string name;  // file stem
  Table table;
};

struct NamedPlot {
  std::string name;
  std::string title;
  std::vector<PlotLine> lines;
  bool log_y = true;
};

/// Output of one stage of an experiment; stages are also the unit timed by
/// the acceptance runner.
struct StageResult {
  std::string stage;
  std::vector<Check> checks;
  std::vector<NamedTable> tables;
  std::vector<NamedPlot> plots;
  std::vector<std::pair<std::string, std::string>> notes;
  double seconds = 0.0;

  bool passed() const;
  const Check* find(const std::string& tag) const;
};

struct KineticOptions {
  enum class Mode { FixedPoint, SemiLagrangian };

  double x_min = -1.6, x_max = 1.6;
  double v_min = -1.8, v_max = 1.8;
  int nx = 64, nv = 64;
  double tol = 1e-6;  // relative to the sup norm of the initial datum
  int max_iter = 8;
  double sl_dt = 0.1;
  Mode mode = Mode::FixedPoint;

  PhaseGrid grid() const { return PhaseGrid::make(x_min, x_max, v_min, v_max, nx, nv); }
};

std::string to_string(KineticOptions::Mode mode);
KineticOptions::Mode parse_kinetic_mode(const std::string& text);

struct ExperimentContext {
  SimConfig config;
  KineticOptions kinetic;
  int threads = 1;
  std::string out_dir;  // empty: no artifacts written
};

/// Smooth test datum: cos²(πx)cos²(πv) on |x|,|v| <= 1/2, mollified with
/// eps = 2 max(hx, hv), unit mass, zero mean velocity.
KineticState kinetic_initial(const PhaseGrid& grid);

// Stages. Each reads the fields of the context it needs; see README.
StageResult oracle_convergence_stage(const ExperimentContext& ctx);
StageResult comparison_stage(const ExperimentContext& ctx);
StageResult pathwise_stage(const ExperimentContext& ctx);
StageResult flock_rate_stage(const ExperimentContext& ctx);
StageResult wong_zakai_stage(const ExperimentContext& ctx);
StageResult ito_strat_stage(const ExperimentContext& ctx);
StageResult chaos_stage(const ExperimentContext& ctx);
StageResult stability_stage(const ExperimentContext& ctx);
StageResult kinetic_fixed_point_stage(const ExperimentContext& ctx);
StageResult kinetic_semi_lagrangian_stage(const ExperimentContext& ctx);
StageResult kinetic_particle_stage(const ExperimentContext& ctx);

struct ExperimentResult {
  std::string name;
  std::vector<StageResult> stages;
  double wall_seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
};

/// oracle-suite, flock-rate, pathwise-bounds, wong-zakai, ito-vs-strat,
/// chaos, stability, kinetic-fixed-point, kinetic-vs-particle, kinetic.
const std::vector<std::string>& experiment_names();
bool is_experiment(const std::string& name);

/// Runs the named experiment; when ctx.out_dir is set, writes its CSV
/// tables, SVG plots and manifest.txt there.
ExperimentResult run_experiment(const std::string& name, const ExperimentContext& ctx);

void write_manifest(const ExperimentResult& result, const ExperimentContext& ctx, const std::string& file);

struct ReportRow {
  std::string experiment;
  std::string tag;
  bool pass = false;
  std::string measured;
};

struct Report {
  std::string file;
  std::vector<ReportRow> rows;
  bool pass = true;
};

/// Collects every manifest.txt below `dir` (sorted by path) into
/// dir/summary.txt. Output depends only on the manifests, so reruns are
/// byte-identical. Throws ConfigError when no manifest exists.
Report emit_report(const std::string& dir);

}  // namespace flock
