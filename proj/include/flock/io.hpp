#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "flock/kinetic.hpp"
#include "flock/particle.hpp"
#include "flock/sde.hpp"
#include "flock/series.hpp"
#include "flock/wiener.hpp"

namespace flock {

/// Columns of equal length under a header; written as CSV with 17 significant digits.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) { rows.push_back(std::move(row)); }
};

void write_csv(const Table& table, const std::string& file);
Table read_csv(const std::string& file);

void write_path_csv(const WienerPath& path, const std::string& file);  // t,W
void write_trajectory_csv(const Trajectory<double>& traj, const std::string& file);  // t,value
void write_series_csv(const MomentSeries& series, const std::string& file);  // t,M0,M1...,M2,E,suppX,suppV,W
void write_snapshots_csv(const TrajectoryRecord& record, const std::string& file);  // t,i,x...,v...
void write_kinetic_csv(const KineticState& state, const std::string& file);  // x,v,f

/// Compact little-endian dumps: "FLKM" observables and "FLKG" grid densities.
void write_series_binary(const MomentSeries& series, const std::string& file);
MomentSeries read_series_binary(const std::string& file);
void write_kinetic_binary(const KineticState& state, const std::string& file);
KineticState read_kinetic_binary(const std::string& file);

struct PlotLine {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

/// Static SVG line chart; with log_y the y axis shows log10 of positive values.
void write_svg_plot(const std::string& file, const std::string& title, const std::vector<PlotLine>& lines,
                    bool log_y = true);

/// Creates the directory (and parents) when missing.
void ensure_directory(const std::string& dir);

}  // namespace flock
