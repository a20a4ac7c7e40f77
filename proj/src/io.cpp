#include "flock/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace flock {

namespace {

std::ofstream open_out(const std::string& file, bool binary = false) {
  std::ofstream os(file, binary ? std::ios::binary : std::ios::out);
  if (!os) throw ConfigError("cannot write " + file);
  os << std::setprecision(17);
  return os;
}

std::ifstream open_in(const std::string& file, bool binary = false) {
  std::ifstream is(file, binary ? std::ios::binary : std::ios::in);
  if (!is) throw ConfigError("cannot read " + file);
  return is;
}

void join_header(std::ostream& os, const std::vector<std::string>& h) {
  for (std::size_t k = 0; k < h.size(); ++k) os << (k ? "," : "") << h[k];
  os << '\n';
}

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw ShapeError("truncated binary file");
  return value;
}

void check_magic(std::istream& is, const char* magic, const std::string& file) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0) throw ShapeError(file + " is not a " + std::string(magic, 4) + " file");
}

}  // namespace

void ensure_directory(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory " + dir + ": " + ec.message());
}

void write_csv(const Table& table, const std::string& file) {
  auto os = open_out(file);
  join_header(os, table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw ShapeError("table row width does not match the header");
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k];
    os << '\n';
  }
}

Table read_csv(const std::string& file) {
  auto is = open_in(file);
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw ShapeError(file + " is empty");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) row.push_back(std::stod(cell));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_path_csv(const WienerPath& path, const std::string& file) {
  auto os = open_out(file);
  os << "t,W\n";
  for (Eigen::Index k = 0; k <= path.steps(); ++k) os << path.time(k) << ',' << path.values[k] << '\n';
}

void write_trajectory_csv(const Trajectory<double>& traj, const std::string& file) {
  auto os = open_out(file);
  os << "t,value\n";
  for (std::size_t k = 0; k < traj.size(); ++k) os << traj.time(k) << ',' << traj.states[k] << '\n';
}

void write_series_csv(const MomentSeries& s, const std::string& file) {
  auto os = open_out(file);
  const Eigen::Index d = s.size() ? s.m1.front().size() : 0;
  os << "t,M0";
  for (Eigen::Index k = 0; k < d; ++k) os << ",M1_" << k + 1;
  os << ",M2,E,suppX,suppV,W\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    os << s.t[k] << ',' << s.m0[k];
    for (Eigen::Index c = 0; c < d; ++c) os << ',' << s.m1[k][c];
    os << ',' << s.m2[k] << ',' << s.e[k] << ',' << s.supp_x[k] << ',' << s.supp_v[k] << ',' << s.w[k] << '\n';
  }
}

void write_snapshots_csv(const TrajectoryRecord& record, const std::string& file) {
  auto os = open_out(file);
  const Eigen::Index d = record.ensembles.empty() ? 0 : record.ensembles.front().dim();
  os << "t,i";
  for (Eigen::Index k = 0; k < d; ++k) os << ",x" << k + 1;
  for (Eigen::Index k = 0; k < d; ++k) os << ",v" << k + 1;
  os << '\n';
  for (const auto& ens : record.ensembles)
    for (Eigen::Index i = 0; i < ens.size(); ++i) {
      os << ens.t << ',' << i;
      for (Eigen::Index k = 0; k < d; ++k) os << ',' << ens.x(k, i);
      for (Eigen::Index k = 0; k < d; ++k) os << ',' << ens.v(k, i);
      os << '\n';
    }
}

void write_kinetic_csv(const KineticState& state, const std::string& file) {
  auto os = open_out(file);
  os << "x,v,f\n";
  const auto& g = state.grid;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) os << g.x(i) << ',' << g.v(j) << ',' << state.f(i, j) << '\n';
}

void write_series_binary(const MomentSeries& s, const std::string& file) {
  auto os = open_out(file, true);
  os.write("FLKM", 4);
  const std::uint32_t d = s.size() ? static_cast<std::uint32_t>(s.m1.front().size()) : 0;
  put<std::uint32_t>(os, 1);
  put<std::uint64_t>(os, s.size());
  put<std::uint32_t>(os, d);
  put<std::uint64_t>(os, s.path_seed);
  for (std::size_t k = 0; k < s.size(); ++k) {
    put(os, s.t[k]);
    put(os, s.m0[k]);
    for (std::uint32_t c = 0; c < d; ++c) put(os, s.m1[k][c]);
    put(os, s.m2[k]);
    put(os, s.e[k]);
    put(os, s.supp_x[k]);
    put(os, s.supp_v[k]);
    put(os, s.w[k]);
  }
}

MomentSeries read_series_binary(const std::string& file) {
  auto is = open_in(file, true);
  check_magic(is, "FLKM", file);
  if (get<std::uint32_t>(is) != 1) throw ShapeError(file + ": unsupported FLKM version");
  const auto n = get<std::uint64_t>(is);
  const auto d = get<std::uint32_t>(is);
  MomentSeries s;
  s.path_seed = get<std::uint64_t>(is);
  for (std::uint64_t k = 0; k < n; ++k) {
    Moments m;
    const double t = get<double>(is);
    m.m0 = get<double>(is);
    m.m1.resize(d);
    for (std::uint32_t c = 0; c < d; ++c) m.m1[c] = get<double>(is);
    m.m2 = get<double>(is);
    const double e = get<double>(is), sx = get<double>(is), sv = get<double>(is), w = get<double>(is);
    s.push(t, m, e, sx, sv, w);
  }
  return s;
}

void write_kinetic_binary(const KineticState& state, const std::string& file) {
  auto os = open_out(file, true);
  os.write("FLKG", 4);
  const auto& g = state.grid;
  put<std::uint32_t>(os, 1);
  put<std::int32_t>(os, g.nx);
  put<std::int32_t>(os, g.nv);
  put(os, g.x_min);
  put(os, g.x_max);
  put(os, g.v_min);
  put(os, g.v_max);
  put(os, state.t);
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) put(os, state.f(i, j));
}

KineticState read_kinetic_binary(const std::string& file) {
  auto is = open_in(file, true);
  check_magic(is, "FLKG", file);
  if (get<std::uint32_t>(is) != 1) throw ShapeError(file + ": unsupported FLKG version");
  const int nx = get<std::int32_t>(is), nv = get<std::int32_t>(is);
  const double x0 = get<double>(is), x1 = get<double>(is), v0 = get<double>(is), v1 = get<double>(is);
  KineticState s;
  s.grid = PhaseGrid::make(x0, x1, v0, v1, nx, nv);
  s.t = get<double>(is);
  s.f.resize(nx + 1, nv + 1);
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= nv; ++j) s.f(i, j) = get<double>(is);
  return s;
}

void write_svg_plot(const std::string& file, const std::string& title, const std::vector<PlotLine>& lines,
                    bool log_y) {
  const double W = 640, H = 400, L = 70, R = 160, Tm = 40, B = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const auto& l : lines)
    for (std::size_t k = 0; k < l.x.size() && k < l.y.size(); ++k) {
      if (log_y && !(l.y[k] > 0.0)) continue;
      xmin = std::min(xmin, l.x[k]);
      xmax = std::max(xmax, l.x[k]);
      ymin = std::min(ymin, ty(l.y[k]));
      ymax = std::max(ymax, ty(l.y[k]));
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - ymin) / (ymax - ymin) * (H - Tm - B); };

  auto os = open_out(file);
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + k * (xmax - xmin) / 4, yv = ymin + k * (ymax - ymin) / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-size=\"11\">" << xv
       << "</text>\n";
    const double ypix = H - B - k * (H - Tm - B) / 4;
    os << "<text x=\"" << L - 6 << "\" y=\"" << ypix + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
       << (log_y ? "1e" : "") << yv << "</text>\n";
  }
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& l = lines[n];
    const char* c = colors[n % 6];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\""
       << (l.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t k = 0; k < l.x.size() && k < l.y.size(); ++k) {
      if (log_y && !(l.y[k] > 0.0)) continue;
      os << px(l.x[k]) << ',' << py(l.y[k]) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 16 * (n + 1) << "\" font-size=\"12\" fill=\"" << c << "\">"
       << l.label << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace flock
