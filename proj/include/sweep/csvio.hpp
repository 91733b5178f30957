#pragma once

#include "sweep/controls.hpp"
#include "sweep/dynamics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sweep {

/// Decimal text with 17 significant digits: exceeds the 12-digit file
/// contract and round-trips doubles exactly (atom times must survive a
/// write/read cycle bit-for-bit).
inline std::string fmt_sig(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Writes via a temp file in the same directory and renames into place.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw ParseError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Trajectory CSV: header t,x1..xn,u1..um,xi; one row per grid node.
inline std::string trajectory_csv(const Trajectory& traj, const GridControl& u) {
  const int n = static_cast<int>(traj.states.front().size());
  const int m = u.dim();
  std::ostringstream os;
  os << "t";
  for (int j = 1; j <= n; ++j) os << ",x" << j;
  for (int j = 1; j <= m; ++j) os << ",u" << j;
  os << ",xi\n";
  for (std::size_t i = 0; i < traj.grid.size(); ++i) {
    os << fmt_sig(traj.grid[i]);
    for (int j = 0; j < n; ++j) os << ',' << fmt_sig(traj.states[i](j));
    for (int j = 0; j < m; ++j) os << ',' << fmt_sig(u.values[i](j));
    os << ',' << fmt_sig(traj.xi[i]) << '\n';
  }
  return os.str();
}

inline std::string control_csv(const GridControl& u) {
  const int m = u.dim();
  std::ostringstream os;
  os << "t";
  for (int j = 1; j <= m; ++j) os << ",u" << j;
  os << '\n';
  for (std::size_t i = 0; i < u.grid.size(); ++i) {
    os << fmt_sig(u.grid[i]);
    for (int j = 0; j < m; ++j) os << ',' << fmt_sig(u.values[i](j));
    os << '\n';
  }
  return os.str();
}

/// A generic numeric table with a comma-separated header line.
inline std::string table_csv(const std::string& header, const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  os << header << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << fmt_sig(r[i]);
    os << '\n';
  }
  return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ParseError(ctx + ": trailing characters in '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw ParseError(ctx + ": not a number: '" + s + "'");
  } catch (const std::out_of_range&) {
    throw ParseError(ctx + ": out of range: '" + s + "'");
  }
}

}  // namespace detail

struct TrajectoryFile {
  Grid grid;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<double> xi;
};

inline TrajectoryFile read_trajectory_csv(const std::filesystem::path& path, int n, int m) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto header = detail::split_csv_line(line);
  const std::size_t want = 1 + static_cast<std::size_t>(n) + static_cast<std::size_t>(m) + 1;
  if (header.size() != want || header.front() != "t" || header.back() != "xi")
    throw ParseError(path.string() + ": unexpected trajectory header");
  TrajectoryFile tf;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != want)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    tf.grid.push_back(detail::parse_double(cells[0], ctx));
    Vec x(n), u(m);
    for (int j = 0; j < n; ++j) x(j) = detail::parse_double(cells[static_cast<std::size_t>(1 + j)], ctx);
    for (int j = 0; j < m; ++j)
      u(j) = detail::parse_double(cells[static_cast<std::size_t>(1 + n + j)], ctx);
    tf.states.push_back(x);
    tf.controls.push_back(u);
    tf.xi.push_back(detail::parse_double(cells.back(), ctx));
  }
  if (tf.grid.size() < 2) throw ParseError(path.string() + ": fewer than two rows");
  for (std::size_t i = 0; i + 1 < tf.grid.size(); ++i)
    if (!(tf.grid[i + 1] > tf.grid[i])) throw ParseError(path.string() + ": times not increasing");
  return tf;
}

inline GridControl read_control_csv(const std::filesystem::path& path, int m) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 1 + static_cast<std::size_t>(m) || header.front() != "t")
    throw ParseError(path.string() + ": unexpected control header");
  GridControl u;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 1 + static_cast<std::size_t>(m))
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    u.grid.push_back(detail::parse_double(cells[0], ctx));
    Vec v(m);
    for (int j = 0; j < m; ++j) v(j) = detail::parse_double(cells[static_cast<std::size_t>(1 + j)], ctx);
    u.values.push_back(v);
  }
  if (u.grid.size() < 2) throw ParseError(path.string() + ": fewer than two rows");
  return u;
}

}  // namespace sweep
