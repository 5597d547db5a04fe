#pragma once
// Long-format CSV for fields: one row per (time node, cell) with columns
// t, x[, y], value. Values are printed with 17 significant digits, so a
// field read back is bit-identical to the one written.

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "congest/grid.hpp"

namespace congest {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error("csv: no column '" + name + "'");
  }
};

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path);
  if (!out) throw Error("csv: cannot open " + path + " for writing");
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  if (!out) throw Error("csv: write failed for " + path);
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("csv: cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: empty file " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      // strtod rather than stod: subnormal values set ERANGE but parse fine.
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || std::isspace(static_cast<unsigned char>(cell[0]))) {
        throw Error("csv: " + path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != t.header.size()) {
      throw Error("csv: " + path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                  " columns");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace detail {

inline std::vector<std::string> coordinate_header(const Grid& g) {
  return g.dim() == 1 ? std::vector<std::string>{"t", "x", "value"} : std::vector<std::string>{"t", "x", "y", "value"};
}

template <class Field>
void append_cells(CsvTable& t, double time, const Field& f) {
  const Grid& g = f.grid();
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const auto x = g.center(c);
    if (g.dim() == 1) t.rows.push_back({time, x[0], f[c]});
    else t.rows.push_back({time, x[0], x[1], f[c]});
  }
}

inline void append_faces(CsvTable& t, double time, const FaceField& f, int a) {
  const Grid& g = f.grid();
  const auto comp = f.axis(a);
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const auto x = g.face_center(a, i);
    if (g.dim() == 1) t.rows.push_back({time, x[0], comp[i]});
    else t.rows.push_back({time, x[0], x[1], comp[i]});
  }
}

// Checks that the coordinate columns of `row` match the expected position.
inline void check_position(const std::vector<double>& row, double time, const std::array<double, 2>& x, int dim,
                           const std::string& what) {
  const double tol = 1e-12 * (1.0 + std::abs(x[0]) + std::abs(x[1]) + std::abs(time));
  bool ok = std::abs(row[0] - time) <= tol && std::abs(row[1] - x[0]) <= tol;
  if (dim == 2) ok = ok && std::abs(row[2] - x[1]) <= tol;
  if (!ok) throw Error("csv: " + what + ": row does not match the grid layout");
}

}  // namespace detail

/// Cell field at a single time stamp.
template <class Field>
CsvTable field_table(const Field& f, double time) {
  CsvTable t{detail::coordinate_header(f.grid()), {}};
  detail::append_cells(t, time, f);
  return t;
}

/// Cell trajectory at explicit time stamps (the nodes of the time grid by
/// default).
template <class Field>
CsvTable trajectory_table(const SpaceTimeField<Field>& traj) {
  CsvTable t{detail::coordinate_header(traj.grid()), {}};
  for (std::size_t k = 0; k < traj.size(); ++k) detail::append_cells(t, traj.time.t(k), traj[k]);
  return t;
}

template <class Field>
CsvTable sequence_table(const std::vector<Field>& fields, const std::vector<double>& times) {
  if (fields.empty() || fields.size() != times.size()) throw Error("csv: need one time stamp per field");
  CsvTable t{detail::coordinate_header(fields.front().grid()), {}};
  for (std::size_t k = 0; k < fields.size(); ++k) detail::append_cells(t, times[k], fields[k]);
  return t;
}

/// One component of a face trajectory, at face centers.
inline CsvTable face_table(const std::vector<FaceField>& fields, const std::vector<double>& times, int a) {
  if (fields.empty() || fields.size() != times.size()) throw Error("csv: need one time stamp per field");
  CsvTable t{detail::coordinate_header(fields.front().grid()), {}};
  for (std::size_t k = 0; k < fields.size(); ++k) detail::append_faces(t, times[k], fields[k], a);
  return t;
}

inline CsvTable face_table(const FaceTrajectory& traj, int a) {
  std::vector<double> times;
  for (std::size_t k = 0; k < traj.size(); ++k) times.push_back(traj.time.t(k));
  return face_table(traj.nodes, times, a);
}

/// Values of a cell table, one vector per time block, checked against the
/// grid and the expected time stamps.
inline std::vector<std::vector<double>> cell_blocks(const CsvTable& t, const Grid& g, const std::vector<double>& times,
                                                    const std::string& what) {
  const std::size_t cells = g.cells();
  if (t.rows.size() != cells * times.size()) throw Error("csv: " + what + ": wrong number of rows");
  const std::size_t vcol = t.column("value");
  std::vector<std::vector<double>> out(times.size(), std::vector<double>(cells));
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t c = 0; c < cells; ++c) {
      const auto& row = t.rows[k * cells + c];
      detail::check_position(row, times[k], g.center(c), g.dim(), what);
      out[k][c] = row[vcol];
    }
  }
  return out;
}

inline std::vector<double> node_times(const TimeGrid& tg) {
  std::vector<double> out;
  for (std::size_t k = 0; k < tg.nodes(); ++k) out.push_back(tg.t(k));
  return out;
}

inline ScalarTrajectory read_scalar_trajectory(const std::string& path, const Grid& g, const TimeGrid& tg) {
  const auto blocks = cell_blocks(read_csv(path), g, node_times(tg), path);
  ScalarTrajectory out(tg, ScalarField(g));
  for (std::size_t k = 0; k < blocks.size(); ++k) out[k] = ScalarField(g, blocks[k]);
  return out;
}

inline DensityTrajectory read_density_trajectory(const std::string& path, const Grid& g, const TimeGrid& tg) {
  const auto blocks = cell_blocks(read_csv(path), g, node_times(tg), path);
  DensityTrajectory out(tg, DensityField::uniform(g));
  for (std::size_t k = 0; k < blocks.size(); ++k) out[k] = DensityField(g, blocks[k]);
  return out;
}

inline ScalarField read_scalar_field(const std::string& path, const Grid& g, double time) {
  return ScalarField(g, cell_blocks(read_csv(path), g, {time}, path).front());
}

/// Face trajectory from one file per axis (`paths[a]`).
inline FaceTrajectory read_face_trajectory(const std::vector<std::string>& paths, const Grid& g, const TimeGrid& tg) {
  if (paths.size() != static_cast<std::size_t>(g.dim())) throw Error("csv: need one face file per axis");
  FaceTrajectory out(tg, FaceField(g));
  for (int a = 0; a < g.dim(); ++a) {
    const CsvTable t = read_csv(paths[static_cast<std::size_t>(a)]);
    const std::size_t nf = g.faces(a);
    if (t.rows.size() != nf * tg.nodes()) throw Error("csv: " + paths[static_cast<std::size_t>(a)] + ": wrong number of rows");
    const std::size_t vcol = t.column("value");
    for (std::size_t k = 0; k < tg.nodes(); ++k) {
      auto comp = out[k].axis(a);
      for (std::size_t f = 0; f < nf; ++f) {
        const auto& row = t.rows[k * nf + f];
        detail::check_position(row, tg.t(k), g.face_center(a, f), g.dim(), paths[static_cast<std::size_t>(a)]);
        comp[f] = row[vcol];
      }
    }
  }
  return out;
}

}  // namespace congest
