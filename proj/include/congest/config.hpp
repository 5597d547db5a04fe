#pragma once
// Scenario configuration: a single JSON document (schema_version 1).
//
//   {
//     "schema_version": 1,
//     "seed": 7,
//     "output": "runs/example",
//     "grid": {"x": [0, 2], "cells": 200},          (2D: "y": [..], "cells": [nx, ny])
//     "time": {"horizon": 1, "steps": 200},
//     "potential": {"family": "cone", "center": [1]},
//     "initial": {"kind": "superlevel"},
//     "solver": {...},
//     "checks": {"stationarity": 0.1, ...}
//   }
//
// "potential" is the terminal payoff Phi for the MFG and variational runs
// and the driving potential D for the gradient-flow runs. Validation errors
// name the offending field by its JSON pointer.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "congest/grid.hpp"
#include "congest/scenarios.hpp"

namespace congest {

using json = nlohmann::json;

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error("config " + (path.empty() ? std::string("/") : path) + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline constexpr int kSchemaVersion = 1;

struct GridSpec {
  Interval x{0.0, 1.0};
  std::optional<Interval> y;
  std::size_t nx = 0, ny = 0;

  Grid build() const { return y ? Grid::rect(x, *y, nx, ny) : Grid::line(x.lower, x.upper, nx); }
};

struct TimeSpec {
  double horizon = 1.0;
  std::size_t steps = 1;
  TimeGrid build() const { return TimeGrid(horizon, steps); }
};

struct PotentialSpec {
  std::string family = "constant";
  std::vector<double> center{0.0, 0.0};
  double value = 0.0;                   // constant
  double slope = 0.0, offset = 0.0;     // linear, wall_well
  double depth = 0.0, k = 1.0;          // quadratic_well
  double a = 0.0, b = 1.0, scale = 1.0; // double_well
  double half_width = 0.0;              // wall_well
  std::vector<double> values;           // sampled
};

struct InitialSpec {
  std::string kind = "uniform";
  std::vector<double> lower, upper;  // indicator box
  std::vector<double> center{0.0, 0.0};
  double width = 0.5;                // bump half-width, gaussian sigma
  std::vector<double> values;        // sampled
};

struct JkoSpec {
  std::string mode = "constrained";
  double tau = 1e-2;
  std::size_t steps = 100;
  double tolerance = 1e-14;
  std::size_t samples = 0;
};

struct BbSpec {
  std::size_t iterations = 5000;
  double gap_tolerance = 1e-6;
  double feasibility_tolerance = 1e-6;
  double step_ratio = 1.0;
};

struct SolverSpec {
  std::size_t iterations = 200;
  double tolerance = 1e-8;
  double damping = 0.0;
  double m = 2.0;
  std::string coupling = "synchronous";
  bool project = true;
  JkoSpec jko;
  BbSpec bb;
  std::vector<double> m_values{2.0, 4.0, 8.0, 16.0};
  std::size_t exploitability_samples = 20;
  std::size_t controls = 801;
  bool pme_reference = false;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::string output;
  GridSpec grid;
  TimeSpec time;
  PotentialSpec potential;
  InitialSpec initial;
  SolverSpec solver;
  std::map<std::string, double> checks;  ///< selected checks and thresholds (empty: defaults)
};

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  // Every key must be consumed; call last.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const auto& k : seen_) known = known || k == it.key();
      if (!known) throw ConfigError(path_ + "/" + it.key(), "unknown field");
    }
  }

  bool has(const std::string& key) {
    seen_.push_back(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    if (!has(key)) throw ConfigError(path_ + "/" + key, "missing required field");
    return j_.at(key);
  }
  std::string path(const std::string& key) const { return path_ + "/" + key; }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(path(key), "missing required field");
    }
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path(key), "must be finite");
    return d;
  }
  double positive(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const double d = number(key, fallback);
    if (!(d > 0.0)) throw ConfigError(path(key), "must be > 0");
    return d;
  }
  std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(path(key), "missing required field");
    }
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path(key), "expected a nonnegative integer");
    return v.get<std::size_t>();
  }
  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(path(key), "missing required field");
    }
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    return v.get<std::string>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    return v.get<bool>();
  }
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(path(key), "missing required field");
    }
    const json& v = j_.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw ConfigError(path(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(path(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
      if (!std::isfinite(out.back())) throw ConfigError(path(key) + "/" + std::to_string(i), "must be finite");
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline Interval read_interval(ObjectReader& r, const std::string& key) {
  const std::vector<double> v = r.numbers(key);
  if (v.size() != 2 || !(v[1] > v[0])) throw ConfigError(r.path(key), "expected [lower, upper] with lower < upper");
  return {v[0], v[1]};
}

inline GridSpec parse_grid(const json& j) {
  ObjectReader r(j, "/grid");
  GridSpec g;
  g.x = read_interval(r, "x");
  if (r.has("y")) g.y = read_interval(r, "y");
  const json& cells = r.at("cells");
  if (g.y) {
    if (!cells.is_array() || cells.size() != 2 || !cells[0].is_number_integer() || !cells[1].is_number_integer()) {
      throw ConfigError("/grid/cells", "expected [nx, ny] for a 2D grid");
    }
    const long long nx = cells[0].get<long long>(), ny = cells[1].get<long long>();
    if (nx < 2 || ny < 2) throw ConfigError("/grid/cells", "need at least 2 cells per axis");
    g.nx = static_cast<std::size_t>(nx);
    g.ny = static_cast<std::size_t>(ny);
  } else {
    if (!cells.is_number_integer() || cells.get<long long>() < 2) {
      throw ConfigError("/grid/cells", "expected an integer >= 2");
    }
    g.nx = cells.get<std::size_t>();
    g.ny = 1;
  }
  r.finish();
  return g;
}

inline TimeSpec parse_time(const json& j) {
  ObjectReader r(j, "/time");
  TimeSpec t;
  t.horizon = r.positive("horizon");
  t.steps = r.count("steps");
  if (t.steps < 1) throw ConfigError("/time/steps", "need at least one step");
  r.finish();
  return t;
}

inline std::vector<double> read_center(ObjectReader& r, int dim) {
  std::vector<double> c = r.numbers("center", std::vector<double>{0.0, 0.0});
  if (static_cast<int>(c.size()) < dim) throw ConfigError(r.path("center"), "needs one coordinate per axis");
  c.resize(2, 0.0);
  return c;
}

inline PotentialSpec parse_potential(const json& j, int dim, std::size_t cells) {
  ObjectReader r(j, "/potential");
  PotentialSpec p;
  p.family = r.string("family");
  if (p.family == "constant") {
    p.value = r.number("value", 0.0);
  } else if (p.family == "linear") {
    p.slope = r.number("slope");
    p.offset = r.number("offset", 0.0);
  } else if (p.family == "cone" || p.family == "radial_cone") {
    p.center = read_center(r, dim);
    if (p.family == "radial_cone" && dim != 2) throw ConfigError("/potential/family", "radial_cone needs a 2D grid");
  } else if (p.family == "quadratic_well") {
    p.center = read_center(r, dim);
    p.depth = r.number("depth", 0.0);
    p.k = r.number("k", 1.0);
  } else if (p.family == "double_well") {
    if (dim != 1) throw ConfigError("/potential/family", "double_well is one-dimensional");
    p.a = r.number("a");
    p.b = r.number("b");
    p.scale = r.positive("scale", 1.0);
  } else if (p.family == "wall_well") {
    if (dim != 1) throw ConfigError("/potential/family", "wall_well is one-dimensional");
    p.center = read_center(r, dim);
    p.half_width = r.number("half_width");
    p.slope = r.positive("slope");
    if (p.half_width < 0.0) throw ConfigError("/potential/half_width", "must be >= 0");
  } else if (p.family == "sampled") {
    p.values = r.numbers("values");
    if (p.values.size() != cells) {
      throw ConfigError("/potential/values", "expected " + std::to_string(cells) + " values (one per cell)");
    }
  } else {
    throw ConfigError("/potential/family", "unknown family '" + p.family +
                                               "' (constant, linear, cone, radial_cone, quadratic_well, "
                                               "double_well, wall_well, sampled)");
  }
  r.finish();
  return p;
}

inline InitialSpec parse_initial(const json& j, int dim, std::size_t cells) {
  ObjectReader r(j, "/initial");
  InitialSpec s;
  s.kind = r.string("kind");
  if (s.kind == "uniform" || s.kind == "superlevel") {
  } else if (s.kind == "indicator") {
    s.lower = r.numbers("lower");
    s.upper = r.numbers("upper");
    if (static_cast<int>(s.lower.size()) != dim || static_cast<int>(s.upper.size()) != dim) {
      throw ConfigError("/initial", "lower and upper need one coordinate per axis");
    }
    for (int a = 0; a < dim; ++a) {
      if (!(s.upper[static_cast<std::size_t>(a)] > s.lower[static_cast<std::size_t>(a)])) {
        throw ConfigError("/initial/upper", "must exceed lower");
      }
    }
  } else if (s.kind == "bump" || s.kind == "gaussian") {
    s.center = read_center(r, dim);
    s.width = r.positive("width");
  } else if (s.kind == "sampled") {
    s.values = r.numbers("values");
    if (s.values.size() != cells) {
      throw ConfigError("/initial/values", "expected " + std::to_string(cells) + " values (one per cell)");
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (s.values[i] < 0.0) throw ConfigError("/initial/values/" + std::to_string(i), "must be >= 0");
    }
  } else {
    throw ConfigError("/initial/kind",
                      "unknown kind '" + s.kind + "' (uniform, superlevel, indicator, bump, gaussian, sampled)");
  }
  r.finish();
  return s;
}

inline SolverSpec parse_solver(const json& j) {
  ObjectReader r(j, "/solver");
  SolverSpec s;
  s.iterations = r.count("iterations", s.iterations);
  s.tolerance = r.positive("tolerance", s.tolerance);
  s.damping = r.number("damping", s.damping);
  if (s.damping < 0.0 || s.damping > 1.0) throw ConfigError("/solver/damping", "must lie in [0, 1]");
  s.m = r.number("m", s.m);
  if (!(s.m >= 2.0)) throw ConfigError("/solver/m", "must be >= 2");
  s.coupling = r.string("coupling", s.coupling);
  if (s.coupling != "synchronous" && s.coupling != "lagged") {
    throw ConfigError("/solver/coupling", "expected 'synchronous' or 'lagged'");
  }
  s.project = r.boolean("project", s.project);
  s.exploitability_samples = r.count("exploitability_samples", s.exploitability_samples);
  s.controls = r.count("controls", s.controls);
  if (s.controls < 3) throw ConfigError("/solver/controls", "need at least 3 controls");
  s.pme_reference = r.boolean("pme_reference", s.pme_reference);
  s.m_values = r.numbers("m_values", s.m_values);
  for (std::size_t i = 0; i < s.m_values.size(); ++i) {
    if (!(s.m_values[i] >= 2.0)) throw ConfigError("/solver/m_values/" + std::to_string(i), "must be >= 2");
  }
  if (r.has("jko")) {
    ObjectReader q(r.at("jko"), "/solver/jko");
    s.jko.mode = q.string("mode", s.jko.mode);
    if (s.jko.mode != "constrained" && s.jko.mode != "penalized") {
      throw ConfigError("/solver/jko/mode", "expected 'constrained' or 'penalized'");
    }
    s.jko.tau = q.positive("tau", s.jko.tau);
    s.jko.steps = q.count("steps", s.jko.steps);
    if (s.jko.steps < 1) throw ConfigError("/solver/jko/steps", "need at least one step");
    s.jko.tolerance = q.positive("tolerance", s.jko.tolerance);
    s.jko.samples = q.count("samples", s.jko.samples);
    q.finish();
  }
  if (r.has("bb")) {
    ObjectReader q(r.at("bb"), "/solver/bb");
    s.bb.iterations = q.count("iterations", s.bb.iterations);
    s.bb.gap_tolerance = q.positive("gap_tolerance", s.bb.gap_tolerance);
    s.bb.feasibility_tolerance = q.positive("feasibility_tolerance", s.bb.feasibility_tolerance);
    s.bb.step_ratio = q.positive("step_ratio", s.bb.step_ratio);
    q.finish();
  }
  r.finish();
  return s;
}

}  // namespace detail

/// Parses and validates a configuration document.
inline ScenarioConfig parse_config(const json& j) {
  detail::ObjectReader r(j, "");
  ScenarioConfig cfg;
  if (!r.has("schema_version")) throw ConfigError("/schema_version", "missing required field");
  const json& ver = j.at("schema_version");
  if (!ver.is_number_integer() || ver.get<int>() != kSchemaVersion) {
    throw ConfigError("/schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (r.has("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("/seed", "expected a nonnegative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  cfg.output = r.string("output", "");
  cfg.grid = detail::parse_grid(r.at("grid"));
  cfg.time = detail::parse_time(r.at("time"));
  const int dim = cfg.grid.y ? 2 : 1;
  const std::size_t cells = cfg.grid.nx * cfg.grid.ny;
  cfg.potential = detail::parse_potential(r.at("potential"), dim, cells);
  cfg.initial = detail::parse_initial(r.at("initial"), dim, cells);
  cfg.solver = r.has("solver") ? detail::parse_solver(j.at("solver")) : SolverSpec{};
  if (r.has("checks")) {
    detail::ObjectReader c(j.at("checks"), "/checks");
    for (auto it = j.at("checks").begin(); it != j.at("checks").end(); ++it) {
      const double thr = c.number(it.key());
      cfg.checks[it.key()] = thr;
    }
    c.finish();
  }
  r.finish();
  return cfg;
}

inline ScenarioConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Potential field on the grid.
inline ScalarField build_potential(const PotentialSpec& p, const Grid& g) {
  const double cx = p.center[0], cy = p.center[1];
  if (p.family == "constant") return ScalarField(g, p.value);
  if (p.family == "linear") return ScalarField::sample(g, [&](double x) { return p.offset + p.slope * x; });
  if (p.family == "cone" || p.family == "radial_cone") return cone_potential(g, cx, cy);
  if (p.family == "quadratic_well") return quadratic_well(g, p.depth, p.k, cx, cy);
  if (p.family == "double_well") return double_well(g, p.a, p.b, p.scale);
  if (p.family == "wall_well") {
    return ScalarField::sample(g, [&](double x) { return p.slope * std::max(0.0, std::abs(x - cx) - p.half_width); });
  }
  if (p.family == "sampled") return ScalarField(g, p.values);
  throw Error("build_potential: unknown family " + p.family);
}

/// Initial density; "superlevel" needs the potential (rho0 = 1_A with
/// A = {Phi > l}, |A| = 1).
inline DensityField build_initial(const InitialSpec& s, const Grid& g, const ScalarField& potential) {
  const double cx = s.center[0], cy = s.center[1];
  if (s.kind == "uniform") return DensityField::uniform(g);
  if (s.kind == "superlevel") return build_nothing_moves(potential).rho0;
  if (s.kind == "indicator") {
    return DensityField::sample_normalized(g, [&](double x, double y) {
      bool in = x > s.lower[0] && x < s.upper[0];
      if (g.dim() == 2) in = in && y > s.lower[1] && y < s.upper[1];
      return in ? 1.0 : 0.0;
    });
  }
  if (s.kind == "bump") {
    return DensityField::sample_normalized(g, [&](double x, double y) {
      const double r = (g.dim() == 2 ? std::hypot(x - cx, y - cy) : std::abs(x - cx)) / s.width;
      return r < 1.0 ? std::pow(std::cos(0.5 * std::numbers::pi * r), 2) : 0.0;
    });
  }
  if (s.kind == "gaussian") {
    return DensityField::sample_normalized(g, [&](double x, double y) {
      const double r2 = (x - cx) * (x - cx) + (g.dim() == 2 ? (y - cy) * (y - cy) : 0.0);
      return std::exp(-0.5 * r2 / (s.width * s.width));
    });
  }
  if (s.kind == "sampled") return DensityField::normalized(g, s.values);
  throw Error("build_initial: unknown kind " + s.kind);
}

}  // namespace congest
