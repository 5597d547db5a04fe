#pragma once
// Structured grids, cell/face fields and the discrete calculus shared by every
// solver. Layout is marker-and-cell: scalars and densities live at cell
// centers, velocities and momenta at faces. Boundary faces are pinned to zero
// (no flux through the walls of the box).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace congest {

/// Raised on precondition violations (bad grids, mismatched fields, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thresholds used to interpret floating point densities.
struct DensityThresholds {
  /// Cells with rho >= 1 - saturation are treated as the set {rho = 1}.
  double saturation = 1e-6;
  /// Admissible overshoot for rho <= 1 checks.
  double constraint = 1e-8;
};

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

struct Axis {
  double lower = 0.0;
  double upper = 1.0;
  std::size_t cells = 2;

  double length() const { return upper - lower; }
  double h() const { return length() / static_cast<double>(cells); }
  double center(std::size_t i) const { return lower + (static_cast<double>(i) + 0.5) * h(); }
  double face(std::size_t i) const { return lower + static_cast<double>(i) * h(); }

  bool operator==(const Axis&) const = default;
};

/// Uniform rectangular grid in one or two dimensions.
class Grid {
 public:
  Grid() = default;

  static Grid build(std::span<const Interval> bounds, std::span<const std::size_t> cells) {
    if (bounds.empty() || bounds.size() > 2 || bounds.size() != cells.size()) {
      throw Error("build_grid: need one or two axes with matching cell counts");
    }
    Grid g;
    g.dim_ = static_cast<int>(bounds.size());
    for (int a = 0; a < g.dim_; ++a) {
      const auto& b = bounds[static_cast<std::size_t>(a)];
      const auto n = cells[static_cast<std::size_t>(a)];
      if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.upper > b.lower)) {
        throw Error("build_grid: axis " + std::to_string(a) + " has empty or inverted bounds");
      }
      if (n < 2) {
        throw Error("build_grid: axis " + std::to_string(a) + " needs at least 2 cells");
      }
      g.axes_[static_cast<std::size_t>(a)] = Axis{b.lower, b.upper, n};
    }
    if (g.dim_ == 1) g.axes_[1] = Axis{0.0, 1.0, 1};
    return g;
  }

  static Grid line(double lower, double upper, std::size_t cells) {
    const std::array<Interval, 1> b{Interval{lower, upper}};
    const std::array<std::size_t, 1> n{cells};
    return build(b, n);
  }

  static Grid rect(Interval x, Interval y, std::size_t nx, std::size_t ny) {
    const std::array<Interval, 2> b{x, y};
    const std::array<std::size_t, 2> n{nx, ny};
    return build(b, n);
  }

  int dim() const { return dim_; }
  const Axis& axis(int a) const { return axes_[static_cast<std::size_t>(a)]; }
  std::size_t nx() const { return axes_[0].cells; }
  std::size_t ny() const { return axes_[1].cells; }
  double h(int a) const { return axis(a).h(); }

  std::size_t cells() const { return nx() * ny(); }
  double cell_volume() const { return dim_ == 1 ? axes_[0].h() : axes_[0].h() * axes_[1].h(); }
  double measure() const {
    return dim_ == 1 ? axes_[0].length() : axes_[0].length() * axes_[1].length();
  }
  double diameter() const {
    return dim_ == 1 ? axes_[0].length() : std::hypot(axes_[0].length(), axes_[1].length());
  }

  std::size_t index(std::size_t i, std::size_t j = 0) const { return i + nx() * j; }
  std::size_t ix(std::size_t cell) const { return cell % nx(); }
  std::size_t iy(std::size_t cell) const { return cell / nx(); }

  std::array<double, 2> center(std::size_t cell) const {
    return {axes_[0].center(ix(cell)), dim_ == 2 ? axes_[1].center(iy(cell)) : 0.0};
  }

  /// Faces normal to axis a, boundary faces included.
  std::size_t faces(int a) const {
    if (a >= dim_) return 0;
    return a == 0 ? (nx() + 1) * ny() : nx() * (ny() + 1);
  }
  /// Face left of (axis 0) or below (axis 1) cell (i, j); i or j may equal n.
  std::size_t face_index(int a, std::size_t i, std::size_t j) const {
    return a == 0 ? i + (nx() + 1) * j : i + nx() * j;
  }
  bool is_boundary_face(int a, std::size_t f) const {
    if (a == 0) {
      const auto i = f % (nx() + 1);
      return i == 0 || i == nx();
    }
    const auto j = f / nx();
    return j == 0 || j == ny();
  }
  std::array<double, 2> face_center(int a, std::size_t f) const {
    if (a == 0) {
      const auto i = f % (nx() + 1), j = f / (nx() + 1);
      return {axes_[0].face(i), dim_ == 2 ? axes_[1].center(j) : 0.0};
    }
    const auto i = f % nx(), j = f / nx();
    return {axes_[0].center(i), axes_[1].face(j)};
  }
  /// Cells on either side of an interior face (lower, upper).
  std::array<std::size_t, 2> face_cells(int a, std::size_t f) const {
    if (a == 0) {
      const auto i = f % (nx() + 1), j = f / (nx() + 1);
      return {index(i - 1, j), index(i, j)};
    }
    const auto i = f % nx(), j = f / nx();
    return {index(i, j - 1), index(i, j)};
  }

  bool operator==(const Grid&) const = default;

 private:
  int dim_ = 1;
  std::array<Axis, 2> axes_{Axis{0.0, 1.0, 2}, Axis{0.0, 1.0, 1}};
};

/// Uniform time grid t_k = k * dt, k = 0..steps.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw Error("TimeGrid: horizon must be > 0");
    if (steps < 1) throw Error("TimeGrid: need at least one step");
  }
  double horizon() const { return horizon_; }
  std::size_t steps() const { return steps_; }
  std::size_t nodes() const { return steps_ + 1; }
  double dt() const { return horizon_ / static_cast<double>(steps_); }
  double t(std::size_t k) const { return k == steps_ ? horizon_ : static_cast<double>(k) * dt(); }

  bool operator==(const TimeGrid&) const = default;

 private:
  double horizon_ = 1.0;
  std::size_t steps_ = 1;
};

/// Cell-centered scalar: value function, pressure, potential, dual variable.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(Grid grid, double value = 0.0)
      : grid_(std::move(grid)), values_(grid_.cells(), value) {}
  ScalarField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.cells()) throw Error("ScalarField: value count does not match grid");
  }

  template <class F>
  static ScalarField sample(const Grid& grid, F&& f) {
    ScalarField out(grid);
    for (std::size_t c = 0; c < grid.cells(); ++c) {
      const auto x = grid.center(c);
      if constexpr (std::is_invocable_v<F, double>) {
        out.values_[c] = f(x[0]);
      } else {
        out.values_[c] = f(x[0], x[1]);
      }
    }
    return out;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t c) { return values_[c]; }
  double operator[](std::size_t c) const { return values_[c]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }
  bool finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  ScalarField& operator+=(const ScalarField& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
  friend ScalarField operator-(ScalarField a) { return a *= -1.0; }

  bool operator==(const ScalarField&) const = default;

 private:
  void check_same(const ScalarField& o) const {
    if (!(grid_ == o.grid_)) throw Error("ScalarField: grid mismatch");
  }

  Grid grid_;
  std::vector<double> values_;
};

/// Nonnegative cell-centered probability density.
class DensityField {
 public:
  DensityField() = default;

  /// Wraps values without renormalizing. Values must be finite and >= 0
  /// (tiny negative round-off is clamped).
  DensityField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.cells()) throw Error("DensityField: value count does not match grid");
    for (double& v : values_) {
      if (!std::isfinite(v)) throw Error("DensityField: non-finite value");
      if (v < 0.0) {
        if (v < -1e-12) throw Error("DensityField: negative density");
        v = 0.0;
      }
    }
  }

  /// Rescales to unit mass.
  static DensityField normalized(const Grid& grid, std::vector<double> values) {
    DensityField d(grid, std::move(values));
    const double m = d.mass();
    if (!(m > 0.0)) throw Error("DensityField: zero total mass");
    for (double& v : d.values_) v /= m;
    return d;
  }

  template <class F>
  static DensityField sample_normalized(const Grid& grid, F&& f) {
    const auto s = ScalarField::sample(grid, std::forward<F>(f));
    return normalized(grid, std::vector<double>(s.values().begin(), s.values().end()));
  }

  static DensityField uniform(const Grid& grid) {
    return DensityField(grid, std::vector<double>(grid.cells(), 1.0 / grid.measure()));
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t c) const { return values_[c]; }
  double& operator[](std::size_t c) { return values_[c]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double mass() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0) * grid_.cell_volume();
  }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }

  bool saturated(std::size_t c, const DensityThresholds& th = {}) const {
    return values_[c] >= 1.0 - th.saturation;
  }
  bool in_constraint_set(const DensityThresholds& th = {}) const { return max() <= 1.0 + th.constraint; }

  ScalarField as_scalar() const { return ScalarField(grid_, values_); }

  bool operator==(const DensityField&) const = default;

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Face-centered normal components, one array per axis. Boundary entries are
/// part of the storage but always zero.
class FaceField {
 public:
  FaceField() = default;
  explicit FaceField(Grid grid) : grid_(std::move(grid)) {
    for (int a = 0; a < grid_.dim(); ++a) comps_[static_cast<std::size_t>(a)].assign(grid_.faces(a), 0.0);
  }

  /// Samples f at interior face centers; f returns the axis-a component.
  template <class F>
  static FaceField sample(const Grid& grid, F&& f) {
    FaceField out(grid);
    for (int a = 0; a < grid.dim(); ++a) {
      for (std::size_t k = 0; k < grid.faces(a); ++k) {
        if (grid.is_boundary_face(a, k)) continue;
        const auto x = grid.face_center(a, k);
        out.comps_[static_cast<std::size_t>(a)][k] = f(a, x[0], x[1]);
      }
    }
    return out;
  }

  const Grid& grid() const { return grid_; }
  std::span<double> axis(int a) { return comps_[static_cast<std::size_t>(a)]; }
  std::span<const double> axis(int a) const { return comps_[static_cast<std::size_t>(a)]; }

  /// Zeroes boundary faces (restores the no-flux invariant).
  void enforce_no_flux() {
    for (int a = 0; a < grid_.dim(); ++a) {
      auto& c = comps_[static_cast<std::size_t>(a)];
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (grid_.is_boundary_face(a, k)) c[k] = 0.0;
      }
    }
  }
  bool boundary_is_zero() const {
    for (int a = 0; a < grid_.dim(); ++a) {
      const auto& c = comps_[static_cast<std::size_t>(a)];
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (grid_.is_boundary_face(a, k) && c[k] != 0.0) return false;
      }
    }
    return true;
  }
  bool finite() const {
    for (int a = 0; a < grid_.dim(); ++a) {
      for (double v : comps_[static_cast<std::size_t>(a)]) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }
  double max_abs(int a) const {
    double m = 0.0;
    for (double v : axis(a)) m = std::max(m, std::abs(v));
    return m;
  }
  double max_abs() const {
    double m = 0.0;
    for (int a = 0; a < grid_.dim(); ++a) m = std::max(m, max_abs(a));
    return m;
  }

  FaceField& operator+=(const FaceField& o) { return axpy(1.0, o); }
  FaceField& operator-=(const FaceField& o) { return axpy(-1.0, o); }
  FaceField& operator*=(double s) {
    for (int a = 0; a < grid_.dim(); ++a) {
      for (double& v : comps_[static_cast<std::size_t>(a)]) v *= s;
    }
    return *this;
  }
  FaceField& axpy(double s, const FaceField& o) {
    if (!(grid_ == o.grid_)) throw Error("FaceField: grid mismatch");
    for (int a = 0; a < grid_.dim(); ++a) {
      auto& c = comps_[static_cast<std::size_t>(a)];
      const auto& d = o.comps_[static_cast<std::size_t>(a)];
      for (std::size_t k = 0; k < c.size(); ++k) c[k] += s * d[k];
    }
    return *this;
  }
  friend FaceField operator+(FaceField a, const FaceField& b) { return a += b; }
  friend FaceField operator-(FaceField a, const FaceField& b) { return a -= b; }
  friend FaceField operator*(double s, FaceField a) { return a *= s; }

  bool operator==(const FaceField&) const = default;

 private:
  Grid grid_;
  std::array<std::vector<double>, 2> comps_;
};

/// One field per time node.
template <class Field>
struct SpaceTimeField {
  TimeGrid time;
  std::vector<Field> nodes;

  SpaceTimeField() = default;
  SpaceTimeField(TimeGrid tg, Field fill) : time(tg), nodes(tg.nodes(), std::move(fill)) {}

  std::size_t size() const { return nodes.size(); }
  Field& operator[](std::size_t k) { return nodes[k]; }
  const Field& operator[](std::size_t k) const { return nodes[k]; }
  const Grid& grid() const { return nodes.front().grid(); }

  bool consistent() const {
    if (nodes.size() != time.nodes()) return false;
    return std::all_of(nodes.begin(), nodes.end(), [&](const Field& f) { return f.grid() == grid(); });
  }
};

using DensityTrajectory = SpaceTimeField<DensityField>;
using ScalarTrajectory = SpaceTimeField<ScalarField>;
using FaceTrajectory = SpaceTimeField<FaceField>;

// ---------------------------------------------------------------------------
// Discrete calculus

/// Face value (f_upper - f_lower) / h on interior faces, zero on the boundary.
inline FaceField gradient(const ScalarField& f) {
  const Grid& g = f.grid();
  FaceField out(g);
  for (int a = 0; a < g.dim(); ++a) {
    auto c = out.axis(a);
    const double inv_h = 1.0 / g.h(a);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (g.is_boundary_face(a, k)) continue;
      const auto [lo, hi] = g.face_cells(a, k);
      c[k] = (f[hi] - f[lo]) * inv_h;
    }
  }
  return out;
}

/// Sum over axes of (v_upper_face - v_lower_face) / h. Equals -gradient^T
/// under the cell-volume weighted inner products.
inline ScalarField divergence(const FaceField& v) {
  const Grid& g = v.grid();
  ScalarField out(g);
  for (std::size_t j = 0; j < g.ny(); ++j) {
    for (std::size_t i = 0; i < g.nx(); ++i) {
      const auto c = g.index(i, j);
      const auto vx = v.axis(0);
      double d = (vx[g.face_index(0, i + 1, j)] - vx[g.face_index(0, i, j)]) / g.h(0);
      if (g.dim() == 2) {
        const auto vy = v.axis(1);
        d += (vy[g.face_index(1, i, j + 1)] - vy[g.face_index(1, i, j)]) / g.h(1);
      }
      out[c] = d;
    }
  }
  return out;
}

/// Cell-volume weighted inner product of face fields.
inline double inner(const FaceField& u, const FaceField& v) {
  if (!(u.grid() == v.grid())) throw Error("inner: grid mismatch");
  double s = 0.0;
  for (int a = 0; a < u.grid().dim(); ++a) {
    const auto x = u.axis(a), y = v.axis(a);
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  }
  return s * u.grid().cell_volume();
}

inline double inner(const ScalarField& f, const ScalarField& g) {
  if (!(f.grid() == g.grid())) throw Error("inner: grid mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) s += f[c] * g[c];
  return s * f.grid().cell_volume();
}

inline double norm(const FaceField& u) { return std::sqrt(inner(u, u)); }
inline double norm(const ScalarField& f) { return std::sqrt(inner(f, f)); }

/// Sum f_i rho_i vol.
inline double integrate(const ScalarField& f, const DensityField& rho) {
  if (!(f.grid() == rho.grid())) throw Error("integrate: grid mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) s += f[c] * rho[c];
  return s * f.grid().cell_volume();
}

/// Sum f_i vol.
inline double integrate(const ScalarField& f) {
  double s = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) s += f[c];
  return s * f.grid().cell_volume();
}

inline double l1_distance(const DensityField& a, const DensityField& b) {
  if (!(a.grid() == b.grid())) throw Error("l1_distance: grid mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += std::abs(a[c] - b[c]);
  return s * a.grid().cell_volume();
}

inline double sup_distance(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid() == b.grid())) throw Error("sup_distance: grid mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s = std::max(s, std::abs(a[c] - b[c]));
  return s;
}

}  // namespace congest
