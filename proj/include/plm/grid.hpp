#pragma once

// Cartesian grids on an axis-aligned box (1D or 2D), nodal fields and
// space-time fields.  Dirichlet boundary nodes are the outermost layer.
//
// Gradients are sampled per cell: in 1D one forward difference per cell,
// in 2D the bilinear element gradient evaluated at each of the four cell
// corners (trapezoidal quadrature).  Summation against these samples is the
// discrete integral used everywhere, so discrete integration by parts is
// exact for the energies assembled in the solver.

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace plm {

struct Grid {
  int dim = 1;                       // 1 or 2
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 0.0};
  int nx = 2;                        // node count along x (>= 2)
  int ny = 1;                        // node count along y (1 in 1D)
  double T = 1.0;                    // time horizon
  int nt = 1;                        // number of time steps

  static Grid interval(double a, double b, int nodes, double T, int steps) {
    Grid g;
    g.dim = 1;
    g.lo = {a, 0.0};
    g.hi = {b, 0.0};
    g.nx = nodes;
    g.ny = 1;
    g.T = T;
    g.nt = steps;
    g.validate();
    return g;
  }
  static Grid box(double ax, double bx, double ay, double by, int nodes_x, int nodes_y,
                  double T, int steps) {
    Grid g;
    g.dim = 2;
    g.lo = {ax, ay};
    g.hi = {bx, by};
    g.nx = nodes_x;
    g.ny = nodes_y;
    g.T = T;
    g.nt = steps;
    g.validate();
    return g;
  }

  void validate() const {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid: dim must be 1 or 2");
    if (nx < 2 || (dim == 2 && ny < 2)) throw std::invalid_argument("grid: too few nodes");
    if (T <= 0 || nt < 1) throw std::invalid_argument("grid: bad time axis");
    if (hi[0] <= lo[0] || (dim == 2 && hi[1] <= lo[1]))
      throw std::invalid_argument("grid: empty box");
  }

  double hx() const { return (hi[0] - lo[0]) / (nx - 1); }
  double hy() const { return dim == 2 ? (hi[1] - lo[1]) / (ny - 1) : 1.0; }
  double h() const { return dim == 2 ? std::max(hx(), hy()) : hx(); }
  double dt() const { return T / nt; }
  double cell_volume() const { return dim == 2 ? hx() * hy() : hx(); }
  int nodes() const { return nx * ny; }
  int id(int i, int j = 0) const { return i + nx * j; }
  double x(int i) const { return lo[0] + i * hx(); }
  double y(int j) const { return dim == 2 ? lo[1] + j * hy() : 0.0; }
  std::array<double, 2> point(int i, int j = 0) const { return {x(i), y(j)}; }

  bool boundary(int i, int j = 0) const {
    if (i == 0 || i == nx - 1) return true;
    if (dim == 2 && (j == 0 || j == ny - 1)) return true;
    return false;
  }
  bool boundary_id(int n) const { return boundary(n % nx, n / nx); }

  double diameter() const {
    const double dx = hi[0] - lo[0];
    const double dy = dim == 2 ? hi[1] - lo[1] : 0.0;
    return std::sqrt(dx * dx + dy * dy);
  }
};

using Field = std::vector<double>;  // nodal values, size grid.nodes()

inline Field zero_field(const Grid& g) { return Field(g.nodes(), 0.0); }

inline Field sample_field(const Grid& g, const std::function<double(double, double)>& f) {
  Field u(g.nodes());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) u[g.id(i, j)] = f(g.x(i), g.y(j));
  return u;
}

// One gradient quadrature sample: gradient components, the nodal value at the
// sample location and the quadrature volume.
struct GradientSample {
  double gx = 0.0, gy = 0.0;
  double u = 0.0;    // value at the sample node
  double vol = 0.0;  // spatial quadrature weight
};

// Visits every gradient sample of a spatial field.
template <typename Fn>
void for_each_gradient_sample(const Grid& g, const Field& u, Fn&& fn) {
  const double hx = g.hx();
  if (g.dim == 1) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      GradientSample s;
      s.gx = (u[i + 1] - u[i]) / hx;
      s.vol = hx / 2.0;
      s.u = u[i];
      fn(s);
      s.u = u[i + 1];
      fn(s);
    }
    return;
  }
  const double hy = g.hy();
  const double w = hx * hy / 4.0;
  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      const double u00 = u[g.id(i, j)], u10 = u[g.id(i + 1, j)];
      const double u01 = u[g.id(i, j + 1)], u11 = u[g.id(i + 1, j + 1)];
      GradientSample s;
      s.vol = w;
      s.gx = (u10 - u00) / hx;
      s.gy = (u01 - u00) / hy;
      s.u = u00;
      fn(s);
      s.gx = (u10 - u00) / hx;
      s.gy = (u11 - u10) / hy;
      s.u = u10;
      fn(s);
      s.gx = (u11 - u01) / hx;
      s.gy = (u01 - u00) / hy;
      s.u = u01;
      fn(s);
      s.gx = (u11 - u01) / hx;
      s.gy = (u11 - u10) / hy;
      s.u = u11;
      fn(s);
    }
  }
}

inline double l1_norm(const Grid& g, const Field& u) {
  double s = 0.0;
  for (double v : u) s += std::fabs(v);
  return s * g.cell_volume();
}

inline double lp_norm(const Grid& g, const Field& u, double p) {
  double s = 0.0;
  for (double v : u) s += std::pow(std::fabs(v), p);
  return std::pow(s * g.cell_volume(), 1.0 / p);
}

inline double linf_norm(const Field& u) {
  double s = 0.0;
  for (double v : u) s = std::max(s, std::fabs(v));
  return s;
}

// Discrete W^{1,p}_0-type norm: ||u||_p + ||grad u||_p.
inline double w1p_norm(const Grid& g, const Field& u, double p) {
  double gs = 0.0;
  for_each_gradient_sample(g, u, [&](const GradientSample& s) {
    gs += std::pow(std::hypot(s.gx, s.gy), p) * s.vol;
  });
  return lp_norm(g, u, p) + std::pow(gs, 1.0 / p);
}

// Grid function on Q = Omega x (0, T]; slice 0 is the initial datum.
struct SpaceTimeField {
  Grid grid;
  std::vector<Field> slices;  // size grid.nt + 1

  explicit SpaceTimeField(const Grid& g) : grid(g), slices(g.nt + 1, zero_field(g)) {}
  SpaceTimeField() = default;

  int steps() const { return static_cast<int>(slices.size()) - 1; }
  double time(int n) const { return n * grid.dt(); }
  Field& at(int n) { return slices[n]; }
  const Field& at(int n) const { return slices[n]; }

  double max_abs() const {
    double m = 0.0;
    for (const auto& s : slices) m = std::max(m, linf_norm(s));
    return m;
  }
};

// Visits every space-time gradient sample, with weight vol * dt.  The initial
// slice carries no weight; slices 1..nt represent the intervals of Q.
template <typename Fn>
void for_each_gradient_sample(const SpaceTimeField& u, Fn&& fn) {
  const double dt = u.grid.dt();
  for (int n = 1; n <= u.steps(); ++n) {
    for_each_gradient_sample(u.grid, u.at(n), [&](GradientSample s) {
      s.vol *= dt;
      fn(s);
    });
  }
}

inline double l1_distance(const SpaceTimeField& a, const SpaceTimeField& b) {
  assert(a.steps() == b.steps());
  double s = 0.0;
  for (int n = 1; n <= a.steps(); ++n) {
    for (size_t i = 0; i < a.at(n).size(); ++i) s += std::fabs(a.at(n)[i] - b.at(n)[i]);
  }
  return s * a.grid.cell_volume() * a.grid.dt();
}

}  // namespace plm
