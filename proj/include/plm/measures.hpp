#pragma once

// Bounded measures on Omega or Q = Omega x (0,T) as atoms + density +
// divergence part + time-derivative part, with the approximating sequences
// (mollification, decomposition, schedules) and the diffuse/singular
// classification.
//
// Grid representation: densities live on nodal slices, the divergence part is
// a nodal vector field paired against gradient samples, the time-derivative
// part is a nodal space-time field paired against backward time differences.
// The pairing below is the definition of every part, so reassembly after
// decompose is exact by construction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "plm/expr.hpp"
#include "plm/grid.hpp"

namespace plm {

class MeasureError : public std::runtime_error {
public:
  explicit MeasureError(const std::string& m) : std::runtime_error("measure: " + m) {}
};

// Nonnegative time profile F on (0,T); empty expression means chi_(0,T).
struct TimeProfile {
  Expr expr;  // in the variable t

  double operator()(double t) const { return expr.empty() ? 1.0 : expr.eval1("t", t); }

  // Composite Simpson; exact for the polynomial profiles used in configs.
  double integral(double T, int cells = 256) const {
    if (expr.empty()) return T;
    const double h = T / cells;
    double s = 0.0;
    for (int i = 0; i < cells; ++i) {
      const double a = i * h, b = a + h;
      s += (h / 6.0) * ((*this)(a) + 4.0 * (*this)(0.5 * (a + b)) + (*this)(b));
    }
    return s;
  }
};

struct Atom {
  double x = 0.0, y = 0.0;
  double w = 1.0;
  bool has_time = false;  // fixed time coordinate vs tensor profile
  double t = 0.0;
  TimeProfile profile;    // used when !has_time on a Q-measure
  bool singular = false;  // charges a set of zero capacity (classification tag)
};

struct DiscreteMeasure {
  Grid grid;
  bool on_Q = true;  // Q-measure; false: Omega-measure (time axis unused)

  std::vector<Atom> atoms;
  std::vector<Field> density;            // slices 1..nt (Q) or one slice (Omega)
  Field gx, gy;                          // -div g part, nodal components
  std::vector<Field> timeder;            // h, slices 0..nt; measure part is h_t

  static DiscreteMeasure zero(const Grid& g, bool on_Q = true) {
    DiscreteMeasure m;
    m.grid = g;
    m.on_Q = on_Q;
    return m;
  }
  static DiscreteMeasure dirac(const Grid& g, double x, double y, double w, bool on_Q = true) {
    DiscreteMeasure m = zero(g, on_Q);
    Atom a;
    a.x = x;
    a.y = y;
    a.w = w;
    m.atoms.push_back(a);
    return m;
  }
  static DiscreteMeasure from_density(const Grid& g,
                                      const std::function<double(double, double, double)>& f,
                                      bool on_Q = true) {
    DiscreteMeasure m = zero(g, on_Q);
    const int ns = on_Q ? g.nt : 1;
    m.density.resize(ns, zero_field(g));
    for (int n = 0; n < ns; ++n) {
      const double t = on_Q ? (n + 0.5) * g.dt() : 0.0;
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) m.density[n][g.id(i, j)] = f(g.x(i), g.y(j), t);
    }
    return m;
  }

  int density_slices() const { return static_cast<int>(density.size()); }
  bool has_g() const { return !gx.empty(); }
  bool has_h() const { return !timeder.empty(); }

  // Sum of |weights| (times integral of the profile on Q) plus L^1 norms of
  // the function parts, the divergence part measured through its nodal
  // divergence.
  double total_variation() const;

  bool nonnegative() const {
    for (const auto& a : atoms)
      if (a.w < 0.0) return false;
    for (const auto& s : density)
      for (double v : s)
        if (v < 0.0) return false;
    return !has_g() && !has_h();
  }

  // Load vector of time slice n (1-based; the source of step n), such that
  // <mu restricted to slice n, u> = sum_i load[i] * u_i.  Slice masses sum to
  // the measure's action on 1.
  Field slice_load(int n) const;
  Field omega_load() const;  // Omega-measure version

  // Action on a nodal test function (slices 0..nt for Q-measures).
  double action(const SpaceTimeField& psi) const;
};

// ---------------------------------------------------------------------------
// Nodal deposits and discrete adjoint operators
// ---------------------------------------------------------------------------
namespace detail {

// Bilinear deposit of a point mass onto the surrounding nodes.
inline void deposit_atom(const Grid& g, double x, double y, double w, Field& out) {
  const double fx = (x - g.lo[0]) / g.hx();
  int i = std::clamp(static_cast<int>(std::floor(fx)), 0, g.nx - 2);
  const double ax = std::clamp(fx - i, 0.0, 1.0);
  if (g.dim == 1) {
    out[g.id(i)] += w * (1.0 - ax);
    out[g.id(i + 1)] += w * ax;
    return;
  }
  const double fy = (y - g.lo[1]) / g.hy();
  int j = std::clamp(static_cast<int>(std::floor(fy)), 0, g.ny - 2);
  const double ay = std::clamp(fy - j, 0.0, 1.0);
  out[g.id(i, j)] += w * (1.0 - ax) * (1.0 - ay);
  out[g.id(i + 1, j)] += w * ax * (1.0 - ay);
  out[g.id(i, j + 1)] += w * (1.0 - ax) * ay;
  out[g.id(i + 1, j + 1)] += w * ax * ay;
}

// Adjoint of the gradient sampling: load_i = sum over samples touching node i
// of (gx,gy)(node) . grad(hat_i) * vol.  Defined so that
// sum_i load_i psi_i = sum over samples g(sample node) . grad psi * vol.
inline Field div_adjoint_load(const Grid& g, const Field& gxf, const Field& gyf) {
  Field load = zero_field(g);
  const double hx = g.hx();
  if (g.dim == 1) {
    // sample at node i and i+1 of cell i, each vol hx/2, grad psi = (psi_{i+1}-psi_i)/hx
    for (int i = 0; i + 1 < g.nx; ++i) {
      const double c = 0.5 * (gxf[i] + gxf[i + 1]);  // both samples share the cell gradient
      load[i + 1] += c;
      load[i] -= c;
    }
    return load;
  }
  const double hy = g.hy();
  const double w = hx * hy / 4.0;
  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      const int n00 = g.id(i, j), n10 = g.id(i + 1, j), n01 = g.id(i, j + 1),
                n11 = g.id(i + 1, j + 1);
      // corner samples: x-gradient along the sample's row, y-gradient along its column
      const auto add = [&](int node, int xa, int xb, int ya, int yb) {
        const double cx = w * gxf[node] / hx;
        const double cy = w * gyf[node] / hy;
        load[xb] += cx;
        load[xa] -= cx;
        load[yb] += cy;
        load[ya] -= cy;
      };
      add(n00, n00, n10, n00, n01);
      add(n10, n00, n10, n10, n11);
      add(n01, n01, n11, n00, n01);
      add(n11, n01, n11, n10, n11);
    }
  }
  return load;
}

inline double l1_nodal(const Grid& g, const Field& f) { return l1_norm(g, f); }

// Discrete ||g||_{p'} over the nodal vector field.
inline double lpprime_norm(const Grid& g, const Field& gxf, const Field& gyf, double p) {
  const double pp = p / (p - 1.0);
  double s = 0.0;
  for (size_t i = 0; i < gxf.size(); ++i)
    s += std::pow(std::hypot(gxf[i], gyf.empty() ? 0.0 : gyf[i]), pp);
  return std::pow(s * g.cell_volume(), 1.0 / pp);
}

}  // namespace detail

inline Field DiscreteMeasure::slice_load(int n) const {
  if (!on_Q) throw MeasureError("slice_load on an Omega measure");
  if (n < 1 || n > grid.nt) throw MeasureError("slice index out of range");
  const double dt = grid.dt();
  Field load = zero_field(grid);
  for (const auto& a : atoms) {
    if (a.has_time) {
      // Dirac in time deposited into the step containing its coordinate.
      const int step = std::clamp(static_cast<int>(std::floor(a.t / dt)) + 1, 1, grid.nt);
      if (step == n) detail::deposit_atom(grid, a.x, a.y, a.w, load);
    } else {
      detail::deposit_atom(grid, a.x, a.y, a.w * a.profile((n - 0.5) * dt) * dt, load);
    }
  }
  if (!density.empty()) {
    const double vol = grid.cell_volume();
    const Field& f = density[std::min(n - 1, density_slices() - 1)];
    for (int i = 0; i < grid.nodes(); ++i) load[i] += f[i] * vol * dt;
  }
  if (has_g()) {
    Field dv = detail::div_adjoint_load(grid, gx, gy);
    for (int i = 0; i < grid.nodes(); ++i) load[i] += dv[i] * dt;
  }
  if (has_h()) {
    const double vol = grid.cell_volume();
    for (int i = 0; i < grid.nodes(); ++i)
      load[i] += (timeder[n][i] - timeder[n - 1][i]) * vol;  // (h_t, psi) dt per slice
  }
  return load;
}

inline Field DiscreteMeasure::omega_load() const {
  if (on_Q) throw MeasureError("omega_load on a Q measure");
  Field load = zero_field(grid);
  for (const auto& a : atoms) detail::deposit_atom(grid, a.x, a.y, a.w, load);
  if (!density.empty()) {
    const double vol = grid.cell_volume();
    for (int i = 0; i < grid.nodes(); ++i) load[i] += density[0][i] * vol;
  }
  if (has_g()) {
    Field dv = detail::div_adjoint_load(grid, gx, gy);
    for (int i = 0; i < grid.nodes(); ++i) load[i] += dv[i];
  }
  return load;
}

inline double DiscreteMeasure::action(const SpaceTimeField& psi) const {
  if (!on_Q) {
    const Field load = omega_load();
    double s = 0.0;
    for (int i = 0; i < grid.nodes(); ++i) s += load[i] * psi.at(0)[i];
    return s;
  }
  double s = 0.0;
  for (int n = 1; n <= grid.nt; ++n) {
    const Field load = slice_load(n);
    for (int i = 0; i < grid.nodes(); ++i) s += load[i] * psi.at(n)[i];
  }
  return s;
}

inline double DiscreteMeasure::total_variation() const {
  double tv = 0.0;
  const double T = grid.T;
  for (const auto& a : atoms)
    tv += std::fabs(a.w) * (on_Q && !a.has_time ? a.profile.integral(T) : 1.0);
  if (on_Q && density_slices() == 1) {
    // a single slice spans all of Q
    tv += detail::l1_nodal(grid, density[0]) * T;
  } else {
    const double wt = on_Q ? grid.dt() : 1.0;
    for (const auto& s : density) tv += detail::l1_nodal(grid, s) * wt;
  }
  if (has_g()) {
    const Field dv = detail::div_adjoint_load(grid, gx, gy);
    double s = 0.0;
    for (double v : dv) s += std::fabs(v);
    tv += s * (on_Q ? T : 1.0);
  }
  if (has_h()) {
    for (int n = 1; n < static_cast<int>(timeder.size()); ++n) {
      double s = 0.0;
      for (int i = 0; i < grid.nodes(); ++i) s += std::fabs(timeder[n][i] - timeder[n - 1][i]);
      tv += s * grid.cell_volume();
    }
  }
  return tv;
}

// ---------------------------------------------------------------------------
// tensor product omega x F
// ---------------------------------------------------------------------------
inline DiscreteMeasure tensor_product(const DiscreteMeasure& omega, const TimeProfile& F) {
  if (omega.on_Q) throw MeasureError("tensor_product: first argument must be an Omega measure");
  for (double t : {0.0, 0.25 * omega.grid.T, 0.5 * omega.grid.T, omega.grid.T})
    if (F(t) < 0.0) throw MeasureError("tensor_product: negative time profile");
  DiscreteMeasure mu = omega;
  mu.on_Q = true;
  for (auto& a : mu.atoms) {
    a.has_time = false;
    a.profile = F;
  }
  if (!omega.density.empty()) {
    mu.density.assign(mu.grid.nt, omega.density[0]);
    for (int n = 0; n < mu.grid.nt; ++n) {
      const double c = F((n + 0.5) * mu.grid.dt());
      for (double& v : mu.density[n]) v *= c;
    }
  }
  return mu;
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

// One mollified snapshot: a space-time density (slices 1..nt) of the same mass.
inline SpaceTimeField mollify(const DiscreteMeasure& mu, double scale) {
  const Grid& g = mu.grid;
  if (scale <= 0.0) throw MeasureError("mollify: scale must be positive");
  SpaceTimeField out(g);
  const double vol = g.cell_volume();
  const double dt = g.dt();

  for (const auto& a : mu.atoms) {
    const double dx0 = std::min(a.x - g.lo[0], g.hi[0] - a.x);
    const double dy0 = g.dim == 2 ? std::min(a.y - g.lo[1], g.hi[1] - a.y) : scale + 1.0;
    if (std::min(dx0, dy0) < scale)
      throw MeasureError("mollify: scale exceeds atom distance to the boundary");

    // Discrete hat kernel, normalized on the grid so mass is preserved exactly.
    Field kernel = zero_field(g);
    double ksum = 0.0;
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const double r = std::hypot(g.x(i) - a.x, g.dim == 2 ? g.y(j) - a.y : 0.0);
        const double k = std::max(0.0, 1.0 - r / scale);
        kernel[g.id(i, j)] = k;
        ksum += k * vol;
      }
    }
    if (ksum <= 0.0) throw MeasureError("mollify: kernel support below grid resolution");

    for (int n = 1; n <= g.nt; ++n) {
      double tw;  // time factor per slice, integrating to the atom's time mass
      if (a.has_time) {
        // hat of width min(scale, margin) around t, normalized over slices
        const double ts = std::min({scale, a.t, g.T - a.t});
        if (ts <= 0.0) throw MeasureError("mollify: atom time on the boundary");
        double tsum = 0.0;
        for (int m = 1; m <= g.nt; ++m)
          tsum += std::max(0.0, 1.0 - std::fabs((m - 0.5) * dt - a.t) / ts) * dt;
        tw = std::max(0.0, 1.0 - std::fabs((n - 0.5) * dt - a.t) / ts) / tsum;
      } else {
        double tsum = 0.0;
        for (int m = 1; m <= g.nt; ++m) tsum += a.profile((m - 0.5) * dt) * dt;
        const double total = a.profile.integral(g.T);
        tw = tsum > 0.0 ? a.profile((n - 0.5) * dt) * total / tsum : 0.0;
      }
      for (int i = 0; i < g.nodes(); ++i)
        out.at(n)[i] += a.w * kernel[i] / ksum * tw;
    }
  }

  // Function parts are already densities; carried through unchanged.
  if (!mu.density.empty()) {
    for (int n = 1; n <= g.nt; ++n) {
      const Field& f = mu.density[std::min(n - 1, mu.density_slices() - 1)];
      for (int i = 0; i < g.nodes(); ++i) out.at(n)[i] += f[i];
    }
  }
  if (mu.has_g() || mu.has_h())
    throw MeasureError("mollify: divergence/time parts not supported; decompose first");
  return out;
}

inline std::vector<SpaceTimeField> mollify_sequence(const DiscreteMeasure& mu,
                                                    const std::vector<double>& scales) {
  for (size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] <= 0.0 || (i > 0 && scales[i] >= scales[i - 1]))
      throw MeasureError("mollify_sequence: scales must be positive and decreasing");
  }
  std::vector<SpaceTimeField> out;
  out.reserve(scales.size());
  for (double s : scales) out.push_back(mollify(mu, s));
  return out;
}

inline double density_mass(const Grid& g, const SpaceTimeField& rho) {
  double m = 0.0;
  for (int n = 1; n <= g.nt; ++n) m += l1_norm(g, rho.at(n));
  return m * g.dt();
}

// ---------------------------------------------------------------------------
// Decomposition mu0 = f - div g + h_t with budget control
// ---------------------------------------------------------------------------
struct Decomposition {
  std::vector<Field> f;  // slices 1..nt
  Field gx, gy;
  std::vector<Field> h;  // slices 0..nt
  std::vector<Atom> mu_s_plus, mu_s_minus;
  double budget_total = 0.0;  // ||f||_1 + ||g||_{p'} + ||h||_X
  double budget_gh = 0.0;     // ||g||_{p'} + ||h||_X
};

// Discrete X norm of the h part: sup-in-time of ||h||_p + ||grad h||_p.
inline double x_norm(const Grid& g, const std::vector<Field>& h, double p) {
  double m = 0.0;
  for (const auto& s : h) m = std::max(m, w1p_norm(g, s, p));
  return m;
}

inline Decomposition decompose(const DiscreteMeasure& mu0, double eps, double p = 2.0) {
  if (eps <= 0.0) throw MeasureError("decompose: eps must be positive");
  if (!mu0.on_Q) throw MeasureError("decompose: expects a Q measure");
  for (const auto& a : mu0.atoms)
    if (a.singular) throw MeasureError("decompose: input must be diffuse");

  const Grid& g = mu0.grid;
  Decomposition d;
  d.f.assign(g.nt, zero_field(g));
  const double vol = g.cell_volume();

  // Base density part: function part plus atom deposits as nodal densities
  // (diffuse atoms are admissible density carriers on a fixed grid).
  for (int n = 1; n <= g.nt; ++n) {
    if (!mu0.density.empty()) {
      const Field& f = mu0.density[std::min(n - 1, mu0.density_slices() - 1)];
      for (int i = 0; i < g.nodes(); ++i) d.f[n - 1][i] += f[i];
    }
    Field atom_load = zero_field(g);
    const double dt = g.dt();
    for (const auto& a : mu0.atoms) {
      if (a.has_time) {
        const int step = std::clamp(static_cast<int>(std::floor(a.t / dt)) + 1, 1, g.nt);
        if (step == n) detail::deposit_atom(g, a.x, a.y, a.w / dt, atom_load);
      } else {
        detail::deposit_atom(g, a.x, a.y, a.w * a.profile((n - 0.5) * dt), atom_load);
      }
    }
    for (int i = 0; i < g.nodes(); ++i) d.f[n - 1][i] += atom_load[i] / vol;
  }

  const double mass = mu0.total_variation();

  // Scale the g and h parts down to the eps budget; the removed content moves
  // into f through the discrete divergence / time difference, so the pairing
  // against any grid test function is unchanged.
  if (mu0.has_g()) {
    const double gnorm = detail::lpprime_norm(g, mu0.gx, mu0.gy, p);
    const double alpha = gnorm > 0.0 ? std::min(1.0, 0.5 * eps / gnorm) : 1.0;
    d.gx = mu0.gx;
    d.gy = mu0.gy.empty() ? zero_field(g) : mu0.gy;
    for (double& v : d.gx) v *= alpha;
    for (double& v : d.gy) v *= alpha;
    Field rest_x = mu0.gx, rest_y = mu0.gy.empty() ? zero_field(g) : mu0.gy;
    for (double& v : rest_x) v *= (1.0 - alpha);
    for (double& v : rest_y) v *= (1.0 - alpha);
    const Field dv = detail::div_adjoint_load(g, rest_x, rest_y);
    for (int n = 1; n <= g.nt; ++n)
      for (int i = 0; i < g.nodes(); ++i) d.f[n - 1][i] += dv[i] / vol;
  } else {
    d.gx = zero_field(g);
    d.gy = zero_field(g);
  }

  if (mu0.has_h()) {
    const double hnorm = x_norm(g, mu0.timeder, p);
    const double alpha = hnorm > 0.0 ? std::min(1.0, 0.5 * eps / hnorm) : 1.0;
    d.h = mu0.timeder;
    for (auto& s : d.h)
      for (double& v : s) v *= alpha;
    for (int n = 1; n <= g.nt; ++n)
      for (int i = 0; i < g.nodes(); ++i)
        d.f[n - 1][i] +=
            (1.0 - alpha) * (mu0.timeder[n][i] - mu0.timeder[n - 1][i]) / g.dt();
  } else {
    d.h.assign(g.nt + 1, zero_field(g));
  }

  double f1 = 0.0;
  for (const auto& s : d.f) f1 += detail::l1_nodal(g, s) * g.dt();
  const double gn = detail::lpprime_norm(g, d.gx, d.gy, p);
  const double hn = x_norm(g, d.h, p);
  d.budget_gh = gn + hn;
  d.budget_total = f1 + gn + hn;
  if (d.budget_gh > eps * (1.0 + 1e-12) || d.budget_total > (1.0 + eps) * mass + 1e-12)
    throw MeasureError("decompose: budget infeasible for eps=" + std::to_string(eps));
  return d;
}

// ---------------------------------------------------------------------------
// Approximation schedule for the stability data
// ---------------------------------------------------------------------------
struct ScheduleStep {
  std::vector<Field> f;  // smooth density slices
  Field gx, gy;
  std::vector<Field> h;
  SpaceTimeField rho;  // mollified positive singular part
  SpaceTimeField eta;  // mollified negative singular part
  double scale = 0.0;
  double budget = 0.0;      // ||f||_1 + ||g|| + ||h|| + singular masses
  double l1_to_prev = 0.0;  // strong distance of the f part to the previous step
};

inline std::vector<ScheduleStep> approximation_schedule(const DiscreteMeasure& mu, int n_max,
                                                        double eps, double p = 2.0) {
  if (n_max < 1) throw MeasureError("approximation_schedule: n_max must be >= 1");
  DiscreteMeasure diffuse = mu;
  DiscreteMeasure sing_plus = DiscreteMeasure::zero(mu.grid, mu.on_Q);
  DiscreteMeasure sing_minus = DiscreteMeasure::zero(mu.grid, mu.on_Q);
  diffuse.atoms.clear();
  for (const auto& a : mu.atoms) {
    if (!a.singular)
      diffuse.atoms.push_back(a);
    else if (a.w >= 0.0)
      sing_plus.atoms.push_back(a);
    else {
      Atom b = a;
      b.w = -b.w;
      sing_minus.atoms.push_back(b);
    }
  }

  const bool has_diffuse = !diffuse.atoms.empty() || !diffuse.density.empty() ||
                           diffuse.has_g() || diffuse.has_h();
  Decomposition base;
  if (has_diffuse) base = decompose(diffuse, eps, p);

  const Grid& g = mu.grid;
  std::vector<ScheduleStep> steps;
  double base_scale = 0.25 * g.diameter();
  for (const auto& a : mu.atoms) {
    if (!a.singular) continue;
    const double dx0 = std::min(a.x - g.lo[0], g.hi[0] - a.x);
    const double dy0 = g.dim == 2 ? std::min(a.y - g.lo[1], g.hi[1] - a.y) : dx0;
    base_scale = std::min(base_scale, 0.9 * std::min(dx0, dy0));
  }

  const std::vector<Field>* prev_f = nullptr;
  for (int n = 1; n <= n_max; ++n) {
    ScheduleStep s;
    s.scale = base_scale * std::pow(2.0, 1 - n);
    if (has_diffuse) {
      s.f = base.f;
      s.gx = base.gx;
      s.gy = base.gy;
      s.h = base.h;
      // light truncation mimicking the smooth approximation: cap at 2^n scale
      const double cap = std::pow(2.0, n) * 8.0;
      for (auto& sl : s.f)
        for (double& v : sl) v = std::clamp(v, -cap, cap);
    } else {
      s.f.assign(g.nt, zero_field(g));
      s.gx = zero_field(g);
      s.gy = zero_field(g);
      s.h.assign(g.nt + 1, zero_field(g));
    }
    s.rho = sing_plus.atoms.empty() ? SpaceTimeField(g) : mollify(sing_plus, s.scale);
    s.eta = sing_minus.atoms.empty() ? SpaceTimeField(g) : mollify(sing_minus, s.scale);

    double f1 = 0.0;
    for (const auto& sl : s.f) f1 += detail::l1_nodal(g, sl) * g.dt();
    s.budget = f1 + detail::lpprime_norm(g, s.gx, s.gy, p) + x_norm(g, s.h, p) +
               density_mass(g, s.rho) + density_mass(g, s.eta);

    if (prev_f) {
      double d = 0.0;
      for (int m = 0; m < g.nt; ++m)
        for (int i = 0; i < g.nodes(); ++i) d += std::fabs(s.f[m][i] - (*prev_f)[m][i]);
      s.l1_to_prev = d * g.cell_volume() * g.dt();
    }
    steps.push_back(std::move(s));
    prev_f = &steps.back().f;
  }
  return steps;
}

// ---------------------------------------------------------------------------
// inf of two nonnegative measures
// ---------------------------------------------------------------------------
inline DiscreteMeasure inf_measure(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (!mu.nonnegative() || !nu.nonnegative())
    throw MeasureError("inf_measure: inputs must be nonnegative");
  if (mu.on_Q != nu.on_Q || mu.grid.nodes() != nu.grid.nodes())
    throw MeasureError("inf_measure: ambient mismatch");
  DiscreteMeasure out = DiscreteMeasure::zero(mu.grid, mu.on_Q);
  const double tol = 0.5 * mu.grid.h();
  for (const auto& a : mu.atoms) {
    for (const auto& b : nu.atoms) {
      if (std::hypot(a.x - b.x, a.y - b.y) < tol &&
          (!a.has_time || std::fabs(a.t - b.t) < 0.5 * mu.grid.dt())) {
        Atom c = a;
        c.w = std::min(a.w, b.w);
        out.atoms.push_back(c);
        break;
      }
    }
  }
  const int ns = std::max(mu.density_slices(), nu.density_slices());
  if (ns > 0 && !mu.density.empty() && !nu.density.empty()) {
    out.density.assign(ns, zero_field(mu.grid));
    for (int n = 0; n < ns; ++n) {
      const Field& a = mu.density[std::min(n, mu.density_slices() - 1)];
      const Field& b = nu.density[std::min(n, nu.density_slices() - 1)];
      for (int i = 0; i < mu.grid.nodes(); ++i) out.density[n][i] = std::min(a[i], b[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diffuse / singular classification
// ---------------------------------------------------------------------------
struct Classification {
  bool density_diffuse = true;       // absolutely continuous parts are diffuse
  bool atoms_elliptic_diffuse = false;  // points have positive c_p capacity iff p > N
  bool has_atoms = false;
  // with q supplied: admissibility for the absorption theorem
  bool q_supplied = false;
  bool admissible = false;  // atoms do not charge C_{p,q/(q+1-p)}-null sets
  double scaling_number = 0.0;  // pq/(q+1-p)
  double pe = 0.0;
  std::string note;
};

inline Classification classify_diffuse(const DiscreteMeasure& omega, double p, int N,
                                       double q = -1.0) {
  Classification c;
  c.has_atoms = !omega.atoms.empty();
  c.atoms_elliptic_diffuse = p > static_cast<double>(N);
  c.pe = p < N ? N * (p - 1.0) / (N - p) : std::numeric_limits<double>::infinity();
  if (q >= 0.0) {
    if (q <= p - 1.0) throw MeasureError("classify_diffuse: requires q > p - 1");
    c.q_supplied = true;
    c.scaling_number = p * q / (q + 1.0 - p);
    c.admissible = !c.has_atoms || c.scaling_number > static_cast<double>(N);
    c.note = c.has_atoms
                 ? (c.admissible ? "atoms admissible: pq/(q+1-p) > N, q < pe"
                                 : "atoms charge capacity-null points: q >= pe")
                 : "no atoms";
  }
  return c;
}

// ---------------------------------------------------------------------------
// Fixed smooth test set for narrow-convergence proxies: tensor polynomials
// times a boundary bump.
// ---------------------------------------------------------------------------
inline std::vector<std::function<double(double, double, double)>> smooth_test_set(
    const Grid& g) {
  std::vector<std::function<double(double, double, double)>> fns;
  const double ax = g.lo[0], bx = g.hi[0];
  const double ay = g.lo[1], by = g.dim == 2 ? g.hi[1] : 1.0;
  const double T = g.T;
  const auto bump = [ax, bx, ay, by, dim = g.dim](double x, double y) {
    const double sx = (x - ax) * (bx - x) / ((bx - ax) * (bx - ax) / 4.0);
    if (dim == 1) return std::max(0.0, sx);
    const double sy = (y - ay) * (by - y) / ((by - ay) * (by - ay) / 4.0);
    return std::max(0.0, sx * sy);
  };
  for (int dx = 0; dx <= 1; ++dx)
    for (int dy = 0; dy <= 1; ++dy)
      for (int et = 0; et <= 3; ++et)
        fns.push_back([=](double x, double y, double t) {
          return bump(x, y) * std::pow(x, dx) * std::pow(y, dy) * std::pow(t / T, et);
        });
  return fns;  // 16 functions
}

}  // namespace plm
