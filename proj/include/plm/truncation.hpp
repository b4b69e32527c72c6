#pragma once

// Truncation machinery: the clamp family and its integrated variants, the
// band truncations, smoothed truncations for renormalized residuals, Steklov
// time averages, the Landes relaxation, level-set diagnostics and the
// decreasing rearrangement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "plm/grid.hpp"
#include "plm/report.hpp"

namespace plm {

// ---------------------------------------------------------------------------
// Pointwise truncations
// ---------------------------------------------------------------------------

inline double trunc_Tk(double r, double k) { return std::clamp(r, -k, k); }

// int_0^r T_k
inline double trunc_Tk_bar(double r, double k) {
  const double a = std::fabs(r);
  return a <= k ? 0.5 * r * r : k * a - 0.5 * k * k;
}

// int_0^r T_k'(tau) tau dtau
inline double trunc_Tk_cal(double r, double k) {
  const double a = std::fabs(r);
  return a <= k ? 0.5 * r * r : 0.5 * k * k;
}

// Plateau cutoff: 1 on [-m, m], linear down to 0 on m < |r| <= 2m.
inline double trunc_Hm(double r, double m) {
  const double a = std::fabs(r);
  if (a <= m) return 1.0;
  if (a <= 2.0 * m) return (2.0 * m - a) / m;
  return 0.0;
}

// int_0^r H_m
inline double trunc_Hm_bar(double r, double m) {
  const double a = std::fabs(r);
  double v;
  if (a <= m)
    v = a;
  else if (a <= 2.0 * m)
    v = m + (2.0 * m * (a - m) - 0.5 * (a * a - m * m)) / m;
  else
    v = 1.5 * m;
  return r < 0 ? -v : v;
}

// Band truncation T_{k,l}: the part of r in the band l <= |r| <= l + k.
inline double trunc_Tkl(double r, double k, double l) {
  return std::max(std::min(r - l, k), 0.0) + std::min(std::max(r + l, -k), 0.0);
}

struct TruncationFamily {
  enum class Kind { Tk, TkBar, TkCal, Hm, HmBar, Smooth, Band };
  Kind kind = Kind::Tk;
  double k = 1.0;  // level (m for the Hm variants)
  double l = 0.0;  // band offset for Band, transition half-width for Smooth

  double operator()(double r) const;
};

// ---------------------------------------------------------------------------
// Smoothed truncation (C^2), used as S in the renormalized formulation.
// Identity up to k - delta, constant k beyond k + delta, quintic transition.
// ---------------------------------------------------------------------------
struct SmoothTruncation {
  double k;
  double delta;

  explicit SmoothTruncation(double level, double width = -1.0)
      : k(level), delta(width > 0.0 ? width : level / 10.0) {
    if (k <= 0.0 || delta <= 0.0 || delta >= k)
      throw std::invalid_argument("SmoothTruncation: need 0 < delta < k");
  }

  double value(double r) const {
    const double a = std::fabs(r);
    double v;
    if (a <= k - delta)
      v = a;
    else if (a >= k + delta)
      v = k;
    else {
      const double xi = (a - (k - delta)) / (2.0 * delta);
      v = (k - delta) + 2.0 * delta * h1(xi) + (delta)*h2(xi);
    }
    return r < 0 ? -v : v;
  }
  double d1(double r) const {
    const double a = std::fabs(r);
    if (a <= k - delta) return 1.0;
    if (a >= k + delta) return 0.0;
    const double xi = (a - (k - delta)) / (2.0 * delta);
    return h1p(xi) + 0.5 * h2p(xi);
  }
  double d2(double r) const {
    const double a = std::fabs(r);
    if (a <= k - delta || a >= k + delta) return 0.0;
    const double xi = (a - (k - delta)) / (2.0 * delta);
    const double s = (h1pp(xi) + 0.5 * h2pp(xi)) / (2.0 * delta);
    return r < 0 ? -s : s;
  }

private:
  // Quintic Hermite pieces on [0,1] for data: value 0 -> (gap), slope 1 -> 0,
  // curvature 0 -> 0, where gap = (k) - (k - delta) scaled by 2 delta.
  // Decomposed as v(xi) = 2*delta*h1(xi) + delta*h2(xi) with
  // h1: slope-1 start basis, h2: end-value basis.  Closed forms below are the
  // standard quintic Hermite basis functions.
  static double h1(double x) {  // H^5 basis with f'(0)=1, rest zero
    return x * (1 + x * x * (-6 + x * (8 - 3 * x)));
  }
  static double h1p(double x) { return 1 + x * x * (-18 + x * (32 - 15 * x)); }
  static double h1pp(double x) { return x * (-36 + x * (96 - 60 * x)); }
  static double h2(double x) {  // H^5 basis with f(1)=1, rest zero
    return x * x * x * (10 + x * (-15 + 6 * x));
  }
  static double h2p(double x) { return x * x * (30 + x * (-60 + 30 * x)); }
  static double h2pp(double x) { return x * (60 + x * (-180 + 120 * x)); }
};

inline double TruncationFamily::operator()(double r) const {
  switch (kind) {
    case Kind::Tk: return trunc_Tk(r, k);
    case Kind::TkBar: return trunc_Tk_bar(r, k);
    case Kind::TkCal: return trunc_Tk_cal(r, k);
    case Kind::Hm: return trunc_Hm(r, k);
    case Kind::HmBar: return trunc_Hm_bar(r, k);
    case Kind::Smooth: return SmoothTruncation(k, l > 0 ? l : -1.0).value(r);
    case Kind::Band: return trunc_Tkl(r, k, l);
  }
  return r;
}

inline Field truncate(const Field& u, const TruncationFamily& f) {
  Field out(u.size());
  for (size_t i = 0; i < u.size(); ++i) out[i] = f(u[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Steklov time averages
// ---------------------------------------------------------------------------

struct SteklovResult {
  SpaceTimeField field;
  int n_min = 0;  // first valid time index
  int n_max = 0;  // last valid time index
};

// [z]_l (forward) or [z]_{-l} (backward); z is treated as piecewise linear in
// time between its slices.
inline SteklovResult steklov_average(const SpaceTimeField& z, double l, bool forward = true) {
  const double T = z.grid.T;
  if (l <= 0.0 || l >= T) throw std::invalid_argument("steklov_average: need 0 < l < T");
  const double dt = z.grid.dt();
  const int nt = z.steps();
  const int nodes = z.grid.nodes();

  // Exact average of the piecewise-linear interpolant over [a, a + l].
  const auto window_average = [&](int node, double a) {
    const double b = a + l;
    double acc = 0.0;
    for (int n = 0; n < nt; ++n) {
      const double t0 = n * dt, t1 = (n + 1) * dt;
      const double lo = std::max(a, t0), hi = std::min(b, t1);
      if (hi <= lo) continue;
      const double z0 = z.at(n)[node], z1 = z.at(n + 1)[node];
      const double mlo = z0 + (z1 - z0) * (lo - t0) / dt;
      const double mhi = z0 + (z1 - z0) * (hi - t0) / dt;
      acc += 0.5 * (mlo + mhi) * (hi - lo);
    }
    return acc / l;
  };

  SteklovResult r{SpaceTimeField(z.grid), 0, 0};
  if (forward) {
    r.n_min = 0;
    r.n_max = static_cast<int>(std::floor((T - l) / dt + 1e-12));
  } else {
    r.n_min = static_cast<int>(std::ceil(l / dt - 1e-12));
    r.n_max = nt;
  }
  if (r.n_min > r.n_max) throw std::invalid_argument("steklov_average: window violation");
  for (int n = r.n_min; n <= r.n_max; ++n) {
    const double a = forward ? n * dt : n * dt - l;
    for (int i = 0; i < nodes; ++i) r.field.at(n)[i] = window_average(i, a);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Landes relaxation: y_t = nu (w - y), y(0) = z_init, integrated exactly per
// step with w frozen at its end-of-step slice.
// ---------------------------------------------------------------------------
inline SpaceTimeField landes_approx(const SpaceTimeField& w, double nu, const Field& z_init) {
  if (z_init.size() != static_cast<size_t>(w.grid.nodes()))
    throw std::invalid_argument("landes_approx: shape mismatch");
  SpaceTimeField y(w.grid);
  y.at(0) = z_init;
  const double decay = std::exp(-nu * w.grid.dt());
  for (int n = 1; n <= w.steps(); ++n) {
    for (int i = 0; i < w.grid.nodes(); ++i) {
      const double target = w.at(n)[i];
      y.at(n)[i] = target + (y.at(n - 1)[i] - target) * decay;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Cell iteration for level-set diagnostics.  A cell belongs to the band
// [l, l+k) by its mean nodal value; bands are half-open so that disjoint
// bands add exactly.
// ---------------------------------------------------------------------------

struct CellSamples {
  double mean_u = 0.0;
  int count = 0;
  GradientSample s[4];
};

template <typename Fn>
void for_each_cell(const Grid& g, const Field& u, Fn&& fn) {
  const double hx = g.hx();
  if (g.dim == 1) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      CellSamples c;
      c.mean_u = 0.5 * (u[i] + u[i + 1]);
      c.count = 1;
      c.s[0].gx = (u[i + 1] - u[i]) / hx;
      c.s[0].vol = hx;
      c.s[0].u = c.mean_u;
      fn(c);
    }
    return;
  }
  const double hy = g.hy();
  const double w = hx * hy / 4.0;
  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      const double u00 = u[g.id(i, j)], u10 = u[g.id(i + 1, j)];
      const double u01 = u[g.id(i, j + 1)], u11 = u[g.id(i + 1, j + 1)];
      CellSamples c;
      c.mean_u = 0.25 * (u00 + u10 + u01 + u11);
      c.count = 4;
      const double gxb = (u10 - u00) / hx, gxt = (u11 - u01) / hx;
      const double gyl = (u01 - u00) / hy, gyr = (u11 - u10) / hy;
      c.s[0] = {gxb, gyl, u00, w};
      c.s[1] = {gxb, gyr, u10, w};
      c.s[2] = {gxt, gyl, u01, w};
      c.s[3] = {gxt, gyr, u11, w};
      fn(c);
    }
  }
}

// int over {l <= |u| < l+k} of |grad u|^p, over space-time.
inline double truncated_energy(const SpaceTimeField& u, double l, double k, double p) {
  if (k <= 0.0 || l < 0.0) throw std::invalid_argument("truncated_energy: need k > 0, l >= 0");
  const double dt = u.grid.dt();
  double acc = 0.0;
  for (int n = 1; n <= u.steps(); ++n) {
    for_each_cell(u.grid, u.at(n), [&](const CellSamples& c) {
      const double a = std::fabs(c.mean_u);
      if (a < l || a >= l + k) return;
      for (int q = 0; q < c.count; ++q)
        acc += std::pow(std::hypot(c.s[q].gx, c.s[q].gy), p) * c.s[q].vol * dt;
    });
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Level-set decay reports
// ---------------------------------------------------------------------------

using WeightedValues = std::vector<std::pair<double, double>>;  // (|value|, volume)

inline WeightedValues collect_values(const SpaceTimeField& u) {
  WeightedValues out;
  const double vol = u.grid.cell_volume() * u.grid.dt();
  out.reserve(static_cast<size_t>(u.steps()) * u.grid.nodes());
  for (int n = 1; n <= u.steps(); ++n)
    for (double v : u.at(n)) out.emplace_back(std::fabs(v), vol);
  return out;
}

inline WeightedValues collect_gradient_magnitudes(const SpaceTimeField& u) {
  WeightedValues out;
  for_each_gradient_sample(u, [&](const GradientSample& s) {
    out.emplace_back(std::hypot(s.gx, s.gy), s.vol);
  });
  return out;
}

inline double level_measure(const WeightedValues& vals, double k) {
  double m = 0.0;
  for (const auto& [v, vol] : vals)
    if (v > k) m += vol;
  return m;
}

// Fits the log-log slope of k -> meas{|V| > k} on k_list; saturated levels
// (zero measure) and the smallest level are excluded from the fit window.
// Pass when slope <= -critical_exponent + slack.
inline EstimateReport levelset_decay(const WeightedValues& vals, const std::vector<double>& k_list,
                                     double critical_exponent, double slack = 0.15) {
  EstimateReport rep;
  rep.name = "levelset_decay";
  rep.tolerance = slack;
  std::vector<double> ks = k_list;
  std::sort(ks.begin(), ks.end());
  std::vector<double> lx, ly;
  for (size_t i = 0; i < ks.size(); ++i) {
    const double m = level_measure(vals, ks[i]);
    rep.sample.push_back(ks[i]);
    rep.lhs.push_back(m);
    rep.bound.push_back(std::pow(ks[i], -critical_exponent));
    if (i == 0) continue;  // constant regime excluded
    if (m <= 0.0) {
      rep.note = "saturated levels excluded";
      continue;
    }
    lx.push_back(std::log(ks[i]));
    ly.push_back(std::log(m));
  }
  if (lx.size() < 2) {
    rep.degenerate = true;
    rep.note = rep.note.empty() ? "degenerate fit window" : rep.note;
    return rep;
  }
  const LineFit f = fit_line(lx, ly);
  rep.slope = f.slope;
  rep.r2 = f.r2;
  rep.fitted_constant = std::exp(f.intercept);
  rep.pass = f.slope <= -critical_exponent + slack;
  return rep;
}

// ---------------------------------------------------------------------------
// Singular flux: (1/m) int_{m <= u < 2m} phi * flux(grad u), where flux is
// A(grad u) . grad u of the operator in use.
// ---------------------------------------------------------------------------

struct SingularFluxResult {
  double value = 0.0;
  bool band_empty = true;
};

inline SingularFluxResult singular_flux(
    const SpaceTimeField& u, double m, const std::function<double(double, double)>& phi,
    const std::function<double(double, double)>& flux) {
  if (m <= 0.0) throw std::invalid_argument("singular_flux: need m > 0");
  SingularFluxResult r;
  const Grid& g = u.grid;
  const double dt = g.dt();
  const double hx = g.hx(), hy = g.hy();
  for (int n = 1; n <= u.steps(); ++n) {
    int ci = 0;
    for_each_cell(g, u.at(n), [&](const CellSamples& c) {
      const int j = g.dim == 2 ? ci / (g.nx - 1) : 0;
      const int i = g.dim == 2 ? ci % (g.nx - 1) : ci;
      ++ci;
      if (c.mean_u < m || c.mean_u >= 2.0 * m) return;
      r.band_empty = false;
      const double cx = g.lo[0] + (i + 0.5) * hx;
      const double cy = g.dim == 2 ? g.lo[1] + (j + 0.5) * hy : 0.0;
      const double w = phi(cx, cy);
      for (int q = 0; q < c.count; ++q)
        r.value += w * flux(c.s[q].gx, c.s[q].gy) * c.s[q].vol * dt;
    });
  }
  r.value /= m;
  return r;
}

// ---------------------------------------------------------------------------
// Decreasing rearrangement |V|*(s) as a right-continuous step function.
// ---------------------------------------------------------------------------

struct Rearrangement {
  // After cumulation: value values[i] on [breaks[i], breaks[i+1]).
  std::vector<double> breaks;  // size values.size() + 1, breaks[0] = 0
  std::vector<double> values;  // decreasing

  double value_at(double s) const {
    if (values.empty() || s >= breaks.back()) return 0.0;
    auto it = std::upper_bound(breaks.begin(), breaks.end(), s);
    size_t idx = static_cast<size_t>(it - breaks.begin());
    if (idx == 0) return values.front();
    return idx - 1 < values.size() ? values[idx - 1] : 0.0;
  }

  // int_0^infty G(|V|*(s)) ds over the step representation.
  double integrate(const std::function<double(double)>& G) const {
    double acc = 0.0;
    for (size_t i = 0; i < values.size(); ++i)
      acc += G(values[i]) * (breaks[i + 1] - breaks[i]);
    return acc;
  }

  // int over {|V| >= L} of G(|V|), measured on the rearranged axis.
  double tail_integral(const std::function<double(double)>& G, double L) const {
    double acc = 0.0;
    for (size_t i = 0; i < values.size(); ++i)
      if (values[i] >= L) acc += G(values[i]) * (breaks[i + 1] - breaks[i]);
    return acc;
  }
};

inline Rearrangement decreasing_rearrangement(WeightedValues vals) {
  std::sort(vals.begin(), vals.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  Rearrangement r;
  r.breaks.push_back(0.0);
  double s = 0.0;
  for (const auto& [v, vol] : vals) {
    if (vol <= 0.0) continue;
    s += vol;
    r.values.push_back(v);
    r.breaks.push_back(s);
  }
  return r;
}

}  // namespace plm
