#pragma once

// Nonlinear potential theory: truncated Wolff potentials, fractional maximal
// operators, elliptic capacities, and the potential-based inequality checks.
// Atom contributions are integrated in closed form (the integrand is a pure
// power between atom distances); densities go through log-spaced quadrature.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plm/grid.hpp"
#include "plm/measures.hpp"
#include "plm/report.hpp"
#include "plm/solver.hpp"

namespace plm {

class PotentialError : public std::runtime_error {
public:
  explicit PotentialError(const std::string& m) : std::runtime_error("potential: " + m) {}
};

struct WolffConfig {
  double R = 1.0;   // truncation radius, typically 2 diam(Omega)
  int quad = 200;   // log-spaced quadrature nodes for density parts
  double p = 2.0;
  int N = 3;
  bool borderline = false;  // set when p == N (log-type kernel)

  static WolffConfig make(double p, int N, double R) {
    if (p > static_cast<double>(N))
      throw PotentialError("unsupported regime p > N");
    WolffConfig c;
    c.p = p;
    c.N = N;
    c.R = R;
    c.borderline = p == static_cast<double>(N);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Exact atom part: int_a^b (t^{p-N} m)^{1/(p-1)} dt/t for constant ball mass m.
// ---------------------------------------------------------------------------
namespace detail {

inline double wolff_segment(double m, double a, double b, double p, int N) {
  if (m <= 0.0 || b <= a) return 0.0;
  const double gamma = (p - static_cast<double>(N)) / (p - 1.0);
  const double mp = std::pow(m, 1.0 / (p - 1.0));
  if (gamma == 0.0) return mp * std::log(b / a);
  return mp * (std::pow(b, gamma) - std::pow(a, gamma)) / gamma;
}

}  // namespace detail

// Wolff potential of a finite atom set, given as (distance to x, weight).
inline double wolff_atoms(std::vector<std::pair<double, double>> dist_w,
                          const WolffConfig& cfg) {
  std::sort(dist_w.begin(), dist_w.end());
  double W = 0.0, mass = 0.0;
  for (size_t i = 0; i < dist_w.size(); ++i) {
    const auto& [d, w] = dist_w[i];
    if (w < 0.0) throw PotentialError("wolff: negative atom weight");
    if (d >= cfg.R) break;
    if (d <= 0.0 && w > 0.0) return std::numeric_limits<double>::infinity();
    mass += w;
    const double next = i + 1 < dist_w.size() ? std::min(dist_w[i + 1].first, cfg.R) : cfg.R;
    W += detail::wolff_segment(mass, d, next, cfg.p, cfg.N);
  }
  return W;
}

// ---------------------------------------------------------------------------
// Radial measures on a ball of radius support_R around the origin
// ---------------------------------------------------------------------------
struct RadialMeasure {
  double origin_mass = 0.0;
  std::function<double(double)> density;  // radial density f(r), may be empty
  double support_R = 1.0;
  int quad_cells = 2048;

  // Fraction of the sphere of radius s (centered at the origin) covered by
  // the ball B(x, t) with |x| = d.
  static double cap_fraction(double s, double d, double t, int N) {
    if (s <= 0.0 || d <= 0.0) return s <= t ? 1.0 : 0.0;
    if (s + d <= t) return 1.0;
    if (std::fabs(s - d) >= t) return 0.0;
    const double c = std::clamp((s * s + d * d - t * t) / (2.0 * s * d), -1.0, 1.0);
    if (N == 3) return 0.5 * (1.0 - c);
    return std::acos(c) / M_PI;
  }

  // Mass of B(x, t) for |x| = d.
  double ball_mass(double d, double t, int N) const {
    double m = d <= t ? origin_mass : 0.0;
    if (!density) return m;
    const double sig = RadialGrid::sigma(N);
    const int n = quad_cells;
    const double h = support_R / n;
    for (int i = 0; i < n; ++i) {
      const double s = (i + 0.5) * h;
      const double frac = cap_fraction(s, d, t, N);
      if (frac > 0.0) m += density(s) * sig * std::pow(s, N - 1) * frac * h;
    }
    return m;
  }

  double total(int N) const {
    double m = origin_mass;
    if (density) {
      const double sig = RadialGrid::sigma(N);
      const int n = quad_cells;
      const double h = support_R / n;
      for (int i = 0; i < n; ++i) {
        const double s = (i + 0.5) * h;
        m += density(s) * sig * std::pow(s, N - 1) * h;
      }
    }
    return m;
  }

  RadialMeasure scaled(double c) const {
    RadialMeasure out = *this;
    out.origin_mass *= c;
    if (density) {
      auto f = density;
      out.density = [f, c](double r) { return c * f(r); };
    }
    return out;
  }
};

// Wolff potential of a radial measure at distance d from the origin.
inline double wolff_radial(const RadialMeasure& om, double d, const WolffConfig& cfg) {
  double W = 0.0;
  if (om.origin_mass > 0.0) {
    if (d <= 0.0) return std::numeric_limits<double>::infinity();
    if (cfg.p == 2.0 || !om.density) {
      W += wolff_atoms({{d, om.origin_mass}}, cfg);
      if (!om.density) return W;
    }
  }
  // density part (plus atom for p != 2, where the split is not exact):
  const bool fold_atom = om.origin_mass > 0.0 && cfg.p != 2.0;
  const double t0 = cfg.R * 1e-6;
  const int n = cfg.quad;
  const double ratio = std::pow(cfg.R / t0, 1.0 / n);
  double prev_t = t0, prev_g = 0.0, acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = t0 * std::pow(ratio, i);
    double m = om.ball_mass(d, t, cfg.N);
    if (!fold_atom && d <= t) m -= om.origin_mass;  // atom already counted in closed form
    const double g =
        std::pow(std::max(m, 0.0) * std::pow(t, cfg.p - cfg.N), 1.0 / (cfg.p - 1.0)) / t;
    if (i > 0) acc += 0.5 * (g + prev_g) * (t - prev_t);
    prev_t = t;
    prev_g = g;
  }
  return W + acc;
}

// Wolff potential of a grid measure (atoms exactly, densities by cell sums).
inline double wolff_potential(const DiscreteMeasure& omega, double x, double y,
                              const WolffConfig& cfg) {
  if (omega.on_Q) throw PotentialError("wolff: expects an Omega measure");
  if (!omega.nonnegative()) throw PotentialError("wolff: measure must be nonnegative");
  std::vector<std::pair<double, double>> dw;
  for (const auto& a : omega.atoms) dw.emplace_back(std::hypot(a.x - x, a.y - y), a.w);
  double W = wolff_atoms(dw, cfg);
  if (omega.density.empty()) return W;

  const Grid& g = omega.grid;
  const double vol = g.cell_volume();
  std::vector<std::pair<double, double>> nodes;  // (distance, mass)
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      nodes.emplace_back(std::hypot(g.x(i) - x, g.y(j) - y),
                         omega.density[0][g.id(i, j)] * vol);
  std::sort(nodes.begin(), nodes.end());
  const double t0 = std::max(0.5 * g.h(), cfg.R * 1e-6);
  const int n = cfg.quad;
  const double ratio = std::pow(cfg.R / t0, 1.0 / n);
  size_t cursor = 0;
  double mass = 0.0, prev_t = t0, prev_g = 0.0, acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = t0 * std::pow(ratio, i);
    while (cursor < nodes.size() && nodes[cursor].first <= t) mass += nodes[cursor++].second;
    const double gg =
        std::pow(mass * std::pow(t, cfg.p - cfg.N), 1.0 / (cfg.p - 1.0)) / t;
    if (i > 0) acc += 0.5 * (gg + prev_g) * (t - prev_t);
    prev_t = t;
    prev_g = gg;
  }
  return W + acc;
}

// ---------------------------------------------------------------------------
// Fractional maximal operator with logarithmic correction h_eta
// ---------------------------------------------------------------------------
inline double h_eta(double t, double eta) {
  if (eta == 0.0) return 1.0;
  const double l2 = std::pow(std::log(2.0), -eta);
  if (t >= 1.0) return l2;
  return std::min(std::pow(-std::log(t), -eta), l2);
}

inline double maximal_fractional(const std::function<double(double)>& ball_mass_at, double eta,
                                 const WolffConfig& cfg) {
  const double t0 = cfg.R * 1e-6;
  const int n = std::max(cfg.quad, 400);
  const double ratio = std::pow(cfg.R / t0, 1.0 / n);
  double sup = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = t0 * std::pow(ratio, i);
    const double v = ball_mass_at(t) / (std::pow(t, cfg.N - cfg.p) * h_eta(t, eta));
    sup = std::max(sup, v);
  }
  return sup;
}

inline double maximal_fractional(const RadialMeasure& om, double d, double eta,
                                 const WolffConfig& cfg) {
  return maximal_fractional([&](double t) { return om.ball_mass(d, t, cfg.N); }, eta, cfg);
}

// ---------------------------------------------------------------------------
// Elliptic capacity c_p(K) by the obstacle/condenser energy
// ---------------------------------------------------------------------------

// Condenser ball(r_in) inside ball(R), radial solve: u = 1 on [0, r_in],
// u = 0 at R; capacity = p-energy of the minimizer.
inline double radial_condenser_capacity(double r_in, double R, double p, int N, int nodes) {
  if (r_in <= 0.0 || r_in >= R) throw PotentialError("capacity: need 0 < r_in < R");
  RadialGrid rg;
  rg.R = R;
  rg.nodes = nodes;
  rg.N = N;
  OperatorSpec op = OperatorSpec::p_laplacian(p);
  op.eps_reg = p == 2.0 ? 0.0 : 1e-9;
  VarProblem P = make_radial_problem(rg, op, AbsorptionSpec::none(), op.eps_reg);
  for (int i = 0; i < rg.nodes; ++i) {
    if (rg.r(i) <= r_in + 1e-12) {
      P.fixed[i] = 1;
      P.fixed_val[i] = 1.0;
    }
  }
  Field u = P.solve(Field(rg.nodes, 0.0), Field(rg.nodes, 0.0));
  return P.p_energy(u);
}

struct CompactSet {
  enum class Kind { Ball, Points };
  Kind kind = Kind::Points;
  double cx = 0.0, cy = 0.0, radius = 0.0;
  std::vector<std::array<double, 2>> pts;

  static CompactSet ball(double cx, double cy, double r) {
    CompactSet k;
    k.kind = Kind::Ball;
    k.cx = cx;
    k.cy = cy;
    k.radius = r;
    return k;
  }
  static CompactSet points(std::vector<std::array<double, 2>> p) {
    CompactSet k;
    k.pts = std::move(p);
    return k;
  }
};

// Cartesian obstacle problem: minimize int |grad phi|^p with phi = 1 on K's
// nodes (points are their nearest node, i.e. a ball of radius h) and phi = 0
// on the boundary.  On these sets the constraint binds exactly, so the fixed
// active set is the projected-Newton solution.
inline double elliptic_capacity(const CompactSet& K, double p, const Grid& g) {
  OperatorSpec op = OperatorSpec::p_laplacian(p);
  op.eps_reg = p == 2.0 ? 0.0 : 1e-9;
  VarProblem P = make_cartesian_problem(g, op, AbsorptionSpec::none(), op.eps_reg);
  int marked = 0;
  const auto mark = [&](int i, int j) {
    const int id = g.id(i, j);
    if (g.boundary(i, j)) throw PotentialError("capacity: K touches the boundary");
    P.fixed[id] = 1;
    P.fixed_val[id] = 1.0;
    ++marked;
  };
  if (K.kind == CompactSet::Kind::Ball) {
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (std::hypot(g.x(i) - K.cx, g.y(j) - K.cy) <= K.radius) mark(i, j);
  } else {
    for (const auto& pt : K.pts) {
      const int i = static_cast<int>(std::lround((pt[0] - g.lo[0]) / g.hx()));
      const int j =
          g.dim == 2 ? static_cast<int>(std::lround((pt[1] - g.lo[1]) / g.hy())) : 0;
      mark(std::clamp(i, 0, g.nx - 1), std::clamp(j, 0, g.ny - 1));
    }
  }
  if (marked == 0) throw PotentialError("capacity: K contains no grid node");
  Field u = P.solve(zero_field(g), zero_field(g));
  return P.p_energy(u);
}

// ---------------------------------------------------------------------------
// Bessel point criterion: points are C_{p, q/(q+1-p)}-null iff pq/(q+1-p) <= N.
// ---------------------------------------------------------------------------
struct PointCriterion {
  bool null_points = true;
  double scaling_number = 0.0;  // pq/(q+1-p), compared against N
  double pe = 0.0;
};

inline PointCriterion bessel_point_criterion(double p, int N, double q) {
  if (p >= static_cast<double>(N)) throw PotentialError("point criterion: requires p < N");
  if (q <= p - 1.0) throw PotentialError("point criterion: requires q > p - 1");
  PointCriterion c;
  c.scaling_number = p * q / (q + 1.0 - p);
  c.pe = N * (p - 1.0) / (N - p);
  c.null_points = c.scaling_number <= static_cast<double>(N);
  return c;
}

// ---------------------------------------------------------------------------
// Inequality checks
// ---------------------------------------------------------------------------

// kappa_hat = sup over r > 3h of u(r) / W[omega](r) for a radial solve.
inline double kappa_hat_radial(const RadialGrid& rg, const Field& u, const RadialMeasure& om,
                               const WolffConfig& cfg) {
  double sup = 0.0;
  for (int i = 0; i < rg.nodes - 1; ++i) {
    const double r = rg.r(i);
    if (r < 3.0 * rg.h()) continue;
    const double W = wolff_radial(om, r, cfg);
    if (W > 1e-9) sup = std::max(sup, u[i] / W);
  }
  return sup;
}

// -kappa W[omega^-] <= u <= kappa W[omega^+] as a stability check: the fitted
// ratio must agree across two resolutions within tol.
inline EstimateReport wolff_bound_check(const std::vector<double>& kappa_levels,
                                        double tol = 0.10) {
  EstimateReport rep;
  rep.name = "wolff_bound";
  rep.tolerance = tol;
  rep.lhs = kappa_levels;
  if (kappa_levels.empty() || kappa_levels.front() <= 0.0) {
    rep.degenerate = true;
    rep.pass = true;  // zero measure: trivial pass
    rep.note = "zero potential";
    return rep;
  }
  double lo = kappa_levels[0], hi = kappa_levels[0];
  for (double k : kappa_levels) {
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  rep.fitted_constant = kappa_levels.back();
  rep.pass = (hi - lo) <= tol * hi;
  return rep;
}

// W[(W[omega])^q dx] <= const * W[omega] pointwise on a sample set.
inline EstimateReport wolff_composition_check(const RadialMeasure& om, double q,
                                              const WolffConfig& cfg,
                                              const std::vector<double>& sample_d) {
  EstimateReport rep;
  rep.name = "wolff_composition";
  // inner potential as a radial density
  auto W1 = [&](double r) { return wolff_radial(om, r, cfg); };
  // integrability gate for (W[omega])^q
  {
    double mass = 0.0;
    const int n = 512;
    const double h = om.support_R / n;
    for (int i = 0; i < n; ++i) {
      const double r = (i + 0.5) * h;
      mass += std::pow(W1(r), q) * RadialGrid::sigma(cfg.N) * std::pow(r, cfg.N - 1) * h;
    }
    if (!std::isfinite(mass) || mass > 1e12) {
      rep.degenerate = true;
      rep.note = "(W[omega])^q not integrable: hypothesis violated";
      return rep;
    }
  }
  RadialMeasure inner;
  inner.density = [W1, q](double r) { return std::pow(W1(r), q); };
  inner.support_R = om.support_R;
  inner.quad_cells = 512;

  double sup_ratio = 0.0;
  for (double d : sample_d) {
    const double lhs = wolff_radial(inner, d, cfg);
    const double rhs = W1(d);
    rep.sample.push_back(d);
    rep.lhs.push_back(lhs);
    rep.bound.push_back(rhs);
    if (rhs > 1e-12) sup_ratio = std::max(sup_ratio, lhs / rhs);
  }
  rep.fitted_constant = sup_ratio;
  rep.pass = sup_ratio > 0.0 && std::isfinite(sup_ratio);
  return rep;
}

// delta_0 threshold of the exponential integrability estimate.
inline double exp_delta0(double beta, double p) {
  return std::pow(1.0 / (12.0 * beta), beta) * p * std::log(2.0);
}

inline EstimateReport exp_integrability_check(const RadialMeasure& om, double beta,
                                              double delta, const WolffConfig& cfg,
                                              double C_cal = 0.0) {
  const double d0 = exp_delta0(beta, cfg.p);
  if (delta >= d0) throw PotentialError("exp integrability: requires delta < delta_0");
  EstimateReport rep;
  rep.name = "exp_integrability";
  const double eta = beta == 1.0 ? 0.0 : (cfg.p - 1.0) * (beta - 1.0) / beta;
  double Mnorm = 0.0;
  const int ns = 24;
  for (int i = 1; i <= ns; ++i)
    Mnorm = std::max(Mnorm, maximal_fractional(om, om.support_R * i / (ns + 1.0), eta, cfg));
  Mnorm = std::max(Mnorm, maximal_fractional(om, 1e-3 * om.support_R, eta, cfg));
  if (Mnorm <= 0.0) {
    // zero measure: integral is |Omega|
    rep.fitted_constant = 0.0;
    rep.lhs = {RadialGrid::sigma(cfg.N) * std::pow(om.support_R, cfg.N) / cfg.N};
    rep.pass = true;
    return rep;
  }
  const double denom = std::pow(Mnorm, beta / (cfg.p - 1.0));
  double integral = 0.0;
  const int n = 1024;
  const double h = om.support_R / n;
  for (int i = 0; i < n; ++i) {
    const double r = (i + 0.5) * h;
    const double W = wolff_radial(om, r, cfg);
    integral +=
        std::exp(delta * std::pow(W, beta) / denom) * RadialGrid::sigma(cfg.N) *
        std::pow(r, cfg.N - 1) * h;
  }
  rep.lhs = {integral};
  rep.sample = {delta};
  rep.fitted_constant = integral * (d0 - delta);
  rep.tolerance = 0.0;
  if (C_cal > 0.0) {
    rep.bound = {C_cal / (d0 - delta)};
    rep.pass = std::isfinite(integral) && integral <= C_cal / (d0 - delta);
  } else {
    rep.pass = std::isfinite(integral);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Calibration file: fitted constants keyed by (N, p, q, beta)
// ---------------------------------------------------------------------------
struct Calibration {
  nlohmann::json data = nlohmann::json::object();

  static std::string key(int N, double p, double q = 0.0, double beta = 0.0) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "N%d_p%g_q%g_beta%g", N, p, q, beta);
    return buf;
  }

  static Calibration load(const std::string& path) {
    Calibration c;
    std::ifstream in(path);
    if (!in) throw PotentialError("calibration: cannot open " + path);
    in >> c.data;
    return c;
  }
  void save(const std::string& path) const {
    std::ofstream out(path);
    out << data.dump(2) << "\n";
  }

  double get(const std::string& k, const std::string& field, double fallback) const {
    if (data.contains(k) && data[k].contains(field)) return data[k][field].get<double>();
    return fallback;
  }
  void set(const std::string& k, const std::string& field, double v) {
    data[k][field] = v;
  }
};

}  // namespace plm
