#pragma once

// Variational implicit Euler for u_t - div A(grad u) + G(u) = mu and the
// elliptic companion -div A(grad u) + G(u) = omega.  Every time step is a
// convex minimization solved by damped Newton on a sparse Hessian; the same
// machinery also runs the radial (N = 2, 3) problems used as oracles and the
// capacity obstacle problems.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "plm/exponents.hpp"
#include "plm/grid.hpp"
#include "plm/measures.hpp"
#include "plm/truncation.hpp"

namespace plm {

struct StepFailure : std::runtime_error {
  double residual;
  int time_index;
  StepFailure(double r, int n)
      : std::runtime_error("solver: Newton stalled at step " + std::to_string(n) +
                           ", residual " + std::to_string(r)),
        residual(r),
        time_index(n) {}
};

// ---------------------------------------------------------------------------
// Operator A(xi) = w(x) (|xi|^2 + eps^2)^{(p-2)/2} xi
// ---------------------------------------------------------------------------
struct OperatorSpec {
  double p = 2.0;
  double c1 = 1.0, c2 = 1.0;  // weight bounds, w == 1 for the plain p-Laplacian
  std::function<double(double, double)> weight;  // empty: w == 1
  double eps_reg = -1.0;  // < 0: chosen automatically from the data scale

  static OperatorSpec p_laplacian(double p) {
    OperatorSpec o;
    o.p = p;
    return o;
  }
  double w(double x, double y) const { return weight ? weight(x, y) : 1.0; }

  double resolve_eps(double data_scale) const {
    if (eps_reg >= 0.0) return eps_reg;
    return p == 2.0 ? 0.0 : 1e-6 * std::max(1.0, data_scale);
  }

  // A(xi) . zeta at squared gradient s = |xi|^2
  double flux_coeff(double s, double eps) const {
    return std::pow(s + eps * eps, 0.5 * p - 1.0);
  }
};

// Sampled strict monotonicity (A(xi) - A(zeta)).(xi - zeta) > 0.
inline bool monotone_check(const OperatorSpec& op, double eps = 1e-6) {
  for (double a : {-2.0, -0.5, 0.1, 1.0, 3.0}) {
    for (double b : {-1.0, 0.3, 2.5}) {
      if (a == b) continue;
      const double fa = op.flux_coeff(a * a, eps) * a;
      const double fb = op.flux_coeff(b * b, eps) * b;
      if ((fa - fb) * (a - b) <= 0.0) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Zero-order term G(u)
// ---------------------------------------------------------------------------
inline double exp_remainder(double s, int l) {  // E_l(s) = e^s - sum_{j<l} s^j/j!
  double sum = 0.0, term = 1.0;
  for (int j = 0; j < l; ++j) {
    sum += term;
    term *= s / (j + 1);
  }
  return std::exp(s) - sum;
}

struct AbsorptionSpec {
  enum class Kind { None, Power, Exponential, Custom };
  Kind kind = Kind::None;
  double lambda = 1.0;
  bool absorbing = true;  // G(r) r >= 0; false: source term, G(r) r <= 0

  double q = 1.0;  // Power: G(r) = sign * lambda |r|^{q-1} r

  double tau = 1.0;  // Exponential source: G(r) = -lambda E_l(tau r_+^beta)
  double beta = 1.0;
  int l = 1;

  std::function<double(double)> custom_G;   // value
  std::function<double(double)> custom_dG;  // derivative

  static AbsorptionSpec none() { return {}; }
  static AbsorptionSpec power(double q, double lambda = 1.0, bool absorbing = true) {
    AbsorptionSpec a;
    a.kind = Kind::Power;
    a.q = q;
    a.lambda = lambda;
    a.absorbing = absorbing;
    return a;
  }
  static AbsorptionSpec exponential_source(double tau, double beta, int l, double lambda = 1.0) {
    AbsorptionSpec a;
    a.kind = Kind::Exponential;
    a.tau = tau;
    a.beta = beta;
    a.l = l;
    a.lambda = lambda;
    a.absorbing = false;
    return a;
  }

  bool none_kind() const { return kind == Kind::None; }

  double G(double r) const {
    const double sg = absorbing ? 1.0 : -1.0;
    switch (kind) {
      case Kind::None: return 0.0;
      case Kind::Power: return sg * lambda * std::pow(std::fabs(r), q - 1.0) * r;
      case Kind::Exponential:
        return -lambda * exp_remainder(tau * std::pow(std::max(r, 0.0), beta), l);
      case Kind::Custom: return custom_G ? custom_G(r) : 0.0;
    }
    return 0.0;
  }
  double dG(double r) const {
    switch (kind) {
      case Kind::None: return 0.0;
      case Kind::Power:
        return (absorbing ? 1.0 : -1.0) * lambda * q * std::pow(std::fabs(r), q - 1.0);
      case Kind::Exponential: {
        const double rp = std::max(r, 0.0);
        if (beta == 1.0) return -lambda * tau * exp_remainder(tau * rp, std::max(l - 1, 0));
        return -lambda * exp_remainder(tau * std::pow(rp, beta), std::max(l - 1, 0)) * tau *
               beta * std::pow(rp, beta - 1.0);
      }
      case Kind::Custom: return custom_dG ? custom_dG(r) : 0.0;
    }
    return 0.0;
  }
  double Gbar(double r) const {  // antiderivative with Gbar(0) = 0
    if (kind == Kind::Power)
      return (absorbing ? 1.0 : -1.0) * lambda * std::pow(std::fabs(r), q + 1.0) / (q + 1.0);
    return 0.0;  // only the implicit (absorbing power) path needs Gbar
  }

  // Implicit treatment requires convex Gbar, i.e. monotone G.
  bool implicit_ok() const {
    return kind == Kind::None || (kind == Kind::Power && absorbing);
  }

  Envelope envelope() const {
    switch (kind) {
      case Kind::None: return Envelope::zero();
      case Kind::Power: return Envelope::power(q, lambda);
      case Kind::Exponential: return Envelope::exponential(tau, beta, l);
      case Kind::Custom: return Envelope::zero();
    }
    return Envelope::zero();
  }
};

// ---------------------------------------------------------------------------
// Generic variational problem: min over u of
//   sum_i mass_i (u_i - uprev_i)^2 / 2 + sum_samples vol w/p (|xi|^2+eps^2)^{p/2}
//   - sum_i load_i u_i + sum_i gvol_i Gbar(u_i)
// with xi = (sum_k ax_k u_{idx_k}, sum_k ay_k u_{idx_k}) and fixed-value nodes.
// ---------------------------------------------------------------------------
struct EnergySample {
  int idx[3] = {0, 0, 0};
  int nn = 2;
  double ax[3] = {0, 0, 0};
  double ay[3] = {0, 0, 0};
  double vol = 0.0;
  double wmul = 1.0;
  int unode = 0;  // node whose value the sample is attached to (quadrature point)
};

struct NewtonOptions {
  double tol = 1e-9;
  int max_iter = 200;
};

struct StepInfo {
  int iters = 0;
  double residual = 0.0;
  bool semi_implicit = false;
};

class VarProblem {
public:
  int n = 0;
  std::vector<EnergySample> samples;
  std::vector<double> mass;       // mass_i (vol/dt for parabolic steps, 0 elliptic)
  std::vector<double> gvol;       // nodal volume for the zero-order term
  std::vector<char> fixed;        // Dirichlet mask
  std::vector<double> fixed_val;  // values at fixed nodes
  OperatorSpec op;
  AbsorptionSpec zero_order;
  double eps = 0.0;
  NewtonOptions opts;

  Field solve(const Field& u_prev, Field load, StepInfo* info = nullptr,
              int time_index = 0) const {
    Field u = u_prev;
    for (int i = 0; i < n; ++i)
      if (fixed[i]) u[i] = fixed_val[i];

    const bool semi = !zero_order.none_kind() && !zero_order.implicit_ok();
    if (semi) {
      for (int i = 0; i < n; ++i) load[i] -= gvol[i] * zero_order.G(u_prev[i]);
    }
    const AbsorptionSpec& Gimp = semi ? kNone : zero_order;

    double scale = 1.0;
    for (int i = 0; i < n; ++i)
      scale = std::max({scale, std::fabs(load[i]), mass[i] * std::fabs(u_prev[i])});
    const double tol = opts.tol * scale;

    std::vector<int> free_id(n, -1);
    std::vector<int> free_nodes;
    for (int i = 0; i < n; ++i) {
      if (!fixed[i]) {
        free_id[i] = static_cast<int>(free_nodes.size());
        free_nodes.push_back(i);
      }
    }
    const int nf = static_cast<int>(free_nodes.size());
    if (nf == 0) return u;

    Eigen::VectorXd g(nf);
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::SparseMatrix<double> H(nf, nf);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;

    double res = 0.0;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
      assemble(u, u_prev, load, Gimp, free_id, g, trip);
      res = g.lpNorm<Eigen::Infinity>();
      if (res <= tol) break;
      H.setFromTriplets(trip.begin(), trip.end());
      chol.compute(H);
      if (chol.info() != Eigen::Success) throw StepFailure(res, time_index);
      Eigen::VectorXd d = chol.solve(-g);

      const double J0 = objective(u, u_prev, load, Gimp);
      const double slope = g.dot(d);
      double t = 1.0;
      Field trial = u;
      bool ok = false;
      for (int ls = 0; ls < 40; ++ls) {
        for (int k = 0; k < nf; ++k) trial[free_nodes[k]] = u[free_nodes[k]] + t * d[k];
        if (objective(trial, u_prev, load, Gimp) <= J0 + 1e-4 * t * slope) {
          ok = true;
          break;
        }
        t *= 0.5;
      }
      if (!ok) throw StepFailure(res, time_index);
      u = trial;
    }
    if (res > tol) throw StepFailure(res, time_index);
    if (info) {
      info->iters = it;
      info->residual = res;
      info->semi_implicit = semi;
    }
    return u;
  }

  double objective(const Field& u, const Field& u_prev, const Field& load,
                   const AbsorptionSpec& G) const {
    double J = 0.0;
    for (int i = 0; i < n; ++i) {
      const double du = u[i] - u_prev[i];
      J += 0.5 * mass[i] * du * du - load[i] * u[i] + gvol[i] * G.Gbar(u[i]);
    }
    const double e2 = eps * eps;
    for (const auto& s : samples) {
      double gx = 0.0, gy = 0.0;
      for (int k = 0; k < s.nn; ++k) {
        gx += s.ax[k] * u[s.idx[k]];
        gy += s.ay[k] * u[s.idx[k]];
      }
      J += s.vol * s.wmul / op.p * std::pow(gx * gx + gy * gy + e2, 0.5 * op.p);
    }
    return J;
  }

  // Total p-energy sum vol w |grad u|^p (used for capacities).
  double p_energy(const Field& u) const {
    double E = 0.0;
    for (const auto& s : samples) {
      double gx = 0.0, gy = 0.0;
      for (int k = 0; k < s.nn; ++k) {
        gx += s.ax[k] * u[s.idx[k]];
        gy += s.ay[k] * u[s.idx[k]];
      }
      E += s.vol * s.wmul * std::pow(gx * gx + gy * gy, 0.5 * op.p);
    }
    return E;
  }

private:
  static inline const AbsorptionSpec kNone{};

  void assemble(const Field& u, const Field& u_prev, const Field& load,
                const AbsorptionSpec& G, const std::vector<int>& free_id, Eigen::VectorXd& g,
                std::vector<Eigen::Triplet<double>>& trip) const {
    g.setZero();
    trip.clear();
    for (int i = 0; i < n; ++i) {
      const int fi = free_id[i];
      if (fi < 0) continue;
      g[fi] += mass[i] * (u[i] - u_prev[i]) - load[i] + gvol[i] * G.G(u[i]);
      const double d = mass[i] + gvol[i] * G.dG(u[i]);
      if (d != 0.0) trip.emplace_back(fi, fi, d);
    }
    const double e2 = eps * eps;
    for (const auto& s : samples) {
      double gx = 0.0, gy = 0.0;
      for (int k = 0; k < s.nn; ++k) {
        gx += s.ax[k] * u[s.idx[k]];
        gy += s.ay[k] * u[s.idx[k]];
      }
      const double sq = gx * gx + gy * gy;
      const double m = s.wmul * std::pow(sq + e2, 0.5 * op.p - 1.0);
      const double c =
          s.wmul * (op.p - 2.0) * (sq + e2 > 0.0 ? std::pow(sq + e2, 0.5 * op.p - 2.0) : 0.0);
      for (int k = 0; k < s.nn; ++k) {
        const int fk = free_id[s.idx[k]];
        const double bk_xi = s.ax[k] * gx + s.ay[k] * gy;
        if (fk >= 0) g[fk] += s.vol * m * bk_xi;
        for (int l2 = 0; l2 < s.nn; ++l2) {
          const int fl = free_id[s.idx[l2]];
          if (fk < 0 || fl < 0) continue;
          const double bb = s.ax[k] * s.ax[l2] + s.ay[k] * s.ay[l2];
          const double bl_xi = s.ax[l2] * gx + s.ay[l2] * gy;
          trip.emplace_back(fk, fl, s.vol * (m * bb + c * bk_xi * bl_xi));
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Cartesian problems
// ---------------------------------------------------------------------------
inline VarProblem make_cartesian_problem(const Grid& g, const OperatorSpec& op,
                                         const AbsorptionSpec& G, double eps) {
  VarProblem P;
  P.n = g.nodes();
  P.op = op;
  P.zero_order = G;
  P.eps = eps;
  P.mass.assign(P.n, 0.0);
  P.gvol.assign(P.n, g.cell_volume());
  P.fixed.assign(P.n, 0);
  P.fixed_val.assign(P.n, 0.0);
  for (int i = 0; i < P.n; ++i)
    if (g.boundary_id(i)) P.fixed[i] = 1;

  const double hx = g.hx();
  if (g.dim == 1) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      EnergySample s;
      s.nn = 2;
      s.idx[0] = i;
      s.idx[1] = i + 1;
      s.ax[0] = -1.0 / hx;
      s.ax[1] = 1.0 / hx;
      s.vol = hx;
      s.wmul = op.w(g.x(i) + 0.5 * hx, 0.0);
      s.unode = i;
      P.samples.push_back(s);
    }
    return P;
  }
  const double hy = g.hy();
  const double w = hx * hy / 4.0;
  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      const int n00 = g.id(i, j), n10 = g.id(i + 1, j), n01 = g.id(i, j + 1),
                n11 = g.id(i + 1, j + 1);
      const double wm = op.w(g.x(i) + 0.5 * hx, g.y(j) + 0.5 * hy);
      const auto corner = [&](int node, int xa, int xb, int ya, int yb) {
        EnergySample s;
        s.vol = w;
        s.wmul = wm;
        s.unode = node;
        // gx = (u_xb - u_xa)/hx, gy = (u_yb - u_ya)/hy; collect coefficients
        // over the three distinct nodes of the corner stencil
        int ids[4] = {xa, xb, ya, yb};
        double cx[4] = {-1.0 / hx, 1.0 / hx, 0.0, 0.0};
        double cy[4] = {0.0, 0.0, -1.0 / hy, 1.0 / hy};
        int m = 0;
        for (int a = 0; a < 4; ++a) {
          int found = -1;
          for (int b = 0; b < m; ++b)
            if (s.idx[b] == ids[a]) found = b;
          if (found < 0) {
            s.idx[m] = ids[a];
            s.ax[m] = cx[a];
            s.ay[m] = cy[a];
            ++m;
          } else {
            s.ax[found] += cx[a];
            s.ay[found] += cy[a];
          }
        }
        s.nn = m;
        P.samples.push_back(s);
      };
      corner(n00, n00, n10, n00, n01);
      corner(n10, n00, n10, n10, n11);
      corner(n01, n01, n11, n00, n01);
      corner(n11, n01, n11, n10, n11);
    }
  }
  return P;
}

struct ParabolicSolution {
  SpaceTimeField u;
  std::vector<StepInfo> steps;
  double eps_reg = 0.0;
};

inline Field implicit_step(const Grid& g, const Field& u_prev, double dt, const Field& slice_mass,
                           const OperatorSpec& op, const AbsorptionSpec& G, double eps,
                           StepInfo* info = nullptr, int time_index = 0) {
  VarProblem P = make_cartesian_problem(g, op, G, eps);
  const double vol = g.cell_volume();
  for (int i = 0; i < P.n; ++i) P.mass[i] = vol / dt;
  Field load(slice_mass);
  for (double& v : load) v /= dt;  // measure mass of the slice enters as mass/dt
  return P.solve(u_prev, load, info, time_index);
}

inline ParabolicSolution solve_parabolic(const Grid& g, const DiscreteMeasure& mu,
                                         const Field& u0, const OperatorSpec& op,
                                         const AbsorptionSpec& G = AbsorptionSpec::none()) {
  if (!mu.on_Q) throw std::invalid_argument("solve_parabolic: expects a Q measure");
  const double eps = op.resolve_eps(std::max(linf_norm(u0), mu.total_variation()));
  ParabolicSolution sol;
  sol.u = SpaceTimeField(g);
  sol.eps_reg = eps;
  sol.u.at(0) = u0;
  for (int i = 0; i < g.nodes(); ++i)
    if (g.boundary_id(i)) sol.u.at(0)[i] = 0.0;
  const double dt = g.dt();
  for (int n = 1; n <= g.nt; ++n) {
    StepInfo info;
    sol.u.at(n) =
        implicit_step(g, sol.u.at(n - 1), dt, mu.slice_load(n), op, G, eps, &info, n);
    sol.steps.push_back(info);
  }
  return sol;
}

struct EllipticSolution {
  Field u;
  StepInfo info;
  double eps_reg = 0.0;
};

inline EllipticSolution solve_elliptic(const Grid& g, const DiscreteMeasure& omega,
                                       const OperatorSpec& op,
                                       const AbsorptionSpec& G = AbsorptionSpec::none()) {
  if (omega.on_Q) throw std::invalid_argument("solve_elliptic: expects an Omega measure");
  const double eps = op.resolve_eps(omega.total_variation());
  VarProblem P = make_cartesian_problem(g, op, G, eps);
  EllipticSolution sol;
  sol.eps_reg = eps;
  sol.u = P.solve(zero_field(g), omega.omega_load(), &sol.info);
  return sol;
}

// ---------------------------------------------------------------------------
// Radial problems on (0, R) with weight sigma_N r^{N-1}
// ---------------------------------------------------------------------------
struct RadialGrid {
  double R = 1.0;
  int nodes = 256;
  int N = 3;

  double h() const { return R / (nodes - 1); }
  double r(int i) const { return i * h(); }
  static double sigma(int N) { return N == 3 ? 4.0 * M_PI : 2.0 * M_PI; }

  // sigma_N * int r^{N-1} over the dual cell of node i (clipped to [0, R])
  double node_volume(int i) const {
    const double a = std::max(0.0, r(i) - 0.5 * h());
    const double b = std::min(R, r(i) + 0.5 * h());
    return sigma(N) * (std::pow(b, N) - std::pow(a, N)) / N;
  }
  // sigma_N * int r^{N-1} over cell i (between nodes i and i+1)
  double cell_volume(int i) const {
    return sigma(N) * (std::pow(r(i + 1), N) - std::pow(r(i), N)) / N;
  }
};

inline VarProblem make_radial_problem(const RadialGrid& rg, const OperatorSpec& op,
                                      const AbsorptionSpec& G, double eps) {
  VarProblem P;
  P.n = rg.nodes;
  P.op = op;
  P.zero_order = G;
  P.eps = eps;
  P.mass.assign(P.n, 0.0);
  P.gvol.resize(P.n);
  for (int i = 0; i < P.n; ++i) P.gvol[i] = rg.node_volume(i);
  P.fixed.assign(P.n, 0);
  P.fixed_val.assign(P.n, 0.0);
  P.fixed[P.n - 1] = 1;  // Dirichlet at r = R only; r = 0 is a natural boundary
  const double h = rg.h();
  for (int i = 0; i + 1 < rg.nodes; ++i) {
    EnergySample s;
    s.nn = 2;
    s.idx[0] = i;
    s.idx[1] = i + 1;
    s.ax[0] = -1.0 / h;
    s.ax[1] = 1.0 / h;
    s.vol = rg.cell_volume(i);
    P.samples.push_back(s);
  }
  return P;
}

// Load with a point mass at the origin plus an optional radial density.
inline Field radial_load(const RadialGrid& rg, double origin_mass,
                         const std::function<double(double)>& density = {}) {
  Field load(rg.nodes, 0.0);
  load[0] = origin_mass;
  if (density)
    for (int i = 0; i < rg.nodes; ++i) load[i] += density(rg.r(i)) * rg.node_volume(i);
  return load;
}

inline EllipticSolution radial_solve_elliptic(const RadialGrid& rg, const Field& load,
                                              const OperatorSpec& op,
                                              const AbsorptionSpec& G = AbsorptionSpec::none()) {
  double mass = 0.0;
  for (double v : load) mass += std::fabs(v);
  const double eps = op.resolve_eps(mass);
  VarProblem P = make_radial_problem(rg, op, G, eps);
  EllipticSolution sol;
  sol.eps_reg = eps;
  sol.u = P.solve(Field(rg.nodes, 0.0), load, &sol.info);
  return sol;
}

// Radial parabolic march (used by absorption sweeps).
inline ParabolicSolution radial_solve_parabolic(const RadialGrid& rg, double T, int nt,
                                                const Field& slice_mass, const Field& u0,
                                                const OperatorSpec& op,
                                                const AbsorptionSpec& G) {
  double mass = 0.0;
  for (double v : slice_mass) mass += std::fabs(v);
  const double eps = op.resolve_eps(std::max(linf_norm(u0), mass * T));
  const double dt = T / nt;
  VarProblem P = make_radial_problem(rg, op, G, eps);
  for (int i = 0; i < P.n; ++i) P.mass[i] = rg.node_volume(i) / dt;

  Grid meta = Grid::interval(0.0, rg.R, rg.nodes, T, nt);
  ParabolicSolution sol;
  sol.u = SpaceTimeField(meta);
  sol.eps_reg = eps;
  sol.u.at(0) = u0;
  sol.u.at(0)[rg.nodes - 1] = 0.0;
  for (int n = 1; n <= nt; ++n) {
    StepInfo info;
    sol.u.at(n) = P.solve(sol.u.at(n - 1), slice_mass, &info, n);
    sol.steps.push_back(info);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Renormalized weak-form defect with smoothed truncations
// ---------------------------------------------------------------------------
struct ResidualEntry {
  double k = 0.0;  // truncation level (inf for identity)
  int test_index = 0;
  double defect = 0.0;
};

inline std::vector<ResidualEntry> weak_residual(
    const SpaceTimeField& u, const DiscreteMeasure& mu, const Field& u0,
    const OperatorSpec& op, const AbsorptionSpec& G,
    const std::vector<std::function<double(double, double, double)>>& tests,
    const std::vector<double>& k_list, double eps) {
  const Grid& g = u.grid;
  const double dt = g.dt();
  const double vol = g.cell_volume();
  std::vector<ResidualEntry> out;
  const VarProblem P = make_cartesian_problem(g, op, AbsorptionSpec::none(), eps);

  struct STrunc {
    double k;
    std::function<double(double)> S, S1, S2;
  };
  std::vector<STrunc> trs;
  for (double k : k_list) {
    if (std::isinf(k)) {
      trs.push_back({k, [](double r) { return r; }, [](double) { return 1.0; },
                     [](double) { return 0.0; }});
    } else {
      auto s = std::make_shared<SmoothTruncation>(k);
      trs.push_back({k, [s](double r) { return s->value(r); },
                     [s](double r) { return s->d1(r); }, [s](double r) { return s->d2(r); }});
    }
  }

  for (size_t ti = 0; ti < tests.size(); ++ti) {
    // nodal psi per slice
    std::vector<Field> psi(g.nt + 1, zero_field(g));
    for (int n = 0; n <= g.nt; ++n)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) psi[n][g.id(i, j)] = tests[ti](g.x(i), g.y(j), n * dt);

    for (const auto& S : trs) {
      double lhs = 0.0;
      // time term: sum (S(u^n) - S(u^{n-1})) psi^n vol, with u^0 = u0
      for (int n = 1; n <= g.nt; ++n) {
        const Field& un = u.at(n);
        const Field& um = n == 1 ? u0 : u.at(n - 1);
        for (int i = 0; i < g.nodes(); ++i)
          lhs += (S.S(un[i]) - S.S(um[i])) * psi[n][i] * vol;
      }
      // gradient terms over the solver's own stencils
      for (int n = 1; n <= g.nt; ++n) {
        for (const auto& s : P.samples) {
          double gx = 0.0, gy = 0.0, px = 0.0, py = 0.0;
          for (int k2 = 0; k2 < s.nn; ++k2) {
            gx += s.ax[k2] * u.at(n)[s.idx[k2]];
            gy += s.ay[k2] * u.at(n)[s.idx[k2]];
            px += s.ax[k2] * psi[n][s.idx[k2]];
            py += s.ay[k2] * psi[n][s.idx[k2]];
          }
          const double uval = u.at(n)[s.unode];
          const double pval = psi[n][s.unode];
          const double m = s.wmul * op.flux_coeff(gx * gx + gy * gy, eps);
          lhs += dt * s.vol * S.S1(uval) * m * (gx * px + gy * py);
          lhs += dt * s.vol * S.S2(uval) * pval * m * (gx * gx + gy * gy);
        }
        for (int i = 0; i < g.nodes(); ++i)
          lhs += dt * vol * G.G(u.at(n)[i]) * S.S1(u.at(n)[i]) * psi[n][i];
      }
      // rhs: int S'(u) psi dmu
      double rhs = 0.0;
      for (int n = 1; n <= g.nt; ++n) {
        const Field load = mu.slice_load(n);
        for (int i = 0; i < g.nodes(); ++i) rhs += load[i] * S.S1(u.at(n)[i]) * psi[n][i];
      }
      out.push_back({S.k, static_cast<int>(ti), std::fabs(lhs - rhs)});
    }
  }
  return out;
}

}  // namespace plm
