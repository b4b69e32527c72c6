#pragma once

// Constructive iteration schemes: the potential recursion with its explicit
// thresholds, the monotone source iteration, the Picard scheme for
// subcritical source terms, the exponential-source iteration, and the
// absorption solve with its L^1 budget.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "plm/exponents.hpp"
#include "plm/grid.hpp"
#include "plm/measures.hpp"
#include "plm/potential.hpp"
#include "plm/solver.hpp"

namespace plm {

class SchemeError : public std::runtime_error {
public:
  explicit SchemeError(const std::string& m) : std::runtime_error("scheme: " + m) {}
};

// ---------------------------------------------------------------------------
// Closed-form thresholds of the potential recursion
// ---------------------------------------------------------------------------
struct Thresholds {
  double beta_p = 0.0;
  double c_p = 0.0;
  double A1 = 0.0;
  double A2 = 0.0;
  double lambda0 = 0.0;
  double b0 = 0.0;
  double delta0 = 0.0;  // exponential-case smallness threshold at beta = 1
  double M = 0.0;       // the fitted constant the thresholds are relative to
  std::string provenance;
};

inline double unit_ball_volume(int N) {
  switch (N) {
    case 1: return 2.0;
    case 2: return M_PI;
    case 3: return 4.0 * M_PI / 3.0;
    default: return std::pow(M_PI, 0.5 * N) / std::tgamma(0.5 * N + 1.0);
  }
}

inline Thresholds compute_thresholds(double p, double q, double K, double M, int N,
                                     double diam, const std::string& provenance = "calibrated") {
  if (q <= p - 1.0) throw SchemeError("thresholds: requires q > p - 1");
  if (M <= 0.0 || K <= 0.0) throw SchemeError("thresholds: requires K, M > 0");
  Thresholds t;
  t.M = M;
  t.provenance = provenance;
  t.beta_p = std::max(1.0, std::pow(3.0, (2.0 - p) / (p - 1.0)));
  t.c_p = 2.0 * std::max(1.0, std::pow(2.0, (2.0 - p) / (p - 1.0)));
  t.A1 = std::pow(std::pow(2.0, q - 1.0) * std::pow(2.0 * t.beta_p, q) * std::pow(K, q),
                  1.0 / (p - 1.0));
  const double pprime = p / (p - 1.0);
  t.A2 = t.beta_p * K * std::pow(2.0, q / (p - 1.0)) *
         std::pow(unit_ball_volume(N), 1.0 / (p - 1.0)) / pprime *
         std::pow(2.0 * diam, pprime);
  const double e1 = (p - 1.0) * (p - 1.0) / (q - p + 1.0);
  t.lambda0 = std::pow(t.A1 * M, -e1);
  t.b0 = std::pow(t.A2, -(p - 1.0) / (q - p + 1.0));
  t.delta0 = exp_delta0(1.0, p);
  return t;
}

// ---------------------------------------------------------------------------
// Iteration bookkeeping
// ---------------------------------------------------------------------------
struct IterationTrace {
  std::vector<double> sup;        // sup norm per iterate
  std::vector<double> l1_diff;    // L1 distance to the previous iterate
  std::vector<double> bound_gap;  // max over nodes of (u - bound), <= 0 when respected
  std::vector<double> K_n;        // Picard budget sequence (when used)
  bool monotone = true;
  bool bound_respected = true;
  int first_violation = -1;
  bool converged = false;
  std::string stopping_reason;
};

struct IterationResult {
  IterationTrace trace;
  SpaceTimeField u;
};

inline constexpr double kMonotoneSlack = 1e-9;
inline constexpr double kOverflowGuard = 1e100;
inline constexpr double kConvergenceRel = 1e-6;

// ---------------------------------------------------------------------------
// Potential recursion u_{m+1} = K W[u_m^q dx + omega] + b on radial samples
// ---------------------------------------------------------------------------
struct RadialIterationTrace {
  std::vector<double> sup;
  std::vector<double> sup_diff;
  bool bound_respected = true;
  int first_violation = -1;
  bool converged = false;
  std::string stopping_reason;
  std::vector<double> radii;
  Field final_u;
  Field bound;  // 2 beta_p K W[omega] + 2b at the sample radii
};

inline RadialIterationTrace potential_recursion(const RadialMeasure& om, double K, double b,
                                                double q, const WolffConfig& cfg, int m_max,
                                                int nr = 96) {
  RadialIterationTrace tr;
  const double beta_p = std::max(1.0, std::pow(3.0, (2.0 - cfg.p) / (cfg.p - 1.0)));
  const double h = om.support_R / nr;
  for (int i = 0; i < nr; ++i) tr.radii.push_back((i + 0.5) * h);

  Field Wom(nr);
  for (int i = 0; i < nr; ++i) Wom[i] = wolff_radial(om, tr.radii[i], cfg);
  tr.bound.resize(nr);
  for (int i = 0; i < nr; ++i) tr.bound[i] = 2.0 * beta_p * K * Wom[i] + 2.0 * b;

  Field u(nr, 0.0);
  for (int m = 0; m < m_max; ++m) {
    // density u^q as a radial profile via linear interpolation
    const Field uq = u;
    RadialMeasure step = om;
    auto base = om.density;
    const double R = om.support_R;
    step.density = [uq, nr, h, q, base, R](double r) {
      const double fx = std::clamp(r / h - 0.5, 0.0, static_cast<double>(nr - 1));
      const int i = std::min(static_cast<int>(fx), nr - 2);
      const double a = fx - i;
      const double uv = (1.0 - a) * uq[i] + a * uq[i + 1];
      return std::pow(std::max(uv, 0.0), q) + (base ? base(r) : 0.0);
    };
    step.quad_cells = 512;

    Field next(nr);
    double sup = 0.0, diff = 0.0, gap = -1e300;
    for (int i = 0; i < nr; ++i) {
      next[i] = K * wolff_radial(step, tr.radii[i], cfg) + b;
      sup = std::max(sup, next[i]);
      diff = std::max(diff, std::fabs(next[i] - u[i]));
      gap = std::max(gap, next[i] - tr.bound[i]);
    }
    tr.sup.push_back(sup);
    tr.sup_diff.push_back(diff);
    if (gap > 1e-9 * std::max(1.0, sup) && tr.first_violation < 0) {
      tr.bound_respected = false;
      tr.first_violation = m + 1;
    }
    u = next;
    if (sup > kOverflowGuard) {
      tr.stopping_reason = "overflow guard";
      break;
    }
    if (diff < kConvergenceRel * std::max(1.0, sup)) {
      tr.converged = true;
      tr.stopping_reason = "sup-difference below tolerance";
      break;
    }
  }
  if (tr.stopping_reason.empty()) tr.stopping_reason = "m_max reached";
  tr.final_u = u;
  return tr;
}

// ---------------------------------------------------------------------------
// Monotone source iteration: u_{m+1} solves with source u_m^q + mu
// ---------------------------------------------------------------------------
inline IterationResult monotone_source_iteration(const Grid& g, const DiscreteMeasure& mu,
                                                 const Field& u0, double q,
                                                 const OperatorSpec& op,
                                                 const Field& bound_field, int m_max = 50) {
  if (!mu.nonnegative()) throw SchemeError("monotone iteration: mu must be nonnegative");
  IterationResult res;
  IterationTrace& tr = res.trace;

  SpaceTimeField prev(g);
  double l1_first = 0.0;
  for (int m = 0; m < m_max; ++m) {
    DiscreteMeasure rhs = mu;
    if (m > 0) {
      // add the previous iterate's power as a density
      std::vector<Field> src(g.nt, zero_field(g));
      for (int n = 1; n <= g.nt; ++n)
        for (int i = 0; i < g.nodes(); ++i)
          src[n - 1][i] = std::pow(std::max(prev.at(n)[i], 0.0), q);
      if (rhs.density.empty())
        rhs.density = std::move(src);
      else {
        std::vector<Field> merged(g.nt, zero_field(g));
        for (int n = 0; n < g.nt; ++n) {
          const Field& base = rhs.density[std::min(n, rhs.density_slices() - 1)];
          for (int i = 0; i < g.nodes(); ++i) merged[n][i] = base[i] + src[n][i];
        }
        rhs.density = std::move(merged);
      }
    }
    ParabolicSolution sol = solve_parabolic(g, rhs, u0, op);

    double sup = sol.u.max_abs();
    tr.sup.push_back(sup);
    double gap = -1e300;
    for (int n = 1; n <= g.nt; ++n)
      for (int i = 0; i < g.nodes(); ++i) gap = std::max(gap, sol.u.at(n)[i] - bound_field[i]);
    tr.bound_gap.push_back(gap);
    if (gap > 1e-9 * std::max(1.0, sup) && tr.first_violation < 0) {
      tr.bound_respected = false;
      tr.first_violation = m + 1;
    }
    if (m > 0) {
      for (int n = 1; n <= g.nt; ++n)
        for (int i = 0; i < g.nodes(); ++i)
          if (sol.u.at(n)[i] < prev.at(n)[i] - kMonotoneSlack) tr.monotone = false;
      const double d = l1_distance(sol.u, prev);
      tr.l1_diff.push_back(d);
      if (d < kConvergenceRel * std::max(l1_first, 1e-300)) {
        tr.converged = true;
        tr.stopping_reason = "L1 difference below tolerance";
        res.u = sol.u;
        return res;
      }
    } else {
      double m1 = 0.0;
      for (int n = 1; n <= g.nt; ++n) m1 += l1_norm(g, sol.u.at(n));
      l1_first = m1 * g.dt();
    }
    prev = sol.u;
    if (sup > kOverflowGuard) {
      tr.stopping_reason = "overflow guard";
      break;
    }
  }
  if (tr.stopping_reason.empty()) tr.stopping_reason = "m_max reached";
  res.u = prev;
  return res;
}

// ---------------------------------------------------------------------------
// Picard iteration for subcritical source terms: rhs mu - lambda G(u_n)
// ---------------------------------------------------------------------------
inline IterationResult picard_subcritical(const Grid& g, const DiscreteMeasure& mu,
                                          const Field& u0, double lambda,
                                          const AbsorptionSpec& Gsrc, const OperatorSpec& op,
                                          int n_max = 20) {
  if (Gsrc.absorbing) throw SchemeError("picard: G must be a source term");
  const Exponents ex = compute_exponents(op.p, g.dim);
  const auto gate = subcritical_integral(Gsrc.envelope(), ex.pc);
  if (gate.divergent)
    throw SchemeError("picard: envelope is supercritical, int G(s)s^{-1-pc} diverges");

  IterationResult res;
  IterationTrace& tr = res.trace;
  const double base_mass = l1_norm(g, u0) + mu.total_variation();

  SpaceTimeField prev(g);
  double l1_first = 0.0;
  const int iters = lambda == 0.0 ? 1 : n_max;
  for (int m = 0; m < iters; ++m) {
    DiscreteMeasure rhs = mu;
    double Gl1 = 0.0;
    if (m > 0 && lambda != 0.0) {
      std::vector<Field> src(g.nt, zero_field(g));
      for (int n = 1; n <= g.nt; ++n)
        for (int i = 0; i < g.nodes(); ++i) {
          const double s = -lambda * Gsrc.G(prev.at(n)[i]);  // source: -G >= 0 for u >= 0
          src[n - 1][i] = s;
          Gl1 += std::fabs(s);
        }
      Gl1 *= g.cell_volume() * g.dt();
      if (rhs.density.empty())
        rhs.density = std::move(src);
      else {
        std::vector<Field> merged(g.nt, zero_field(g));
        for (int n = 0; n < g.nt; ++n) {
          const Field& base = rhs.density[std::min(n, rhs.density_slices() - 1)];
          for (int i = 0; i < g.nodes(); ++i) merged[n][i] = base[i] + src[n][i];
        }
        rhs.density = std::move(merged);
      }
    }
    tr.K_n.push_back(std::pow(base_mass + Gl1, (op.p + g.dim) / static_cast<double>(g.dim)));

    ParabolicSolution sol = solve_parabolic(g, rhs, u0, op);
    tr.sup.push_back(sol.u.max_abs());
    if (m > 0) {
      const double d = l1_distance(sol.u, prev);
      tr.l1_diff.push_back(d);
      if (d < kConvergenceRel * std::max(l1_first, 1e-300)) {
        tr.converged = true;
        tr.stopping_reason = "L1 difference below tolerance";
        res.u = sol.u;
        return res;
      }
    } else {
      double m1 = 0.0;
      for (int n = 1; n <= g.nt; ++n) m1 += l1_norm(g, sol.u.at(n));
      l1_first = m1 * g.dt();
    }
    prev = sol.u;
    if (tr.sup.back() > kOverflowGuard || !std::isfinite(tr.K_n.back())) {
      tr.stopping_reason = "K_n diverged at iterate " + std::to_string(m + 1);
      break;
    }
  }
  if (tr.stopping_reason.empty())
    tr.stopping_reason = lambda == 0.0 ? "single solve" : "n_max reached";
  tr.converged = tr.converged || lambda == 0.0;
  res.u = prev;
  return res;
}

// ---------------------------------------------------------------------------
// Exponential-source iteration: source E_l(tau u_m^beta) + mu
// ---------------------------------------------------------------------------
inline IterationResult exponential_iteration(const Grid& g, const DiscreteMeasure& mu,
                                             const Field& u0, double tau, double beta, int l,
                                             const OperatorSpec& op, const Field& bound_field,
                                             int m_max = 50) {
  if (l * beta <= op.p - 1.0)
    throw SchemeError("exponential iteration: requires l*beta > p - 1");
  IterationResult res;
  IterationTrace& tr = res.trace;
  const AbsorptionSpec E = AbsorptionSpec::exponential_source(tau, beta, l);

  SpaceTimeField prev(g);
  double l1_first = 0.0;
  for (int m = 0; m < m_max; ++m) {
    DiscreteMeasure rhs = mu;
    if (m > 0) {
      std::vector<Field> src(g.nt, zero_field(g));
      for (int n = 1; n <= g.nt; ++n)
        for (int i = 0; i < g.nodes(); ++i) src[n - 1][i] = -E.G(prev.at(n)[i]);
      if (rhs.density.empty())
        rhs.density = std::move(src);
      else {
        std::vector<Field> merged(g.nt, zero_field(g));
        for (int n = 0; n < g.nt; ++n) {
          const Field& base = rhs.density[std::min(n, rhs.density_slices() - 1)];
          for (int i = 0; i < g.nodes(); ++i) merged[n][i] = base[i] + src[n][i];
        }
        rhs.density = std::move(merged);
      }
    }
    ParabolicSolution sol = solve_parabolic(g, rhs, u0, op);
    const double sup = sol.u.max_abs();
    tr.sup.push_back(sup);
    double gap = -1e300;
    for (int n = 1; n <= g.nt; ++n)
      for (int i = 0; i < g.nodes(); ++i) gap = std::max(gap, sol.u.at(n)[i] - bound_field[i]);
    tr.bound_gap.push_back(gap);
    if (gap > 1e-9 * std::max(1.0, sup) && tr.first_violation < 0) {
      tr.bound_respected = false;
      tr.first_violation = m + 1;
    }
    if (m > 0) {
      for (int n = 1; n <= g.nt; ++n)
        for (int i = 0; i < g.nodes(); ++i)
          if (sol.u.at(n)[i] < prev.at(n)[i] - kMonotoneSlack) tr.monotone = false;
      const double d = l1_distance(sol.u, prev);
      tr.l1_diff.push_back(d);
      if (d < kConvergenceRel * std::max(l1_first, 1e-300)) {
        tr.converged = true;
        tr.stopping_reason = "L1 difference below tolerance";
        res.u = sol.u;
        return res;
      }
    } else {
      double m1 = 0.0;
      for (int n = 1; n <= g.nt; ++n) m1 += l1_norm(g, sol.u.at(n));
      l1_first = m1 * g.dt();
    }
    prev = sol.u;
    if (sup > kOverflowGuard) {
      tr.stopping_reason = "overflow guard";
      break;
    }
  }
  if (tr.stopping_reason.empty()) tr.stopping_reason = "m_max reached";
  res.u = prev;
  return res;
}

// ---------------------------------------------------------------------------
// Absorption solve with the L^1 budget ||G(u)||_1 <= |mu|(Q) + ||u0||_1
// ---------------------------------------------------------------------------
struct AbsorptionResult {
  ParabolicSolution sol;
  double G_l1 = 0.0;
  double budget = 0.0;
  bool budget_ok = false;
};

inline AbsorptionResult absorption_solve(const Grid& g, const DiscreteMeasure& mu,
                                         const Field& u0, const AbsorptionSpec& G,
                                         const OperatorSpec& op, double slack = 0.05) {
  if (!G.implicit_ok()) throw SchemeError("absorption_solve: G must be a monotone absorption");
  AbsorptionResult r;
  r.sol = solve_parabolic(g, mu, u0, op, G);
  double gl1 = 0.0;
  for (int n = 1; n <= g.nt; ++n)
    for (int i = 0; i < g.nodes(); ++i) gl1 += std::fabs(G.G(r.sol.u.at(n)[i]));
  r.G_l1 = gl1 * g.cell_volume() * g.dt();
  r.budget = mu.total_variation() + l1_norm(g, u0);
  r.budget_ok = r.G_l1 <= (1.0 + slack) * r.budget;
  return r;
}

}  // namespace plm
