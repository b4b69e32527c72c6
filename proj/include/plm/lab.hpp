#pragma once

// Stability experiments: a perturbation family built from the approximation
// schedule, per-level solves, Cauchy diagnostics in L^1 and in the discrete
// truncated energy norm, and deterministic report emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "plm/grid.hpp"
#include "plm/measures.hpp"
#include "plm/report.hpp"
#include "plm/schemes.hpp"
#include "plm/solver.hpp"
#include "plm/truncation.hpp"

namespace plm {

struct PerturbationFamily {
  DiscreteMeasure base;
  std::vector<ScheduleStep> schedule;
  std::vector<Field> u0n;
  double eps = 0.0;
  double sup_mass = 0.0;
  bool hypotheses_ok = true;
  std::vector<std::string> hypothesis_notes;
};

inline PerturbationFamily build_perturbation_family(const DiscreteMeasure& mu, const Field& u0,
                                                    int n_max, double eps, double p = 2.0) {
  PerturbationFamily fam;
  fam.base = mu;
  fam.eps = eps;
  fam.schedule = approximation_schedule(mu, n_max, eps, p);
  fam.u0n.assign(n_max, u0);
  const double mass = mu.total_variation();
  for (const auto& s : fam.schedule) {
    fam.sup_mass = std::max(fam.sup_mass, s.budget);
    if (s.budget > (1.0 + eps) * mass + 1e-9) {
      fam.hypotheses_ok = false;
      fam.hypothesis_notes.push_back("budget exceeded at scale " + std::to_string(s.scale));
    }
    for (int n = 1; n <= mu.grid.nt; ++n) {
      for (double v : s.rho.at(n))
        if (v < 0.0) {
          fam.hypotheses_ok = false;
          fam.hypothesis_notes.push_back("negative mollified part");
          break;
        }
    }
  }
  return fam;
}

// Measure of one schedule level as a solvable right-hand side.
inline DiscreteMeasure level_measure_of(const PerturbationFamily& fam, int level) {
  const ScheduleStep& s = fam.schedule[level];
  const Grid& g = fam.base.grid;
  DiscreteMeasure m = DiscreteMeasure::zero(g, true);
  m.density.assign(g.nt, zero_field(g));
  for (int n = 0; n < g.nt; ++n)
    for (int i = 0; i < g.nodes(); ++i)
      m.density[n][i] = s.f[n][i] + s.rho.at(n + 1)[i] - s.eta.at(n + 1)[i];
  double gsum = 0.0;
  for (double v : s.gx) gsum += std::fabs(v);
  for (double v : s.gy) gsum += std::fabs(v);
  if (gsum > 0.0) {
    m.gx = s.gx;
    m.gy = s.gy;
  }
  double hsum = 0.0;
  for (const auto& sl : s.h)
    for (double v : sl) hsum += std::fabs(v);
  if (hsum > 0.0) m.timeder = s.h;
  return m;
}

// Discrete X distance of truncated fields: sup over time slices of the
// W^{1,p}-type norm of T_k(u) - T_k(v).
inline double truncated_x_distance(const SpaceTimeField& u, const SpaceTimeField& v, double k,
                                   double p) {
  double d = 0.0;
  Field diff(u.grid.nodes());
  for (int n = 1; n <= u.steps(); ++n) {
    for (int i = 0; i < u.grid.nodes(); ++i)
      diff[i] = trunc_Tk(u.at(n)[i], k) - trunc_Tk(v.at(n)[i], k);
    d = std::max(d, w1p_norm(u.grid, diff, p));
  }
  return d;
}

struct StabilityRow {
  int n = 0;
  double k = 0.0;
  double tk_dist = 0.0;
  double l1_to_limit = 0.0;
  double l1_increment = 0.0;
  double fitted_constant = 0.0;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;  // one per (n, k)
  std::vector<double> l1_increment;
  double avg_increment_ratio = 0.0;
  bool cauchy_pass = false;
  bool tk_pass = false;
  bool hypotheses_ok = true;
  bool complete = true;
  std::vector<std::string> notes;
  nlohmann::json metadata = nlohmann::json::object();
};

inline StabilityReport run_stability_experiment(const PerturbationFamily& fam, const Grid& g,
                                                const OperatorSpec& op,
                                                const AbsorptionSpec& G,
                                                const std::vector<double>& k_list,
                                                int workers = 1) {
  StabilityReport rep;
  rep.hypotheses_ok = fam.hypotheses_ok;
  for (const auto& n : fam.hypothesis_notes) rep.notes.push_back(n);

  const int n_max = static_cast<int>(fam.schedule.size());
  std::vector<SpaceTimeField> sols(n_max, SpaceTimeField(g));
  std::vector<std::string> errors(n_max);

  const auto solve_one = [&](int lv) {
    try {
      DiscreteMeasure m = level_measure_of(fam, lv);
      sols[lv] = solve_parabolic(g, m, fam.u0n[lv], op, G).u;
    } catch (const std::exception& e) {
      errors[lv] = e.what();
    }
  };
  if (workers <= 1) {
    for (int lv = 0; lv < n_max; ++lv) solve_one(lv);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(workers, n_max); ++w)
      pool.emplace_back([&] {
        for (int lv = next++; lv < n_max; lv = next++) solve_one(lv);
      });
    for (auto& t : pool) t.join();
  }
  for (int lv = 0; lv < n_max; ++lv) {
    if (!errors[lv].empty()) {
      rep.complete = false;
      rep.notes.push_back("solve failed at level " + std::to_string(lv + 1) + ": " + errors[lv]);
    }
  }
  if (!rep.complete) return rep;

  const SpaceTimeField& limit = sols[n_max - 1];
  for (int lv = 0; lv + 1 < n_max; ++lv)
    rep.l1_increment.push_back(l1_distance(sols[lv + 1], sols[lv]));

  // Cauchy verdict: successive increments shrink by >= 1.5 on average
  if (rep.l1_increment.size() >= 2) {
    double acc = 0.0;
    int cnt = 0;
    for (size_t i = 0; i + 1 < rep.l1_increment.size(); ++i) {
      if (rep.l1_increment[i + 1] > 0.0) {
        acc += rep.l1_increment[i] / rep.l1_increment[i + 1];
        ++cnt;
      }
    }
    rep.avg_increment_ratio = cnt > 0 ? acc / cnt : std::numeric_limits<double>::infinity();
    rep.cauchy_pass = rep.avg_increment_ratio >= 1.5;
  } else {
    rep.cauchy_pass = true;  // constant family: nothing to contract
    rep.avg_increment_ratio = std::numeric_limits<double>::infinity();
  }

  // per-(n,k) rows plus uniformity of level-set constants
  const Exponents ex = compute_exponents(op.p, g.dim);
  std::vector<double> klevels;
  for (double k : k_list) klevels.push_back(k);
  rep.tk_pass = true;
  for (int lv = 0; lv < n_max; ++lv) {
    const auto vals = collect_values(sols[lv]);
    std::vector<double> decay_ks;
    const double vmax = std::max(1e-6, sols[lv].max_abs());
    for (int i = 0; i < 8; ++i) decay_ks.push_back(vmax * std::pow(10.0, -1.6 + 1.6 * i / 7.0));
    const EstimateReport lr = levelset_decay(vals, decay_ks, ex.pc);
    for (double k : klevels) {
      StabilityRow row;
      row.n = lv + 1;
      row.k = k;
      row.tk_dist = truncated_x_distance(sols[lv], limit, k, op.p);
      row.l1_to_limit = l1_distance(sols[lv], limit);
      row.l1_increment = lv + 1 < n_max ? rep.l1_increment[lv] : 0.0;
      row.fitted_constant = lr.degenerate ? 0.0 : lr.fitted_constant;
      rep.rows.push_back(row);
    }
  }
  // T_k distances must decrease with n for each k
  for (double k : klevels) {
    double prev = -1.0;
    bool first = true;
    for (const auto& row : rep.rows) {
      if (row.k != k || row.n == n_max) continue;
      if (!first && row.tk_dist > prev + 1e-12) rep.tk_pass = false;
      prev = row.tk_dist;
      first = false;
    }
  }

  rep.metadata["n_max"] = n_max;
  rep.metadata["eps"] = fam.eps;
  rep.metadata["p"] = op.p;
  rep.metadata["sup_mass"] = fam.sup_mass;
  rep.metadata["k_list"] = klevels;
  rep.metadata["limit_proxy"] = "finest level";
  rep.metadata["ae_proxy"] = "L1 distance plus truncated X distance";
  return rep;
}

// ---------------------------------------------------------------------------
// Deterministic emission: CSV (one row per (n,k)) + JSON summary
// ---------------------------------------------------------------------------
inline void emit_report(const StabilityReport& rep, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir + "/stability.csv");
    csv << "n,k,tk_dist,l1_to_limit,l1_increment,fitted_constant\n";
    char buf[256];
    for (const auto& r : rep.rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.n, r.k,
                    r.tk_dist, r.l1_to_limit, r.l1_increment, r.fitted_constant);
      csv << buf;
    }
  }
  {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["cauchy_pass"] = rep.cauchy_pass;
    j["tk_pass"] = rep.tk_pass;
    j["hypotheses_ok"] = rep.hypotheses_ok;
    j["complete"] = rep.complete;
    j["avg_increment_ratio"] =
        std::isfinite(rep.avg_increment_ratio) ? rep.avg_increment_ratio : -1.0;
    j["l1_increment"] = rep.l1_increment;
    j["notes"] = rep.notes;
    j["metadata"] = rep.metadata;
    std::ofstream js(out_dir + "/summary.json");
    js << j.dump(2) << "\n";
  }
}

}  // namespace plm
