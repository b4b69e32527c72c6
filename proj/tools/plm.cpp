// plm: numerical laboratory for quasilinear parabolic problems with measure
// data.  Subcommands: exponents, measures, solve, verify, wolff, capacity,
// iterate, stability.  Exit codes: 0 all verdicts pass, 2 verdict failure,
// 1 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "plm/exponents.hpp"
#include "plm/json_io.hpp"
#include "plm/lab.hpp"
#include "plm/potential.hpp"
#include "plm/schemes.hpp"
#include "plm/solver.hpp"
#include "plm/truncation.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitError = 1;
constexpr int kExitVerdict = 2;

using plm::json;

struct Common {
  std::string config;
  std::string out = "out";
  int workers = 1;
};

void add_common(CLI::App* app, Common& c, bool config_required = true) {
  auto* opt = app->add_option("--config", c.config, "config file (JSON)");
  if (config_required) opt->required();
  app->add_option("--out", c.out, "output directory");
  app->add_option("--workers", c.workers, "worker limit for per-level solves");
}

void write_json(const std::string& dir, const std::string& name, const json& j) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + name);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
int run_exponents(const Common& c, double p_flag, int N_flag) {
  double p = p_flag;
  int N = N_flag;
  if (!c.config.empty()) {
    const json j = plm::load_json(c.config);
    p = j.value("p", p);
    N = j.value("N", N);
  }
  const plm::Exponents e = plm::compute_exponents(p, N);
  json j;
  j["p"] = e.p;
  j["N"] = e.N;
  j["p1"] = e.p1;
  j["pc"] = e.pc;
  j["mc"] = e.mc;
  j["pe"] = std::isinf(e.pe) ? json("inf") : json(e.pe);
  j["valid_range"] = e.valid_range;
  j["gradient_integrable"] = e.gradient_integrable;
  std::cout << j.dump(2) << "\n";
  return kExitPass;
}

// ---------------------------------------------------------------------------
int run_measures(const Common& c, std::string mode, double eps_flag, int nmax_flag) {
  const json cfg = plm::load_json(c.config);
  if (mode.empty()) mode = cfg.value("mode", "classify");
  const double eps = eps_flag > 0.0 ? eps_flag : cfg.value("eps", 0.1);
  const int nmax = nmax_flag > 0 ? nmax_flag : cfg.value("nmax", 4);
  const plm::Grid g = plm::parse_grid(cfg.at("grid"));
  json out;
  out["mode"] = mode;

  if (mode == "classify") {
    const plm::DiscreteMeasure om = plm::parse_measure(cfg.at("measure"), g, false);
    const double p = cfg.value("p", 2.0);
    const int N = g.dim;
    const double q = cfg.value("q", -1.0);
    const plm::Classification cl = plm::classify_diffuse(om, p, N, q);
    out["atoms_elliptic_diffuse"] = cl.atoms_elliptic_diffuse;
    out["density_diffuse"] = cl.density_diffuse;
    out["has_atoms"] = cl.has_atoms;
    if (cl.q_supplied) {
      out["admissible"] = cl.admissible;
      out["scaling_number"] = cl.scaling_number;
      out["pe"] = std::isinf(cl.pe) ? json("inf") : json(cl.pe);
      out["note"] = cl.note;
    }
  } else if (mode == "decompose") {
    const plm::DiscreteMeasure mu = plm::parse_measure(cfg.at("measure"), g, true);
    const plm::Decomposition d = plm::decompose(mu, eps, cfg.value("p", 2.0));
    out["budget_total"] = d.budget_total;
    out["budget_gh"] = d.budget_gh;
    out["eps"] = eps;
    out["mass"] = mu.total_variation();
  } else if (mode == "approx") {
    const plm::DiscreteMeasure mu = plm::parse_measure(cfg.at("measure"), g, true);
    const auto steps = plm::approximation_schedule(mu, nmax, eps, cfg.value("p", 2.0));
    json js = json::array();
    for (const auto& s : steps) {
      json e;
      e["scale"] = s.scale;
      e["budget"] = s.budget;
      e["l1_to_prev"] = s.l1_to_prev;
      js.push_back(e);
    }
    out["schedule"] = js;
  } else {
    throw plm::ConfigError("unknown measures mode '" + mode + "'");
  }
  write_json(c.out, "measures.json", out);
  std::cout << out.dump(2) << "\n";
  return kExitPass;
}

// ---------------------------------------------------------------------------
int run_solve(const Common& c) {
  const json cfg = plm::load_json(c.config);
  const plm::Grid g = plm::parse_grid(cfg.at("grid"));
  const plm::OperatorSpec op = plm::parse_operator(cfg.value("operator", json::object()));
  const plm::AbsorptionSpec G = plm::parse_absorption(cfg.value("absorption", json::object()));
  const plm::DiscreteMeasure mu =
      cfg.contains("measure") ? plm::parse_measure(cfg["measure"], g, true)
                              : plm::DiscreteMeasure::zero(g);
  const plm::Field u0 = plm::parse_field(cfg, g, "u0");

  const plm::ParabolicSolution sol = plm::solve_parabolic(g, mu, u0, op, G);
  json meta;
  meta["grid"] = plm::grid_to_json(g);
  meta["eps_reg"] = sol.eps_reg;
  meta["p"] = op.p;
  meta["newton_tol"] = 1e-9;
  json iters = json::array();
  for (const auto& s : sol.steps) iters.push_back(s.iters);
  meta["newton_iters"] = iters;
  meta["semi_implicit"] = !sol.steps.empty() && sol.steps.front().semi_implicit;
  meta["config"] = cfg;
  plm::save_solution(c.out, sol.u, meta);
  return kExitPass;
}

// ---------------------------------------------------------------------------
int run_verify(const Common& c) {
  const json cfg = plm::load_json(c.config);
  const std::string solve_dir = cfg.at("solve_dir").get<std::string>();
  plm::Grid g;
  const plm::SpaceTimeField u = plm::load_solution(solve_dir, &g);
  const json meta = plm::load_json(solve_dir + "/meta.json");
  const double p = meta.value("p", 2.0);
  const plm::Exponents ex = plm::compute_exponents(p, g.dim);

  std::vector<double> k_list;
  if (cfg.contains("k_list"))
    k_list = cfg["k_list"].get<std::vector<double>>();
  else {
    const double vmax = std::max(1e-6, u.max_abs());
    for (int i = 0; i < 8; ++i) k_list.push_back(vmax * std::pow(10.0, -1.6 + 1.6 * i / 7.0));
  }

  const auto vals = plm::collect_values(u);
  const auto gvals = plm::collect_gradient_magnitudes(u);
  const plm::EstimateReport ru = plm::levelset_decay(vals, k_list, ex.pc);
  const plm::EstimateReport rg = plm::levelset_decay(gvals, k_list, ex.mc);

  json out;
  const auto rep_json = [](const plm::EstimateReport& r) {
    json j;
    j["name"] = r.name;
    j["slope"] = r.slope;
    j["r2"] = r.r2;
    j["fitted_constant"] = r.fitted_constant;
    j["pass"] = r.pass;
    j["degenerate"] = r.degenerate;
    j["tolerance"] = r.tolerance;
    j["note"] = r.note;
    return j;
  };
  out["levelset_u"] = rep_json(ru);
  out["levelset_grad"] = rep_json(rg);

  std::filesystem::create_directories(c.out);
  {
    std::ofstream csv(c.out + "/levelsets.csv");
    csv << "k,measure_u,bound_u,measure_grad,bound_grad\n";
    char buf[256];
    for (size_t i = 0; i < ru.sample.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g,%.12g\n", ru.sample[i],
                    ru.lhs[i], ru.bound[i], rg.lhs[i], rg.bound[i]);
      csv << buf;
    }
  }
  write_json(c.out, "verify.json", out);
  std::cout << out.dump(2) << "\n";
  const bool pass = (ru.pass || ru.degenerate) && (rg.pass || rg.degenerate);
  return pass ? kExitPass : kExitVerdict;
}

// ---------------------------------------------------------------------------
int run_wolff(const Common& c) {
  const json cfg = plm::load_json(c.config);
  const double p = cfg.value("p", 2.0);
  const int N = cfg.value("N", 3);
  const double R = cfg.value("R", 1.0);
  const auto wc = plm::WolffConfig::make(p, N, R);

  plm::RadialMeasure om;
  om.origin_mass = cfg.value("origin_mass", 0.0);
  om.support_R = cfg.value("support_R", R);
  if (cfg.contains("density")) {
    plm::Expr e = plm::Expr::parse(cfg["density"].get<std::string>());
    om.density = [e](double r) { return e.eval1("r", r); };
  }

  std::vector<double> samples = cfg.value("samples", std::vector<double>{});
  if (samples.empty())
    for (int i = 1; i <= 20; ++i) samples.push_back(R * i / 21.0);

  std::filesystem::create_directories(c.out);
  std::ofstream csv(c.out + "/wolff.csv");
  csv << "r,W,M_eta0\n";
  char buf[160];
  for (double d : samples) {
    const double W = plm::wolff_radial(om, d, wc);
    const double M = plm::maximal_fractional(om, d, 0.0, wc);
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", d, W, M);
    csv << buf;
  }
  return kExitPass;
}

// ---------------------------------------------------------------------------
int run_capacity(const Common& c) {
  const json cfg = plm::load_json(c.config);
  const double p = cfg.value("p", 2.0);
  json out;
  if (cfg.value("kind", "condenser") == "condenser") {
    const double r_in = cfg.value("r_in", 0.25);
    const double R = cfg.value("R", 1.0);
    const int N = cfg.value("N", 3);
    const int nodes = cfg.value("nodes", 2049);
    out["capacity"] = plm::radial_condenser_capacity(r_in, R, p, N, nodes);
    out["kind"] = "condenser";
  } else {
    const plm::Grid g = plm::parse_grid(cfg.at("grid"));
    plm::CompactSet K;
    if (cfg["set"].value("kind", "points") == "ball") {
      const auto ctr = cfg["set"]["center"].get<std::vector<double>>();
      K = plm::CompactSet::ball(ctr[0], ctr.size() > 1 ? ctr[1] : 0.0,
                                cfg["set"].value("radius", 0.1));
    } else {
      std::vector<std::array<double, 2>> pts;
      for (const auto& pt : cfg["set"]["points"]) {
        const auto v = pt.get<std::vector<double>>();
        pts.push_back({v[0], v.size() > 1 ? v[1] : 0.0});
      }
      K = plm::CompactSet::points(pts);
    }
    out["capacity"] = plm::elliptic_capacity(K, p, g);
    out["kind"] = "grid";
  }
  write_json(c.out, "capacity.json", out);
  std::cout << out.dump(2) << "\n";
  return kExitPass;
}

// ---------------------------------------------------------------------------
int run_iterate(const Common& c, std::string scheme) {
  const json cfg = plm::load_json(c.config);
  if (scheme.empty()) scheme = cfg.value("scheme", "source");
  const plm::Grid g = plm::parse_grid(cfg.at("grid"));
  const plm::OperatorSpec op = plm::parse_operator(cfg.value("operator", json::object()));
  const plm::DiscreteMeasure mu =
      cfg.contains("measure") ? plm::parse_measure(cfg["measure"], g, true)
                              : plm::DiscreteMeasure::zero(g);
  const plm::Field u0 = plm::parse_field(cfg, g, "u0");
  const int m_max = cfg.value("m_max", 50);

  std::filesystem::create_directories(c.out);
  std::ofstream csv(c.out + "/trace.csv");
  csv << "m,sup,l1_diff,bound_gap,verdict\n";
  char buf[200];
  const auto emit = [&](const plm::IterationTrace& tr) {
    for (size_t m = 0; m < tr.sup.size(); ++m) {
      const double d = m > 0 && m - 1 < tr.l1_diff.size() ? tr.l1_diff[m - 1] : 0.0;
      const double bg = m < tr.bound_gap.size() ? tr.bound_gap[m] : 0.0;
      const char* v = tr.first_violation == static_cast<int>(m + 1) ? "violated" : "ok";
      std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%s\n", m + 1, tr.sup[m], d, bg, v);
      csv << buf;
    }
  };

  bool pass = true;
  json out;
  if (scheme == "source") {
    const double q = cfg.value("q", 3.0);
    // bound field from the Wolff potential of the atom part
    const auto wc = plm::WolffConfig::make(op.p, g.dim, 2.0 * g.diameter());
    const double kappa = cfg.value("kappa", 1.0 / (2.0 * M_PI));
    const double beta_p = std::max(1.0, std::pow(3.0, (2.0 - op.p) / (op.p - 1.0)));
    plm::Field bound(g.nodes(), 0.0);
    for (int j2 = 0; j2 < g.ny; ++j2)
      for (int i = 0; i < g.nx; ++i) {
        std::vector<std::pair<double, double>> dw;
        for (const auto& a : mu.atoms)
          dw.emplace_back(
              std::max(std::hypot(g.x(i) - a.x, g.y(j2) - a.y), 0.5 * g.h()), a.w);
        bound[g.id(i, j2)] =
            2.0 * beta_p * kappa * plm::wolff_atoms(dw, wc) + 2.0 * plm::linf_norm(u0);
      }
    const auto res = plm::monotone_source_iteration(g, mu, u0, q, op, bound, m_max);
    emit(res.trace);
    pass = res.trace.converged && res.trace.monotone && res.trace.bound_respected;
    out["converged"] = res.trace.converged;
    out["monotone"] = res.trace.monotone;
    out["bound_respected"] = res.trace.bound_respected;
    out["stopping_reason"] = res.trace.stopping_reason;
  } else if (scheme == "picard") {
    const double lambda = cfg.value("lambda", 0.0);
    const plm::AbsorptionSpec G =
        plm::AbsorptionSpec::power(cfg.value("q", 1.5), 1.0, false);
    const auto res = plm::picard_subcritical(g, mu, u0, lambda, G, op, m_max);
    emit(res.trace);
    pass = res.trace.converged;
    out["converged"] = res.trace.converged;
    out["K_n"] = res.trace.K_n;
    out["stopping_reason"] = res.trace.stopping_reason;
  } else if (scheme == "exponential") {
    const double tau = cfg.value("tau", 1.0);
    const double beta = cfg.value("beta", 1.0);
    const int l = cfg.value("l", 1);
    plm::Field bound(g.nodes(), cfg.value("bound_sup", 1e9));
    const auto res = plm::exponential_iteration(g, mu, u0, tau, beta, l, op, bound, m_max);
    emit(res.trace);
    pass = res.trace.converged && res.trace.bound_respected;
    out["converged"] = res.trace.converged;
    out["bound_respected"] = res.trace.bound_respected;
    out["stopping_reason"] = res.trace.stopping_reason;
  } else if (scheme == "absorption") {
    const plm::AbsorptionSpec G = plm::parse_absorption(cfg.value("absorption", json::object()));
    const auto res = plm::absorption_solve(g, mu, u0, G, op);
    std::snprintf(buf, sizeof(buf), "1,%.12g,0,%.12g,%s\n", res.sol.u.max_abs(),
                  res.G_l1 - res.budget, res.budget_ok ? "ok" : "violated");
    csv << buf;
    pass = res.budget_ok;
    out["G_l1"] = res.G_l1;
    out["budget"] = res.budget;
    out["budget_ok"] = res.budget_ok;
  } else {
    throw plm::ConfigError("unknown scheme '" + scheme + "'");
  }
  write_json(c.out, "iterate.json", out);
  std::cout << out.dump(2) << "\n";
  return pass ? kExitPass : kExitVerdict;
}

// ---------------------------------------------------------------------------
int run_stability(const Common& c) {
  const json cfg = plm::load_json(c.config);
  const plm::Grid g = plm::parse_grid(cfg.at("grid"));
  const plm::OperatorSpec op = plm::parse_operator(cfg.value("operator", json::object()));
  const plm::AbsorptionSpec G = plm::parse_absorption(cfg.value("absorption", json::object()));
  const plm::DiscreteMeasure mu = plm::parse_measure(cfg.at("measure"), g, true);
  const plm::Field u0 = plm::parse_field(cfg, g, "u0");
  const int n_max = cfg.value("n_max", 6);
  const double eps = cfg.value("eps", 0.1);
  const std::vector<double> k_list = cfg.value("k_list", std::vector<double>{1.0, 2.0, 4.0});

  const auto fam = plm::build_perturbation_family(mu, u0, n_max, eps, op.p);
  const auto rep = plm::run_stability_experiment(fam, g, op, G, k_list, c.workers);
  plm::emit_report(rep, c.out);
  if (!rep.complete) return kExitError;
  return rep.cauchy_pass && rep.tk_pass && rep.hypotheses_ok ? kExitPass : kExitVerdict;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for parabolic problems with measure data"};
  app.require_subcommand(1);

  Common c_exp, c_meas, c_solve, c_verify, c_wolff, c_cap, c_iter, c_stab;
  double p_flag = 2.0;
  int N_flag = 2;
  std::string meas_mode, iter_scheme;
  double eps_flag = -1.0;
  int nmax_flag = -1;

  auto* s_exp = app.add_subcommand("exponents", "critical exponents for (p, N)");
  add_common(s_exp, c_exp, false);
  s_exp->add_option("--p", p_flag, "growth exponent p");
  s_exp->add_option("--N", N_flag, "space dimension");

  auto* s_meas = app.add_subcommand("measures", "classify | decompose | approx");
  add_common(s_meas, c_meas);
  s_meas->add_option("--mode", meas_mode, "classify|decompose|approx");
  s_meas->add_option("--eps", eps_flag, "decomposition budget");
  s_meas->add_option("--nmax", nmax_flag, "schedule length");

  auto* s_solve = app.add_subcommand("solve", "run the parabolic solver");
  add_common(s_solve, c_solve);

  auto* s_verify = app.add_subcommand("verify", "level-set diagnostics of a solve");
  add_common(s_verify, c_verify);

  auto* s_wolff = app.add_subcommand("wolff", "Wolff potential and maximal function");
  add_common(s_wolff, c_wolff);

  auto* s_cap = app.add_subcommand("capacity", "elliptic capacity of a compact set");
  add_common(s_cap, c_cap);

  auto* s_iter = app.add_subcommand("iterate", "iteration schemes");
  add_common(s_iter, c_iter);
  s_iter->add_option("--scheme", iter_scheme, "picard|source|exponential|absorption");

  auto* s_stab = app.add_subcommand("stability", "stability experiment");
  add_common(s_stab, c_stab);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s_exp->parsed()) return run_exponents(c_exp, p_flag, N_flag);
    if (s_meas->parsed()) return run_measures(c_meas, meas_mode, eps_flag, nmax_flag);
    if (s_solve->parsed()) return run_solve(c_solve);
    if (s_verify->parsed()) return run_verify(c_verify);
    if (s_wolff->parsed()) return run_wolff(c_wolff);
    if (s_cap->parsed()) return run_capacity(c_cap);
    if (s_iter->parsed()) return run_iterate(c_iter, iter_scheme);
    if (s_stab->parsed()) return run_stability(c_stab);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
