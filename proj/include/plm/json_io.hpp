#pragma once

// Config ingestion (JSON) and solve-output serialization shared by the CLI
// subcommands.

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plm/expr.hpp"
#include "plm/grid.hpp"
#include "plm/measures.hpp"
#include "plm/solver.hpp"

namespace plm {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& m) : std::runtime_error("config: " + m) {}
};

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json j;
  in >> j;
  return j;
}

inline Grid parse_grid(const json& j) {
  const int dim = j.value("dim", 1);
  const double T = j.value("T", 1.0);
  const int nt = j.value("nt", 1);
  if (dim == 1) {
    const auto lo = j.value("lo", std::vector<double>{0.0});
    const auto hi = j.value("hi", std::vector<double>{1.0});
    return Grid::interval(lo[0], hi[0], j.value("nx", 65), T, nt);
  }
  const auto lo = j.value("lo", std::vector<double>{-1.0, -1.0});
  const auto hi = j.value("hi", std::vector<double>{1.0, 1.0});
  return Grid::box(lo[0], hi[0], lo[1], hi[1], j.value("nx", 65), j.value("ny", 65), T, nt);
}

inline OperatorSpec parse_operator(const json& j) {
  OperatorSpec op = OperatorSpec::p_laplacian(j.value("p", 2.0));
  op.eps_reg = j.value("eps_reg", -1.0);
  op.c1 = j.value("c1", 1.0);
  op.c2 = j.value("c2", 1.0);
  if (j.contains("weight")) {
    Expr e = Expr::parse(j["weight"].get<std::string>());
    op.weight = [e](double x, double y) {
      Expr::Env env{{"x", x}, {"y", y}};
      return e.eval(env);
    };
  }
  return op;
}

inline AbsorptionSpec parse_absorption(const json& j) {
  const std::string kind = j.value("kind", "none");
  if (kind == "none") return AbsorptionSpec::none();
  if (kind == "power")
    return AbsorptionSpec::power(j.value("q", 2.0), j.value("lambda", 1.0),
                                 j.value("absorbing", true));
  if (kind == "exponential")
    return AbsorptionSpec::exponential_source(j.value("tau", 1.0), j.value("beta", 1.0),
                                              j.value("l", 1), j.value("lambda", 1.0));
  throw ConfigError("unknown absorption kind '" + kind + "'");
}

inline Field load_field_csv(const Grid& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file " + path);
  Field f;
  double v;
  while (in >> v) f.push_back(v);
  if (static_cast<int>(f.size()) != g.nodes())
    throw ConfigError("grid file size mismatch: " + path);
  return f;
}

// Measure description: {atoms:[{x:[..],t?:..,w:..,singular?:..}],
//                       density:"expr"|"file.csv", profile:"expr", T:..}
inline DiscreteMeasure parse_measure(const json& j, const Grid& g, bool on_Q = true) {
  DiscreteMeasure m = DiscreteMeasure::zero(g, on_Q);
  TimeProfile profile;
  if (j.contains("profile")) profile.expr = Expr::parse(j["profile"].get<std::string>());
  if (j.contains("atoms")) {
    for (const auto& ja : j["atoms"]) {
      Atom a;
      const auto x = ja["x"].get<std::vector<double>>();
      a.x = x[0];
      a.y = x.size() > 1 ? x[1] : 0.0;
      a.w = ja.value("w", 1.0);
      a.singular = ja.value("singular", false);
      if (ja.contains("t")) {
        a.has_time = true;
        a.t = ja["t"].get<double>();
      } else {
        a.profile = profile;
      }
      m.atoms.push_back(a);
    }
  }
  if (j.contains("density")) {
    const std::string d = j["density"].get<std::string>();
    if (d.size() > 4 && d.substr(d.size() - 4) == ".csv") {
      m.density.assign(1, load_field_csv(g, d));
    } else {
      Expr e = Expr::parse(d);
      const int ns = on_Q ? g.nt : 1;
      m.density.assign(ns, zero_field(g));
      for (int n = 0; n < ns; ++n) {
        const double t = on_Q ? (n + 0.5) * g.dt() : 0.0;
        for (int jj = 0; jj < g.ny; ++jj)
          for (int i = 0; i < g.nx; ++i) {
            Expr::Env env{{"x", g.x(i)}, {"y", g.y(jj)}, {"t", t}};
            m.density[n][g.id(i, jj)] = e.eval(env);
          }
      }
    }
  }
  return m;
}

inline Field parse_field(const json& j, const Grid& g, const std::string& key) {
  if (!j.contains(key)) return zero_field(g);
  const std::string s = j[key].get<std::string>();
  if (s.size() > 4 && s.substr(s.size() - 4) == ".csv") return load_field_csv(g, s);
  Expr e = Expr::parse(s);
  return sample_field(g, [&](double x, double y) {
    Expr::Env env{{"x", x}, {"y", y}};
    return e.eval(env);
  });
}

// ---------------------------------------------------------------------------
// Solve output: flat binary snapshots + CSV index + metadata
// ---------------------------------------------------------------------------
inline void save_solution(const std::string& dir, const SpaceTimeField& u, const json& meta) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream bin(dir + "/u.bin", std::ios::binary);
    for (int n = 0; n <= u.steps(); ++n)
      bin.write(reinterpret_cast<const char*>(u.at(n).data()),
                static_cast<std::streamsize>(u.at(n).size() * sizeof(double)));
  }
  {
    std::ofstream idx(dir + "/index.csv");
    idx << "slice,t,offset_doubles,count\n";
    char buf[128];
    for (int n = 0; n <= u.steps(); ++n) {
      std::snprintf(buf, sizeof(buf), "%d,%.12g,%zu,%zu\n", n, u.time(n),
                    static_cast<size_t>(n) * u.at(0).size(), u.at(0).size());
      idx << buf;
    }
  }
  {
    std::ofstream js(dir + "/meta.json");
    js << meta.dump(2) << "\n";
  }
}

inline SpaceTimeField load_solution(const std::string& dir, Grid* grid_out = nullptr) {
  const json meta = load_json(dir + "/meta.json");
  const Grid g = parse_grid(meta.at("grid"));
  SpaceTimeField u(g);
  std::ifstream bin(dir + "/u.bin", std::ios::binary);
  if (!bin) throw ConfigError("cannot open " + dir + "/u.bin");
  for (int n = 0; n <= u.steps(); ++n)
    bin.read(reinterpret_cast<char*>(u.at(n).data()),
             static_cast<std::streamsize>(u.at(n).size() * sizeof(double)));
  if (!bin) throw ConfigError("truncated solution file in " + dir);
  if (grid_out) *grid_out = g;
  return u;
}

inline json grid_to_json(const Grid& g) {
  json j;
  j["dim"] = g.dim;
  j["lo"] = g.dim == 2 ? std::vector<double>{g.lo[0], g.lo[1]} : std::vector<double>{g.lo[0]};
  j["hi"] = g.dim == 2 ? std::vector<double>{g.hi[0], g.hi[1]} : std::vector<double>{g.hi[0]};
  j["nx"] = g.nx;
  if (g.dim == 2) j["ny"] = g.ny;
  j["T"] = g.T;
  j["nt"] = g.nt;
  return j;
}

}  // namespace plm
