#pragma once

// Critical exponents of the evolution problem u_t - div A(x,t,grad u) + G(u) = mu
// and the subcritical tail integrals controlled by them.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace plm {

struct Exponents {
  double p = 2.0;
  int N = 1;
  double p1 = 0.0;  // lower admissible bound 2 - 1/(N+1)
  double pc = 0.0;  // Marcinkiewicz exponent for u: p - 1 + p/N
  double mc = 0.0;  // Marcinkiewicz exponent for grad u: p - N/(N+1)
  double pe = 0.0;  // elliptic critical exponent N(p-1)/(N-p), +inf for p >= N
  bool valid_range = false;         // p > p1
  bool gradient_integrable = false; // mc > 1 (equivalent to valid_range)
};

inline Exponents compute_exponents(double p, int N) {
  if (p <= 1.0) throw std::invalid_argument("compute_exponents: requires p > 1");
  if (N < 1) throw std::invalid_argument("compute_exponents: requires N >= 1");
  Exponents e;
  e.p = p;
  e.N = N;
  e.p1 = 2.0 - 1.0 / (N + 1);
  e.pc = p - 1.0 + p / N;
  e.mc = p - static_cast<double>(N) / (N + 1);
  e.pe = p < N ? N * (p - 1.0) / (N - p) : std::numeric_limits<double>::infinity();
  e.valid_range = p > e.p1;
  e.gradient_integrable = e.mc > 1.0;
  return e;
}

// Nondecreasing envelope G on [1, infinity), given in closed form so that the
// tail integrals int G(s) s^{-1-pc} ds can be handled analytically.
struct Envelope {
  enum class Kind { Zero, Power, Exponential, Tabulated };
  Kind kind = Kind::Zero;

  // Power: G(s) = c * s^q.
  double coeff = 1.0;
  double q = 1.0;

  // Exponential type: G(s) = E_l(tau * s^beta), E_l(r) = e^r - sum_{j<l} r^j/j!.
  double tau = 1.0;
  double beta = 1.0;
  int l = 1;

  // Tabulated: nondecreasing samples on [1, s_max], constant beyond s_max.
  std::vector<std::pair<double, double>> table;

  static Envelope zero() { return {}; }
  static Envelope power(double q, double coeff = 1.0) {
    Envelope e;
    e.kind = Kind::Power;
    e.q = q;
    e.coeff = coeff;
    return e;
  }
  static Envelope exponential(double tau, double beta, int l) {
    Envelope e;
    e.kind = Kind::Exponential;
    e.tau = tau;
    e.beta = beta;
    e.l = l;
    return e;
  }
  static Envelope tabulated(std::vector<std::pair<double, double>> pts) {
    Envelope e;
    e.kind = Kind::Tabulated;
    e.table = std::move(pts);
    for (size_t i = 0; i < e.table.size(); ++i) {
      if (e.table[i].second < 0.0)
        throw std::invalid_argument("envelope: negative tabulated value");
      if (i > 0 && (e.table[i].first <= e.table[i - 1].first ||
                    e.table[i].second < e.table[i - 1].second))
        throw std::invalid_argument("envelope: table must be increasing in s, nondecreasing in G");
    }
    return e;
  }

  double operator()(double s) const {
    switch (kind) {
      case Kind::Zero: return 0.0;
      case Kind::Power: return coeff * std::pow(s, q);
      case Kind::Exponential: {
        const double r = tau * std::pow(s, beta);
        double sum = 0.0, term = 1.0;
        for (int j = 0; j < l; ++j) {
          sum += term;
          term *= r / (j + 1);
        }
        return std::exp(r) - sum;
      }
      case Kind::Tabulated: {
        if (table.empty()) return 0.0;
        if (s <= table.front().first) return table.front().second;
        if (s >= table.back().first) return table.back().second;
        for (size_t i = 1; i < table.size(); ++i) {
          if (s <= table[i].first) {
            const auto& [s0, g0] = table[i - 1];
            const auto& [s1, g1] = table[i];
            return g0 + (g1 - g0) * (s - s0) / (s1 - s0);
          }
        }
        return table.back().second;
      }
    }
    return 0.0;
  }
};

// Value of a convergent integral, or a divergence verdict.
struct IntegralValue {
  bool divergent = false;
  double value = 0.0;

  static IntegralValue diverges() { return {true, 0.0}; }
  static IntegralValue of(double v) { return {false, v}; }
};

namespace detail {

// int_L^inf s^{a} ds for a < -1, else divergent.
inline IntegralValue power_tail(double coeff, double a, double L) {
  if (a >= -1.0) return IntegralValue::diverges();
  return IntegralValue::of(-coeff * std::pow(L, a + 1.0) / (a + 1.0));
}

inline constexpr double kDivergenceThreshold = 1e12;

}  // namespace detail

// int_L^infty G(s) s^{-1-pc} ds with analytic tails per envelope family.
inline IntegralValue envelope_tail_integral(const Envelope& G, double pc, double L) {
  if (L < 1.0) throw std::invalid_argument("tail integral: requires L >= 1");
  switch (G.kind) {
    case Envelope::Kind::Zero:
      return IntegralValue::of(0.0);
    case Envelope::Kind::Power:
      return detail::power_tail(G.coeff, G.q - 1.0 - pc, L);
    case Envelope::Kind::Exponential:
      // e^{tau s^beta} dominates every power for tau > 0.
      if (G.tau > 0.0) return IntegralValue::diverges();
      return IntegralValue::of(0.0);
    case Envelope::Kind::Tabulated: {
      // Piecewise-linear part by exact integration of (a + b s) s^{-1-pc},
      // constant continuation beyond the last sample.
      double total = 0.0;
      const auto seg = [&](double s0, double s1, double g0, double g1) {
        if (s1 <= L) return 0.0;
        if (s0 < L) {
          g0 = g0 + (g1 - g0) * (L - s0) / (s1 - s0);
          s0 = L;
        }
        const double b = (g1 - g0) / (s1 - s0);
        const double a = g0 - b * s0;
        // int a s^{-1-pc} + b s^{-pc}
        double r = -a / pc * (std::pow(s1, -pc) - std::pow(s0, -pc));
        if (std::fabs(pc - 1.0) < 1e-14)
          r += b * std::log(s1 / s0);
        else
          r += b / (1.0 - pc) * (std::pow(s1, 1.0 - pc) - std::pow(s0, 1.0 - pc));
        return r;
      };
      double prev_s = 1.0, prev_g = G(1.0);
      for (const auto& [s, g] : G.table) {
        if (s > prev_s) total += seg(prev_s, s, prev_g, g);
        prev_s = std::max(prev_s, s);
        prev_g = g;
      }
      const auto tail = detail::power_tail(prev_g, -1.0 - pc, std::max(prev_s, L));
      if (tail.divergent) return tail;
      total += tail.value;
      if (total > detail::kDivergenceThreshold) return IntegralValue::diverges();
      return IntegralValue::of(total);
    }
  }
  return IntegralValue::diverges();
}

// int_1^infty G(s) s^{-1-pc} ds, the subcriticality gate.
inline IntegralValue subcritical_integral(const Envelope& G, double pc) {
  return envelope_tail_integral(G, pc, 1.0);
}

// pc * M * int_L^infty G(s) s^{-1-pc} ds.
inline IntegralValue tail_bound(const Envelope& G, double M, double L, double pc) {
  auto tail = envelope_tail_integral(G, pc, L);
  if (tail.divergent) return tail;
  return IntegralValue::of(pc * M * tail.value);
}

}  // namespace plm
