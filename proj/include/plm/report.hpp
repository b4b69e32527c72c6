#pragma once

// Pass/fail record of one verified inequality or scaling law.

#include <cmath>
#include <string>
#include <vector>

namespace plm {

struct EstimateReport {
  std::string name;
  std::vector<double> sample;       // abscissae (k, m, n, ...)
  std::vector<double> lhs;          // measured left sides
  std::vector<double> bound;        // right sides at the same abscissae
  double fitted_constant = 0.0;
  double slope = 0.0;               // log-log fit where applicable
  double r2 = 0.0;
  bool pass = false;
  bool degenerate = false;          // fit window empty / all-zero data
  double tolerance = 0.0;
  std::string note;
};

// Least-squares line through (x_i, y_i); returns {slope, intercept, r^2}.
struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  int n = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.n = static_cast<int>(x.size());
  if (f.n < 2) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < f.n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  const double n = f.n;
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  const double sst = syy - sy * sy / n;
  double sse = 0.0;
  for (int i = 0; i < f.n; ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    sse += e * e;
  }
  f.r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  return f;
}

}  // namespace plm
