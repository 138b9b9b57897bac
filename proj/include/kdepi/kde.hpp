#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kernel.hpp"

namespace kdepi {

inline double kde(const std::vector<double>& data, const KernelSpec& k, double h, double x) {
  if (data.empty()) throw std::invalid_argument("kde: empty data");
  if (!(h > 0.0)) throw std::invalid_argument("kde: h must be positive");
  double s = 0.0;
  for (double xi : data) s += k((xi - x) / h);
  return s / (static_cast<double>(data.size()) * h);
}

// h^-1 { n^-1 sum K^2 - (n^-1 sum K)^2 }, clamped at 0 against rounding.
inline double variance_estimate(const std::vector<double>& data, const KernelSpec& k, double h, double x) {
  if (data.size() < 2) throw std::invalid_argument("variance_estimate: need at least 2 observations");
  if (!(h > 0.0)) throw std::invalid_argument("variance_estimate: h must be positive");
  const double nd = static_cast<double>(data.size());
  double s1 = 0.0, s2 = 0.0;
  for (double xi : data) {
    const double kv = k((xi - x) / h);
    s1 += kv;
    s2 += kv * kv;
  }
  const double m1 = s1 / nd, m2 = s2 / nd;
  return std::max(0.0, (m2 - m1 * m1) / h);
}

struct GammaFunctionals {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

inline GammaFunctionals gamma_functionals(const std::vector<double>& data, const KernelSpec& k, double h, double x) {
  if (data.empty()) throw std::invalid_argument("gamma_functionals: empty data");
  GammaFunctionals g;
  for (double xi : data) {
    const double u = (xi - x) / h;
    const double k0 = k(u), k1 = k.derivative(1, u), k2 = k.derivative(2, u);
    g.gamma1 += k1 * u + k0;
    g.gamma2 += 2.0 * k0 + 4.0 * k1 * u + k2 * u * u;
  }
  const double scale = 1.0 / (static_cast<double>(data.size()) * h);
  g.gamma1 *= scale;
  g.gamma2 *= scale;
  return g;
}

struct StatContext {
  double x = 0.0;
  double center = 0.0;
  double mu20 = 0.0;
  double h0 = 0.0;
};

inline double standardized_stat(const std::vector<double>& data, const KernelSpec& k, double h_used,
                                const StatContext& ctx) {
  if (!(h_used > 0.0)) throw std::invalid_argument("standardized_stat: h must be positive");
  if (!(ctx.mu20 > 0.0)) throw std::invalid_argument("standardized_stat: mu20 must be positive");
  const double nd = static_cast<double>(data.size());
  return std::sqrt(nd * h_used) * (kde(data, k, h_used, ctx.x) - ctx.center) / std::sqrt(ctx.mu20);
}

inline double studentized_stat(const std::vector<double>& data, const KernelSpec& k, double h_used, double x,
                               double center) {
  const double v = variance_estimate(data, k, h_used, x);
  if (!(v > 0.0)) throw std::domain_error("studentized_stat: zero variance estimate");
  const double nd = static_cast<double>(data.size());
  return std::sqrt(nd * h_used) * (kde(data, k, h_used, x) - center) / std::sqrt(v);
}

}  // namespace kdepi
