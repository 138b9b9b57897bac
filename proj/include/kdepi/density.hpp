#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kernel.hpp"
#include "numerics.hpp"

namespace kdepi {

struct MixtureComponent {
  double weight;
  double mean;
  double sd;
};

class MixtureDensity {
 public:
  MixtureDensity() = default;
  explicit MixtureDensity(std::vector<MixtureComponent> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw std::invalid_argument("MixtureDensity: no components");
    double total = 0.0;
    for (const auto& c : comps_) {
      if (!(c.weight > 0.0) || !(c.sd > 0.0)) throw std::invalid_argument("MixtureDensity: weights and sds must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("MixtureDensity: weights must sum to 1");
  }

  const std::vector<MixtureComponent>& components() const { return comps_; }

  double pdf(double x) const { return deriv(x, 0); }

  // k-th derivative from probabilists' Hermite polynomials:
  // d^k/dx^k phi((x-m)/s)/s = (-1)^k He_k(z) phi(z) / s^(k+1)
  double deriv(double x, int k) const {
    double acc = 0.0;
    for (const auto& c : comps_) {
      const double z = (x - c.mean) / c.sd;
      double h0 = 1.0, h1 = z;
      double he = 1.0;
      if (k == 1) he = z;
      for (int j = 1; j < k; ++j) {
        const double h2 = z * h1 - j * h0;
        h0 = h1;
        h1 = h2;
        he = h2;
      }
      const double sign = (k % 2) ? -1.0 : 1.0;
      acc += c.weight * sign * he * normal_pdf(z) / std::pow(c.sd, k + 1);
    }
    return acc;
  }

  double lower() const {
    double lo = INFINITY;
    for (const auto& c : comps_) lo = std::min(lo, c.mean - 10.0 * c.sd);
    return lo;
  }
  double upper() const {
    double hi = -INFINITY;
    for (const auto& c : comps_) hi = std::max(hi, c.mean + 10.0 * c.sd);
    return hi;
  }

  double mean() const {
    double m = 0.0;
    for (const auto& c : comps_) m += c.weight * c.mean;
    return m;
  }

 private:
  std::vector<MixtureComponent> comps_;
};

inline MixtureDensity marron_wand(int id) {
  switch (id) {
    case 1:
      return MixtureDensity({{1.0, 0.0, 1.0}});
    case 2:
      return MixtureDensity({{0.2, 0.0, 1.0}, {0.2, 0.5, 2.0 / 3.0}, {0.6, 13.0 / 12.0, 5.0 / 9.0}});
    default:
      throw std::invalid_argument("marron_wand: unknown model id " + std::to_string(id));
  }
}

inline double pdf_deriv(const MixtureDensity& f, double x, int k) {
  if (k < 0) throw std::invalid_argument("pdf_deriv: k must be >= 0");
  return f.deriv(x, k);
}

struct DensityFunctionals {
  double I_L = 0.0;
  double int_f_sq = 0.0;
  double cross_L_Lp = 0.0;
  double E_f2L = 0.0;
};

inline DensityFunctionals density_functionals(const MixtureDensity& f, int L, int Lp,
                                              const QuadratureSpec& q = QuadratureSpec::default_1d()) {
  const double lo = f.lower(), hi = f.upper();
  DensityFunctionals d;
  d.I_L = integrate([&](double x) { const double v = f.deriv(x, L); return v * v; }, lo, hi, q);
  d.int_f_sq = integrate([&](double x) { const double v = f.pdf(x); return v * v; }, lo, hi, q);
  d.cross_L_Lp = integrate([&](double x) { return f.deriv(x, L) * f.deriv(x, L + Lp); }, lo, hi, q);
  d.E_f2L = integrate([&](double x) { return f.deriv(x, 2 * L) * f.pdf(x); }, lo, hi, q);
  return d;
}

// E fhat_h(x) = int K(u) f(x + u h) du
inline double smoothed_mean(const MixtureDensity& f, const KernelSpec& k, double h, double x,
                            const QuadratureSpec& q = QuadratureSpec::default_1d()) {
  if (!(h > 0.0)) throw std::invalid_argument("smoothed_mean: h must be positive");
  const double r = k.moment_range();
  return integrate([&](double u) { return k(u) * f.pdf(x + u * h); }, -r, r, q);
}

// Gaussian kernel only: the mixture with each sd inflated to sqrt(sd^2 + h^2).
inline double smoothed_mean_gaussian(const MixtureDensity& f, double h, double x) {
  double acc = 0.0;
  for (const auto& c : f.components()) {
    const double s = std::sqrt(c.sd * c.sd + h * h);
    acc += c.weight * normal_pdf((x - c.mean) / s) / s;
  }
  return acc;
}

inline std::vector<double> sample(const MixtureDensity& f, std::size_t n, RngStream stream) {
  StreamGenerator gen(stream);
  const auto& comps = f.components();
  std::vector<double> out(n);
  for (auto& v : out) {
    const double u = gen.uniform();
    std::size_t j = 0;
    double cum = comps[0].weight;
    while (u > cum && j + 1 < comps.size()) cum += comps[++j].weight;
    v = comps[j].mean + comps[j].sd * gen.normal();
  }
  return out;
}

}  // namespace kdepi
