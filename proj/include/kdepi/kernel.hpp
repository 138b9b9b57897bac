#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gauss_poly.hpp"
#include "numerics.hpp"

namespace kdepi {

// Gaussian-times-polynomial kernel with analytic derivatives.
class KernelSpec {
 public:
  static constexpr int kPrecomputedDerivatives = 12;

  KernelSpec(std::string name, int order, GaussPoly base) : name_(std::move(name)), order_(order) {
    derivs_.push_back(std::move(base));
    for (int k = 1; k <= kPrecomputedDerivatives; ++k) derivs_.push_back(derivs_.back().derivative());
  }

  const std::string& name() const { return name_; }
  int order() const { return order_; }

  double operator()(double u) const { return derivs_[0](u); }
  double evaluate(double u) const { return derivs_[0](u); }

  double derivative(int k, double u) const { return derivative_poly(k)(u); }

  const GaussPoly& derivative_poly(int k) const {
    if (k < 0 || k > kPrecomputedDerivatives) throw std::out_of_range("KernelSpec: derivative order out of range");
    return derivs_[k];
  }
  const GaussPoly& base() const { return derivs_[0]; }

  // Data-side truncation half-width.
  double effective_support() const { return 8.0 * derivs_[0].scale(); }
  // Half-width for moment quadratures; polynomial weights push mass further out.
  double moment_range() const { return 12.0 * derivs_[0].scale(); }

 private:
  std::string name_;
  int order_;
  std::vector<GaussPoly> derivs_;
};

inline KernelSpec gaussian_kernel() { return KernelSpec("gauss2", 2, GaussPoly({1.0}, 1.0)); }

// Gaussian times an even polynomial whose moments vanish through order-1.
inline KernelSpec hermite_order_kernel(int order) {
  if (order < 2 || order % 2) throw std::invalid_argument("hermite_order_kernel: order must be even and >= 2");
  const int m = order / 2;
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(0) = 1.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = detail::normal_moment(2 * (i + j));
  const Eigen::VectorXd c = a.fullPivLu().solve(rhs);
  std::vector<double> coeffs(2 * m - 1, 0.0);
  for (int j = 0; j < m; ++j) coeffs[2 * j] = c(j);
  return KernelSpec("hermite" + std::to_string(order), order, GaussPoly(std::move(coeffs), 1.0));
}

inline double kernel_moment(const KernelSpec& k, int s, int t, const QuadratureSpec& q = QuadratureSpec::default_1d()) {
  if (s < 0 || t < 1) throw std::invalid_argument("kernel_moment: need s >= 0, t >= 1");
  const double r = k.moment_range();
  return integrate([&](double u) { return std::pow(u, s) * std::pow(k(u), t); }, -r, r, q);
}

inline double kernel_tau(const KernelSpec& k, int l, const QuadratureSpec& q = QuadratureSpec::default_1d()) {
  if (l < 0) throw std::invalid_argument("kernel_tau: l must be >= 0");
  const double r = k.moment_range();
  return integrate(
      [&](double u) {
        const double kv = k(u);
        return std::pow(u, l) * (kv * k.derivative(1, u) * u + kv * kv);
      },
      -r, r, q);
}

class KernelConstants {
 public:
  static constexpr int kMaxS = 12;
  static constexpr int kMaxT = 4;
  static constexpr int kMaxTau = 6;

  explicit KernelConstants(const KernelSpec& k) : order_(k.order()) {
    for (int t = 1; t <= kMaxT; ++t)
      for (int s = 0; s <= kMaxS; ++s) kappa_[{s, t}] = kernel_moment(k, s, t);
    for (int l = 0; l <= kMaxTau; ++l) tau_.push_back(kernel_tau(k, l));
    double fact = 1.0;
    for (int i = 2; i <= order_; ++i) fact *= i;
    C_L = kappa(order_, 1) / fact;
    R_K = kappa(0, 2);
    if (!(R_K > 0.0) || !std::isfinite(C_L) || C_L == 0.0)
      throw std::runtime_error("KernelConstants: degenerate kernel");
  }

  double kappa(int s, int t) const {
    auto it = kappa_.find({s, t});
    if (it == kappa_.end()) throw std::out_of_range("KernelConstants: kappa index not tabulated");
    return it->second;
  }
  double tau(int l) const {
    if (l < 0 || l > kMaxTau) throw std::out_of_range("KernelConstants: tau index not tabulated");
    return tau_[l];
  }
  int order() const { return order_; }

  double C_L = 0.0;
  double R_K = 0.0;

 private:
  int order_;
  std::map<std::pair<int, int>, double> kappa_;
  std::vector<double> tau_;
};

inline KernelConstants kernel_constants(const KernelSpec& k) { return KernelConstants(k); }

struct PilotFunctionals {
  double int_H2L_conv_H_sq = 0.0;
  double int_H2L_sq = 0.0;
  double int_uLp_HconvH = 0.0;
  double int_uLp_H = 0.0;
};

// Hbar^(L) = (H * H)^(2L), the pair kernel of the convolution estimator.
inline GaussPoly convolved_pair_kernel(const KernelSpec& pilot, int L) {
  return convolve(pilot.base(), pilot.base()).derivative(2 * L);
}

inline PilotFunctionals pilot_convolution_functionals(const KernelSpec& pilot, int L, int Lp,
                                                      const QuadratureSpec& q = QuadratureSpec::default_1d()) {
  const GaussPoly h2l = pilot.derivative_poly(2 * L);
  const GaussPoly conv = convolve(h2l, pilot.base());
  const GaussPoly hh = convolve(pilot.base(), pilot.base());
  const double r = 12.0 * hh.scale();
  PilotFunctionals out;
  out.int_H2L_conv_H_sq = integrate([&](double u) { const double v = conv(u); return v * v; }, -r, r, q);
  out.int_H2L_sq = integrate([&](double u) { const double v = h2l(u); return v * v; }, -r, r, q);
  out.int_uLp_HconvH = integrate([&](double u) { return std::pow(u, Lp) * hh(u); }, -r, r, q);
  out.int_uLp_H = kernel_moment(pilot, Lp, 1, q);
  return out;
}

}  // namespace kdepi
