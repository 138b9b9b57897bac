#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "density.hpp"
#include "gauss_poly.hpp"
#include "kernel.hpp"
#include "numerics.hpp"

namespace kdepi {

enum class ILVariant { ustat, convo, squared };

inline std::string to_string(ILVariant v) {
  switch (v) {
    case ILVariant::ustat: return "ustat";
    case ILVariant::convo: return "convo";
    case ILVariant::squared: return "squared";
  }
  return "?";
}

inline ILVariant parse_variant(const std::string& s) {
  if (s == "ustat") return ILVariant::ustat;
  if (s == "convo") return ILVariant::convo;
  if (s == "squared") return ILVariant::squared;
  throw std::invalid_argument("unknown I_L variant '" + s + "'");
}

inline double optimal_bandwidth(const KernelConstants& kc, int L, double I_L, long long n) {
  if (!(I_L > 0.0)) throw std::domain_error("optimal_bandwidth: I_L must be positive");
  if (n < 1) throw std::invalid_argument("optimal_bandwidth: n must be >= 1");
  const double e = 1.0 / (2.0 * L + 1.0);
  return std::pow(kc.R_K / (2.0 * L * kc.C_L * kc.C_L * I_L), e) * std::pow(static_cast<double>(n), -e);
}

inline double pilot_bandwidth(const DensityFunctionals& d, const PilotFunctionals& p, int L, int Lp, long long n,
                              ILVariant variant) {
  if (d.cross_L_Lp == 0.0) throw std::domain_error("pilot_bandwidth: zero cross functional");
  double lp_fact = 1.0;
  for (int i = 2; i <= Lp; ++i) lp_fact *= i;
  const bool convo = variant != ILVariant::ustat;
  const double roughness = convo ? p.int_H2L_sq : p.int_H2L_conv_H_sq;
  const double moment = convo ? p.int_uLp_HconvH : p.int_uLp_H;
  const double num = (4.0 * L + 1.0) * d.int_f_sq * d.int_f_sq * roughness;
  const double den = Lp / (lp_fact * lp_fact) * moment * moment * d.cross_L_Lp * d.cross_L_Lp;
  const double e = 1.0 / (4.0 * L + 2.0 * Lp + 1.0);
  return std::pow(num / den, e) * std::pow(static_cast<double>(n), -2.0 * e);
}

// Kernel applied to scaled pair differences in each estimator.
inline GaussPoly pair_kernel(const KernelSpec& pilot, int L, ILVariant v) {
  return v == ILVariant::ustat ? pilot.derivative_poly(2 * L) : convolved_pair_kernel(pilot, L);
}

namespace detail {

// sum_{i<j} P((x_i - x_j)/b) over sorted data; pairs beyond the kernel's tail are skipped.
inline double pair_sum(std::vector<double> xs, const GaussPoly& P, double b) {
  std::sort(xs.begin(), xs.end());
  const double reach = 12.0 * P.scale() * b;
  const double inv_b = 1.0 / b;
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const double d = xs[j] - xs[i];
      if (d > reach) break;
      row += P(d * inv_b);
    }
    total += row;
  }
  return total;
}

}  // namespace detail

inline double estimate_IL(const std::vector<double>& data, const KernelSpec& pilot, int L, double b, ILVariant v) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("estimate_IL: need at least 2 observations");
  if (!(b > 0.0)) throw std::invalid_argument("estimate_IL: b must be positive");
  const GaussPoly P = pair_kernel(pilot, L, v);
  const double s = detail::pair_sum(data, P, b);
  const double nd = static_cast<double>(n);
  const double bpow = std::pow(b, 2 * L + 1);
  if (v == ILVariant::squared) return P(0.0) / (nd * bpow) + 2.0 * s / (nd * nd * bpow);
  return s / (0.5 * nd * (nd - 1.0)) / bpow;
}

struct BandwidthReport {
  double h0 = 0.0;
  double b0 = 0.0;
  double I_L_true = 0.0;
  double I_L_hat = 0.0;
  double h_hat = 0.0;
  ILVariant variant = ILVariant::ustat;
  double linear_term = 0.0;
  double quadratic_term = 0.0;
};

inline double plugin_h(const KernelConstants& kc, int L, double I_L_hat, long long n) {
  if (I_L_hat == 0.0) throw std::domain_error("plugin_bandwidth: estimated I_L is exactly zero");
  return optimal_bandwidth(kc, L, std::abs(I_L_hat), n);
}

// h0 and I_L_true are filled only when the truth is supplied.
inline BandwidthReport plugin_bandwidth(const std::vector<double>& data, const KernelConstants& kc,
                                        const KernelSpec& pilot, int L, double b, ILVariant v,
                                        std::optional<double> I_L_true = std::nullopt) {
  BandwidthReport r;
  r.variant = v;
  r.b0 = b;
  r.I_L_hat = estimate_IL(data, pilot, L, b, v);
  const auto n = static_cast<long long>(data.size());
  r.h_hat = plugin_h(kc, L, r.I_L_hat, n);
  if (I_L_true) {
    r.I_L_true = *I_L_true;
    r.h0 = optimal_bandwidth(kc, L, *I_L_true, n);
  }
  return r;
}

// I_Li(y) = E[I_Lij | X_i = y] = int H(u) f^(2L)(y + u b) du. For a Gaussian mixture this is the
// 2L-th derivative of (H_b * phi_sd)(y - mean), summed over components.
class ConditionalIL {
 public:
  ConditionalIL(const MixtureDensity& f, const KernelSpec& pilot, int L, double b) {
    const auto& hc = pilot.base().coefficients();
    std::vector<double> scaled(hc.size());
    for (std::size_t k = 0; k < hc.size(); ++k) scaled[k] = hc[k] / std::pow(b, static_cast<double>(k));
    const GaussPoly hb(scaled, pilot.base().scale() * b);
    for (const auto& c : f.components()) {
      terms_.push_back({c.weight, c.mean, convolve(hb, GaussPoly({1.0}, c.sd)).derivative(2 * L)});
    }
  }

  double operator()(double y) const {
    double acc = 0.0;
    for (const auto& t : terms_) acc += t.weight * t.poly(y - t.mean);
    return acc;
  }

 private:
  struct Term {
    double weight;
    double mean;
    GaussPoly poly;
  };
  std::vector<Term> terms_;
};

struct LinearizationDiagnostic {
  double exact_dev = 0.0;
  double projection_dev = 0.0;
  double quadratic_dev = 0.0;
};

// Precomputed model quantities for repeated diagnostics at one (model, n, b).
class LinearizationModel {
 public:
  LinearizationModel(const MixtureDensity& f, const KernelSpec& kernel, const KernelSpec& pilot, int L, int Lp, double b,
                     const QuadratureSpec& q = QuadratureSpec::default_1d())
      : f_(f), pilot_(pilot), kc_(kernel_constants(kernel)), L_(L), Lp_(Lp), b_(b), cond_(f, pilot, L, b) {
    const auto d = density_functionals(f, L, Lp, q);
    I_L_ = d.I_L;
    C_PI_ = 2.0 / ((2.0 * L + 1.0) * I_L_);
    double lp_fact = 1.0;
    for (int i = 2; i <= Lp; ++i) lp_fact *= i;
    bias_coef_ = kernel_moment(pilot, Lp, 1, q) / lp_fact * std::pow(b, Lp);
    E_f2LLp_ = integrate([&](double x) { return f.deriv(x, 2 * L + Lp) * f.pdf(x); }, f.lower(), f.upper(), q);
    E_cond_ = integrate([&](double x) { return cond_(x) * f.pdf(x); }, f.lower(), f.upper(), q);
  }

  double I_L() const { return I_L_; }
  double C_PI() const { return C_PI_; }
  double mean_pair_term() const { return E_cond_; }
  double conditional(double y) const { return cond_(y); }

  LinearizationDiagnostic evaluate(const std::vector<double>& data) const {
    const std::size_t n = data.size();
    if (n < 2) throw std::invalid_argument("linearization_diagnostic: need at least 2 observations");
    const auto nl = static_cast<long long>(n);
    const double nd = static_cast<double>(n);
    const double h0 = optimal_bandwidth(kc_, L_, I_L_, nl);
    const double pairs = 0.5 * nd * (nd - 1.0);
    const double raw = detail::pair_sum(data, pilot_.derivative_poly(2 * L_), b_) / std::pow(b_, 2 * L_ + 1);
    const double I_hat = raw / pairs;
    const double h_hat = plugin_h(kc_, L_, I_hat, nl);

    double v_sum = 0.0, cond_sum = 0.0;
    for (double x : data) {
      v_sum += (f_.deriv(x, 2 * L_) - I_L_) + bias_coef_ * (f_.deriv(x, 2 * L_ + Lp_) - E_f2LLp_);
      cond_sum += cond_(x);
    }
    const double w_sum = raw - (nd - 1.0) * cond_sum + pairs * E_cond_;

    LinearizationDiagnostic out;
    out.exact_dev = (h_hat - h0) / h0;
    out.projection_dev = -C_PI_ / nd * v_sum;
    out.quadratic_dev = -0.5 * C_PI_ * w_sum / pairs;
    return out;
  }

 private:
  MixtureDensity f_;
  KernelSpec pilot_;
  KernelConstants kc_;
  int L_, Lp_;
  double b_;
  ConditionalIL cond_;
  double I_L_ = 0.0, C_PI_ = 0.0, bias_coef_ = 0.0, E_f2LLp_ = 0.0, E_cond_ = 0.0;
};

inline LinearizationDiagnostic linearization_diagnostic(const std::vector<double>& data, const MixtureDensity& f,
                                                        const KernelSpec& kernel, const KernelSpec& pilot, int L,
                                                        int Lp, double b) {
  return LinearizationModel(f, kernel, pilot, L, Lp, b).evaluate(data);
}

}  // namespace kdepi
