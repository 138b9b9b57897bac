#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bandwidth.hpp"
#include "density.hpp"
#include "gauss_poly.hpp"
#include "kernel.hpp"
#include "numerics.hpp"

namespace kdepi {

enum class CdfKind { normal, hall1, hall2, main, pilot1, pilot2, student };

inline std::string to_string(CdfKind k) {
  switch (k) {
    case CdfKind::normal: return "normal";
    case CdfKind::hall1: return "hall1";
    case CdfKind::hall2: return "hall2";
    case CdfKind::main: return "main";
    case CdfKind::pilot1: return "pilot1";
    case CdfKind::pilot2: return "pilot2";
    case CdfKind::student: return "student";
  }
  return "?";
}

inline CdfKind parse_cdf_kind(const std::string& s) {
  for (auto k : {CdfKind::normal, CdfKind::hall1, CdfKind::hall2, CdfKind::main, CdfKind::pilot1, CdfKind::pilot2,
                 CdfKind::student})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown cdf kind '" + s + "'");
}

// How the pilot bandwidth b is chosen for a context.
struct BPolicy {
  enum class Mode { none, mse, fixed };
  Mode mode = Mode::mse;
  ILVariant variant = ILVariant::ustat;
  double value = 0.0;

  static BPolicy none() { return {Mode::none, ILVariant::ustat, 0.0}; }
  static BPolicy mse(ILVariant v) { return {Mode::mse, v, 0.0}; }
  static BPolicy fixed(double b, ILVariant v) { return {Mode::fixed, v, b}; }
};

struct ExpansionContext {
  MixtureDensity model;
  KernelSpec kernel = gaussian_kernel();
  KernelSpec pilot = hermite_order_kernel(6);
  int L = 2;
  int Lp = 6;
  double x = 0.0;
  long long n = 0;
  ILVariant variant = ILVariant::ustat;

  double I_L = 0.0;
  double h0 = 0.0;
  double b = 0.0;
  double f_x = 0.0;
  double center = 0.0;

  double mu20 = 0.0, mu30 = 0.0, mu40 = 0.0, mu11 = 0.0, mu21 = 0.0, mu02 = 0.0;
  double xi11 = 0.0;
  double rho11 = 0.0;
  double omega111 = 0.0;
  double psi111 = 0.0;
  double delta = 0.0;
  double C_PI = 0.0;
  std::vector<double> C_Gamma;
  double script_L = 0.0;

  bool has_pilot = false;
};

namespace detail {

// Mixture-smoothed pair kernel: g(y) = E[P((y - X)/b)] in closed form.
class SmoothedPair {
 public:
  SmoothedPair(const MixtureDensity& f, const GaussPoly& P, double b) : b_(b) {
    const auto& pc = P.coefficients();
    std::vector<double> scaled(pc.size());
    for (std::size_t k = 0; k < pc.size(); ++k) scaled[k] = pc[k] / std::pow(b, static_cast<double>(k));
    const GaussPoly pb(scaled, P.scale() * b);
    for (const auto& c : f.components()) terms_.push_back({c.weight, c.mean, convolve(pb, GaussPoly({1.0}, c.sd))});
  }
  double operator()(double y) const {
    double acc = 0.0;
    for (const auto& t : terms_) acc += t.weight * t.poly(y - t.mean);
    return b_ * acc;
  }

 private:
  struct Term {
    double weight, mean;
    GaussPoly poly;
  };
  double b_;
  std::vector<Term> terms_;
};

inline double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

}  // namespace detail

struct ContextOptions {
  QuadratureSpec quad1 = QuadratureSpec::default_1d();
  QuadratureSpec quad2 = QuadratureSpec::default_2d();
  bool student = true;
};

inline ExpansionContext build_context(const MixtureDensity& model, const KernelSpec& kernel, const KernelSpec& pilot,
                                      int L, int Lp, double x, long long n, BPolicy policy,
                                      const ContextOptions& opt = {}) {
  if (n < 2) throw std::invalid_argument("build_context: n must be >= 2");
  const auto& q1 = opt.quad1;
  ExpansionContext c;
  c.model = model;
  c.kernel = kernel;
  c.pilot = pilot;
  c.L = L;
  c.Lp = Lp;
  c.x = x;
  c.n = n;
  c.variant = policy.variant;

  const KernelConstants kc = kernel_constants(kernel);
  const DensityFunctionals d = density_functionals(model, L, Lp, q1);
  c.I_L = d.I_L;
  c.h0 = optimal_bandwidth(kc, L, d.I_L, n);
  c.C_PI = 2.0 / ((2.0 * L + 1.0) * d.I_L);
  c.f_x = model.pdf(x);
  c.script_L = model.deriv(x, 2 * L) - d.I_L;
  for (int l = 0; l < L; ++l)
    c.C_Gamma.push_back(-kernel_moment(kernel, L + l, 1, q1) * model.deriv(x, L + l) / detail::factorial(L + l - 1));

  const double h = c.h0;
  const double R = kernel.moment_range();
  auto fx = [&](double s) { return model.pdf(x + h * s); };
  auto G = [&](double s) { return kernel.derivative(1, s) * s + kernel(s); };
  auto loc = [&](auto&& g) { return integrate(g, -R, R, q1); };

  const double EK = h * loc([&](double s) { return kernel(s) * fx(s); });
  const double EK2 = h * loc([&](double s) { const double k = kernel(s); return k * k * fx(s); });
  const double EG = h * loc([&](double s) { return G(s) * fx(s); });
  c.center = EK / h;

  // h^-1 E[(K - EK)^a (K^2 - EK^2)^b] = h^-1 phi(0) + int [phi(K(s)) - phi(0)] f(x + h s) ds
  auto mu = [&](int a, int bb) {
    auto phi = [&](double k) { return std::pow(k - EK, a) * std::pow(k * k - EK2, bb); };
    const double p0 = phi(0.0);
    return p0 / h + loc([&](double s) { return (phi(kernel(s)) - p0) * fx(s); });
  };
  c.mu20 = mu(2, 0);
  c.mu30 = mu(3, 0);
  c.mu40 = mu(4, 0);
  c.mu11 = mu(1, 1);
  c.mu21 = mu(2, 1);
  c.mu02 = mu(0, 2);
  c.xi11 = loc([&](double s) { return kernel(s) * G(s) * fx(s); }) - EK * EG / h;
  c.rho11 = loc([&](double s) { return kernel(s) * (model.deriv(x + h * s, 2 * L) - d.I_L) * fx(s); });
  if (opt.student) {
    const double EKu = h * loc([&](double s) { return kernel.derivative(1, s) * s * fx(s); });
    c.delta = loc([&](double s) { return kernel(s) * kernel.derivative(1, s) * s * fx(s); }) - EK * EKu / h;
  }

  if (policy.mode == BPolicy::Mode::none) return c;
  if (policy.mode == BPolicy::Mode::fixed) {
    if (!(policy.value > 0.0)) throw std::invalid_argument("build_context: fixed b must be positive");
    c.b = policy.value;
  } else {
    c.b = pilot_bandwidth(d, pilot_convolution_functionals(pilot, L, Lp, q1), L, Lp, n, policy.variant);
  }

  const double b = c.b;
  const GaussPoly P = pair_kernel(pilot, L, policy.variant);
  const detail::SmoothedPair g(model, P, b);
  const double RP = 12.0 * P.scale();
  const double B = h * loc([&](double s) { return kernel(s) * g(x + h * s) * fx(s); });
  const double BG = h * loc([&](double s) { return G(s) * g(x + h * s) * fx(s); });
  const double C = integrate([&](double y) { return g(y) * model.pdf(y); }, model.lower(), model.upper(), q1);
  const double ratio = b / h;
  const Box box{-R, R, -RP, RP};
  // y1 = x + h s, y2 = y1 - b u
  const double A = h * b * integrate2d(
                               [&](double s, double u) {
                                 return kernel(s) * kernel(s - ratio * u) * P(u) * fx(s) *
                                        model.pdf(x + h * s - b * u);
                               },
                               box, opt.quad2);
  const double AG = h * b * integrate2d(
                                [&](double s, double u) {
                                  return kernel(s) * G(s - ratio * u) * P(u) * fx(s) *
                                         model.pdf(x + h * s - b * u);
                                },
                                box, opt.quad2);
  c.omega111 = (A - 2.0 * EK * B + EK * EK * C) / (h * b);
  c.psi111 = (AG - EK * BG - EG * B + EK * EG * C) / (h * b);
  c.has_pilot = true;
  return c;
}

struct HallPolys {
  double p1 = 0.0, p2 = 0.0;
};
struct PluginPolys {
  std::vector<double> p3;
  double p4 = 0.0;
};
struct PilotPolys {
  std::vector<double> frak_p1;
  double frak_p2 = 0.0;
};
struct StudentPolys {
  double q1 = 0.0, q2 = 0.0, q3 = 0.0, frak_q1 = 0.0, frak_q2 = 0.0;
};

inline HallPolys hall_polynomials(const ExpansionContext& c, double z) {
  const double z2 = z * z;
  HallPolys r;
  r.p1 = -(1.0 / 6.0) * std::pow(c.mu20, -1.5) * c.mu30 * (z2 - 1.0);
  r.p2 = -(1.0 / 24.0) * std::pow(c.mu20, -2.0) * c.mu40 * (z2 * z - 3.0 * z) -
         (1.0 / 72.0) * std::pow(c.mu20, -3.0) * c.mu30 * c.mu30 * (z2 * z2 * z - 10.0 * z2 * z + 15.0 * z);
  return r;
}

inline PluginPolys plugin_polynomials(const ExpansionContext& c, double z) {
  PluginPolys r;
  for (double cg : c.C_Gamma) r.p3.push_back(-c.C_PI * cg * c.rho11 / c.mu20 * z);
  r.p4 = -c.C_PI * c.rho11 * c.xi11 * std::pow(c.mu20, -1.5) * (z * z - 1.0) +
         0.5 * c.C_PI * c.rho11 * std::pow(c.mu20, -0.5) * z * z;
  return r;
}

inline PilotPolys pilot_polynomials(const ExpansionContext& c, double z) {
  PilotPolys r;
  for (double cg : c.C_Gamma)
    r.frak_p1.push_back(-0.5 * c.C_PI * cg * std::pow(c.mu20, -1.5) * c.omega111 * (z * z - 1.0));
  const double z3 = z * z * z;
  r.frak_p2 = -c.C_PI * (0.5 * std::pow(c.mu20, -2.0) * c.xi11 * c.omega111 * (z3 - 3.0 * z) +
                         c.psi111 / c.mu20 * z - 0.25 * c.omega111 / c.mu20 * (z3 - z));
  return r;
}

inline StudentPolys student_polynomials(const ExpansionContext& c, double z) {
  StudentPolys r;
  const double z2 = z * z, z3 = z2 * z, z5 = z3 * z2;
  const double m = c.mu20;
  r.q1 = 0.5 * std::pow(m, -1.5) * c.mu11 - (1.0 / 6.0) * std::pow(m, -1.5) * (c.mu30 - 3.0 * c.mu11) * (z2 - 1.0);
  r.q2 = -c.f_x / m * z2;
  r.q3 = -std::pow(m, -3.0) * c.mu30 * c.mu30 * z -
         ((2.0 / 3.0) * std::pow(m, -3.0) * c.mu30 * c.mu30 - (1.0 / 12.0) * std::pow(m, -2.0) * c.mu40) *
             (z3 - 3.0 * z) -
         (1.0 / 18.0) * std::pow(m, -3.0) * std::pow(c.mu30, 3) * (z5 - 10.0 * z3 + 15.0 * z);
  const double infl = 1.0 + c.delta / m;
  r.frak_q1 = 0.5 * c.C_PI * infl * std::pow(m, -0.5) * c.rho11 * z2;
  r.frak_q2 = 0.25 * c.C_PI / m * c.omega111 * infl * (z3 - 2.0 * z);
  return r;
}

namespace detail {

struct Rates {
  double nh_half, nh_one, plug, pilot2;
  std::vector<double> h_pow, pilot1;
};

inline Rates rates(const ExpansionContext& c) {
  const double n = static_cast<double>(c.n), h = c.h0;
  Rates r;
  r.nh_half = 1.0 / std::sqrt(n * h);
  r.nh_one = 1.0 / (n * h);
  r.plug = std::sqrt(h / n);
  const double b2l = c.b > 0.0 ? std::pow(c.b, -2.0 * c.L) : 0.0;
  r.pilot2 = b2l / n;
  for (int l = 0; l < c.L; ++l) {
    r.h_pow.push_back(std::pow(h, c.L + l + 1));
    r.pilot1.push_back(std::pow(h, (2.0 * c.L + 2.0 * l + 1.0) / 2.0) * b2l / std::sqrt(n));
  }
  return r;
}

inline double plugin_part(const ExpansionContext& c, const Rates& r, double z) {
  const auto pp = plugin_polynomials(c, z);
  double s = pp.p4 * r.plug;
  for (std::size_t l = 0; l < pp.p3.size(); ++l) s += pp.p3[l] * r.h_pow[l];
  return s;
}

inline double pilot_part(const ExpansionContext& c, const Rates& r, double z) {
  const auto fp = pilot_polynomials(c, z);
  double s = fp.frak_p2 * r.pilot2;
  for (std::size_t l = 0; l < fp.frak_p1.size(); ++l) s += fp.frak_p1[l] * r.pilot1[l];
  return s;
}

}  // namespace detail

// Correction term multiplying phi(z); cdf_approx = Phi(z) + phi(z) * bracket.
inline double cdf_bracket(const ExpansionContext& c, double z, CdfKind kind) {
  if ((kind == CdfKind::pilot1 || kind == CdfKind::pilot2 || kind == CdfKind::student) && !c.has_pilot)
    throw std::invalid_argument("cdf_approx: kind '" + to_string(kind) + "' needs a context with a pilot bandwidth");
  if (kind == CdfKind::normal) return 0.0;
  const auto r = detail::rates(c);
  const auto hp = hall_polynomials(c, z);
  switch (kind) {
    case CdfKind::hall1:
      return r.nh_half * hp.p1;
    case CdfKind::hall2:
      return r.nh_half * hp.p1 + r.nh_one * hp.p2;
    case CdfKind::main:
      return r.nh_half * hp.p1 + r.nh_one * hp.p2 + detail::plugin_part(c, r, z);
    case CdfKind::pilot1:
      return r.nh_half * hp.p1 + detail::pilot_part(c, r, z);
    case CdfKind::pilot2:
      return r.nh_half * hp.p1 + r.nh_one * hp.p2 + detail::plugin_part(c, r, z) + detail::pilot_part(c, r, z);
    case CdfKind::student: {
      const auto sp = student_polynomials(c, z);
      const double shared = detail::plugin_part(c, r, z) + detail::pilot_part(c, r, z);
      return shared + sp.q1 * r.nh_half + (sp.q2 + sp.frak_q1) * r.plug + sp.q3 * r.nh_one + sp.frak_q2 * r.pilot2;
    }
    default:
      return 0.0;
  }
}

inline double cdf_approx(const ExpansionContext& c, double z, CdfKind kind) {
  return normal_cdf(z) + normal_pdf(z) * cdf_bracket(c, z, kind);
}

// Scan outward from the normal quantile in 1e-3 steps for a sign change, then bisect.
inline double cornish_fisher_quantile(const ExpansionContext& c, CdfKind kind, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("cornish_fisher_quantile: alpha must lie in (0,1)");
  auto g = [&](double z) { return cdf_approx(c, z, kind) - alpha; };
  const double z0 = std::clamp(normal_quantile(alpha), -6.0, 6.0);
  const double g0 = g(z0);
  if (g0 == 0.0) return z0;
  const double step = g0 < 0.0 ? 1e-3 : -1e-3;
  double prev = z0;
  for (int i = 1;; ++i) {
    const double z = z0 + step * i;
    if (z < -6.0 || z > 6.0) break;
    if ((g(z) > 0.0) != (g0 > 0.0)) return find_root(g, std::min(prev, z), std::max(prev, z), 1e-13);
    prev = z;
  }
  std::ostringstream msg;
  msg << "cornish_fisher_quantile: no root in [-6, 6] for kind " << to_string(kind) << ", alpha " << alpha;
  throw RootError(msg.str());
}

struct MuSeries {
  std::vector<double> m2, m3;
};

inline MuSeries mu_series(const MixtureDensity& f, const KernelSpec& k, double x, int L) {
  const KernelConstants kc = kernel_constants(k);
  const double fx = f.pdf(x);
  MuSeries s;
  for (int l = 0; l <= L; ++l) {
    const double fl = f.deriv(x, l) / detail::factorial(l);
    double m2 = kc.kappa(l, 2) * fl;
    double m3 = kc.kappa(l, 3) * fl;
    if (l == 1) m2 -= fx * fx;
    if (l >= 1) m3 -= 3.0 * fx * kc.kappa(l - 1, 2) * f.deriv(x, l - 1) / detail::factorial(l - 1);
    if (l == 2) m3 += 2.0 * fx * fx * fx;
    s.m2.push_back(m2);
    s.m3.push_back(m3);
  }
  return s;
}

struct Gammas {
  double g1_0 = 0, g1_1 = 0, g2_1_0 = 0, g2_2_0 = 0;
  double g3_1_0 = 0, g3_1_1 = 0, g4_1_0 = 0, g4_1_1 = 0, g4_2_0 = 0, g4_2_1 = 0;
  double c_h = 0;  // h0 = c_h n^{-1/(2L+1)}
};

struct PowerSeries {
  std::vector<double> a;
  std::vector<double> b_coeff;
  Gammas gammas;
};

namespace detail {

// Coefficients of mu30 * mu20^{-3/2} in powers of h up to h^L, by explicit enumeration of
// (l, i_1..i_k) with i_1 + ... + i_k + l = q and each i_j >= 1.
inline std::vector<double> skew_series(const MuSeries& s, int L) {
  std::vector<double> out(L + 1, 0.0);
  const double m20 = s.m2[0];
  std::function<void(int, int, int, double, int)> rec = [&](int k_left, int k, int sum, double prod, int l) {
    if (k_left == 0) {
      const int q = sum + l;
      if (q > L) return;
      double dfact = 1.0;
      for (int j = 2 * k + 1; j > 1; j -= 2) dfact *= j;
      const double coef = ((k % 2) ? -1.0 : 1.0) * dfact / (std::pow(2.0, k) * factorial(k));
      out[q] += coef * std::pow(m20, -(2.0 * k + 3.0) / 2.0) * s.m3[l] * prod;
      return;
    }
    for (int i = 1; sum + i + l <= L; ++i) rec(k_left - 1, k, sum + i, prod * s.m2[i], l);
  };
  for (int l = 0; l <= L; ++l)
    for (int k = 0; k <= L - l; ++k) rec(k, k, 0, 1.0, l);
  return out;
}

}  // namespace detail

inline PowerSeries power_series_coeffs(const MixtureDensity& f, const KernelSpec& k, const KernelSpec& pilot, int L,
                                       int Lp, double x, double z) {
  (void)pilot;
  (void)Lp;
  const KernelConstants kc = kernel_constants(k);
  const double I_L = density_functionals(f, L, Lp).I_L;
  const double fx = f.pdf(x);
  const double k02 = kc.kappa(0, 2), k03 = kc.kappa(0, 3), k04 = kc.kappa(0, 4), tau0 = kc.tau(0);
  const double CPI = 2.0 / ((2.0 * L + 1.0) * I_L);
  const double CG0 = -kc.kappa(L, 1) * f.deriv(x, L) / detail::factorial(L - 1);
  const double Lx = f.deriv(x, 2 * L) - I_L;
  const MuSeries ms = mu_series(f, k, x, L);
  const auto skew = detail::skew_series(ms, L);

  PowerSeries ps;
  auto& g = ps.gammas;
  g.c_h = optimal_bandwidth(kc, L, I_L, 1);
  g.g1_0 = -skew[0] / 6.0;
  g.g1_1 = -skew[1] / 6.0;
  g.g2_1_0 = -(1.0 / 24.0) * std::pow(k02, -2.0) * k04 / fx;
  g.g2_2_0 = -(1.0 / 72.0) * std::pow(k02, -3.0) * k03 * k03 / fx;
  // Expansions of p_{3,0} and p_4 in h with mu20 = k02 f - f^2 h + O(h^2), rho11 = L f, xi11 = tau0 f.
  g.g3_1_0 = -CPI * CG0 * Lx / k02;
  g.g3_1_1 = -CPI * CG0 * Lx * fx / (k02 * k02);
  g.g4_1_0 = -CPI * tau0 * Lx * std::pow(k02, -1.5) * std::sqrt(fx);
  g.g4_1_1 = -1.5 * CPI * tau0 * Lx * std::pow(k02, -2.5) * std::pow(fx, 1.5);
  g.g4_2_0 = 0.5 * CPI * Lx * std::pow(k02, -0.5) * std::sqrt(fx);
  g.g4_2_1 = 0.25 * CPI * Lx * std::pow(k02, -1.5) * std::pow(fx, 1.5);

  const double ch = g.c_h;
  const double z2 = z * z;
  for (int q = 0; q <= L; ++q) {
    double a = -skew[q] / 6.0 * std::pow(ch, q - 0.5) * (z2 - 1.0);
    if (q == L)
      a += (g.g2_1_0 * (z2 * z - 3.0 * z) + g.g2_2_0 * (z2 * z2 * z - 10.0 * z2 * z + 15.0 * z)) / ch;
    ps.a.push_back(a);
  }
  ps.b_coeff.push_back(ps.a[0]);
  if (L >= 1)
    ps.b_coeff.push_back(ps.a[1] + g.g3_1_0 * z * std::pow(ch, L + 1) +
                         (g.g4_1_0 * (z2 - 1.0) + g.g4_2_0 * z2) * std::sqrt(ch));
  if (L >= 2)
    ps.b_coeff.push_back(ps.a[2] + g.g3_1_1 * z * std::pow(ch, L + 2) +
                         (g.g4_1_1 * (z2 - 1.0) + g.g4_2_1 * z2) * std::pow(ch, 1.5));
  return ps;
}

}  // namespace kdepi
