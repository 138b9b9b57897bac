#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "kdepi/context_cache.hpp"
#include "kdepi/edgeworth.hpp"

using namespace kdepi;

namespace {

const KernelSpec& gauss() {
  static const KernelSpec k = gaussian_kernel();
  return k;
}
const KernelSpec& h6() {
  static const KernelSpec k = hermite_order_kernel(6);
  return k;
}

ExpansionContext make(int model, double x, long long n, BPolicy p = BPolicy::mse(ILVariant::ustat)) {
  return build_context(marron_wand(model), gauss(), h6(), 2, 6, x, n, p);
}

const ExpansionContext& ctx1() {
  static const ExpansionContext c = make(1, 0.0, 100);
  return c;
}
const ExpansionContext& ctx2() {
  static const ExpansionContext c = make(2, 1.0, 400);
  return c;
}

const CdfKind kAllKinds[] = {CdfKind::normal, CdfKind::hall1,  CdfKind::hall2,  CdfKind::main,
                             CdfKind::pilot1, CdfKind::pilot2, CdfKind::student};

// h^-1 E[(K((X - x)/h) - EK)^k], quadrature over the data variable.
double central_moment(const ExpansionContext& c, int k) {
  const auto& f = c.model;
  const double h = c.h0;
  const double EK = integrate([&](double y) { return gauss()((y - c.x) / h) * f.pdf(y); }, f.lower(), f.upper());
  return integrate([&](double y) { return std::pow(gauss()((y - c.x) / h) - EK, k) * f.pdf(y); }, f.lower(),
                   f.upper()) /
         h;
}

}  // namespace

TEST(Context, ModelOneBasics) {
  const auto& c = ctx1();
  EXPECT_NEAR(c.h0, 0.4216846, 1e-6);
  EXPECT_NEAR(c.b, 0.7908, 5e-4);
  EXPECT_NEAR(c.center, 1.0 / std::sqrt(2.0 * kPi * (1.0 + c.h0 * c.h0)), 1e-10);
  EXPECT_NEAR(c.I_L, 0.2115711, 1e-7);
  EXPECT_NEAR(c.C_PI, 2.0 / (5.0 * c.I_L), 1e-12);
  ASSERT_EQ(c.C_Gamma.size(), 2u);
  EXPECT_NEAR(c.C_Gamma[0], -1.0 * (-0.3989423), 1e-7);
  EXPECT_NEAR(c.C_Gamma[1], 0.0, 1e-12);
  EXPECT_NEAR(c.script_L, 3.0 * normal_pdf(0.0) - c.I_L, 1e-10);
  EXPECT_GT(c.mu20, 0.0);
  EXPECT_TRUE(c.has_pilot);
}

// Frozen values from an independent run; guards against silent regressions.
TEST(Context, ModelOneFrozen) {
  const auto& c = ctx1();
  EXPECT_NEAR(c.mu20, 0.0508664, 1e-6);
  EXPECT_NEAR(c.mu30, 0.00313, 1e-5);
  EXPECT_NEAR(c.rho11, 0.2318, 1e-4);
  EXPECT_NEAR(c.omega111, 0.1243, 1e-4);
  EXPECT_NEAR(c.psi111, 0.1659, 1e-4);
}

TEST(Context, MomentsMatchDirectQuadrature) {
  for (const auto* c : {&ctx1(), &ctx2()}) {
    EXPECT_NEAR(c->mu20, central_moment(*c, 2), 1e-9);
    EXPECT_NEAR(c->mu30, central_moment(*c, 3), 1e-9);
    EXPECT_NEAR(c->mu40, central_moment(*c, 4), 1e-9);
  }
}

// Truncated after h^2; the next term is -h^3 f f'' ~ 0.16 h^3.
TEST(Context, Mu20Series) {
  const auto c = make(1, 0.0, 1000000LL, BPolicy::none());
  const KernelConstants kc(gauss());
  const double f = normal_pdf(0.0), f2 = -normal_pdf(0.0), h = c.h0;
  const double series = kc.kappa(0, 2) * f - f * f * h + kc.kappa(2, 2) * f2 / 2.0 * h * h;
  EXPECT_NEAR(c.mu20, series, 0.2 * h * h * h);
}

TEST(Context, Mu20LeadingTerm) {
  const auto c = make(1, 0.5, 1000000000000000000LL, BPolicy::none());
  const double lead = KernelConstants(gauss()).kappa(0, 2) * normal_pdf(0.5);
  EXPECT_LT(std::abs(c.mu20 - lead) / lead, 1e-3);
}

// rho11 -> script_L(x) f(x) as h -> 0.
TEST(Context, Rho11LeadingTerm) {
  const auto c = make(1, 0.5, 1000000000000LL, BPolicy::none());
  EXPECT_NEAR(c.rho11, c.script_L * normal_pdf(0.5), 1e-3);
}

TEST(Context, OmegaPsiMatchNestedQuadrature) {
  // omega111 = (h b)^-1 E[(K1 - EK)(K2 - EK) P((X1 - X2)/b)] with an outer adaptive rule in y1, inner in y2.
  const auto& c = ctx1();
  const auto& f = c.model;
  const double h = c.h0, b = c.b;
  const GaussPoly P = h6().derivative_poly(4);
  auto K = [&](double y) { return gauss()((y - c.x) / h); };
  const double EK = integrate([&](double y) { return K(y) * f.pdf(y); }, f.lower(), f.upper());
  QuadratureSpec q;
  q.abs_tol = q.rel_tol = 1e-9;
  auto inner = [&](double y1) {
    return integrate([&](double y2) { return (K(y2) - EK) * P((y1 - y2) / b) * f.pdf(y2); }, f.lower(), f.upper(), q);
  };
  const double om =
      integrate([&](double y1) { return (K(y1) - EK) * inner(y1) * f.pdf(y1); }, f.lower(), f.upper(), q) / (h * b);
  EXPECT_NEAR(c.omega111, om, 1e-6);
}

TEST(Context, NeedsPilotForPilotKinds) {
  const auto c = make(1, 0.0, 100, BPolicy::none());
  EXPECT_FALSE(c.has_pilot);
  for (auto k : {CdfKind::pilot1, CdfKind::pilot2, CdfKind::student}) EXPECT_THROW(cdf_approx(c, 0.3, k), std::invalid_argument);
  EXPECT_NO_THROW(cdf_approx(c, 0.3, CdfKind::main));
}

TEST(Context, FixedPilotBandwidth) {
  const auto c = make(1, 0.0, 100, BPolicy::fixed(0.5, ILVariant::convo));
  EXPECT_DOUBLE_EQ(c.b, 0.5);
  EXPECT_THROW(make(1, 0.0, 100, BPolicy::fixed(0.0, ILVariant::ustat)), std::invalid_argument);
  EXPECT_THROW(make(1, 0.0, 1), std::invalid_argument);
}

TEST(Context, ConvoVariantUsesConvolvedKernel) {
  const auto u = make(1, 0.0, 100, BPolicy::mse(ILVariant::ustat));
  const auto v = make(1, 0.0, 100, BPolicy::mse(ILVariant::convo));
  EXPECT_NEAR(v.b, 0.8047, 5e-4);
  EXPECT_NE(u.omega111, v.omega111);
  EXPECT_EQ(u.mu20, v.mu20);
}

TEST(HallPolynomials, Zeros) {
  for (double z : {-1.0, 1.0}) EXPECT_NEAR(hall_polynomials(ctx1(), z).p1, 0.0, 1e-15);
  EXPECT_NEAR(hall_polynomials(ctx1(), 0.0).p2, 0.0, 1e-15);
}

TEST(HallPolynomials, Reassembly) {
  for (const auto* c : {&ctx1(), &ctx2()}) {
    const double m2 = central_moment(*c, 2), m3 = central_moment(*c, 3), m4 = central_moment(*c, 4);
    const double z = 1.96;
    const double p1 = -m3 / (6.0 * std::pow(m2, 1.5)) * (z * z - 1.0);
    const double p2 = -m4 / (24.0 * m2 * m2) * (z * z * z - 3.0 * z) -
                      m3 * m3 / (72.0 * m2 * m2 * m2) * (std::pow(z, 5) - 10.0 * z * z * z + 15.0 * z);
    const auto hp = hall_polynomials(*c, z);
    EXPECT_NEAR(hp.p1, p1, 1e-8);
    EXPECT_NEAR(hp.p2, p2, 1e-8);
    const double nh = c->n * c->h0;
    EXPECT_NEAR(cdf_bracket(*c, z, CdfKind::hall2), p1 / std::sqrt(nh) + p2 / nh, 1e-8);
  }
}

TEST(HallPolynomials, SkewTermIntegratesToZero) {
  const auto& c = ctx1();
  EXPECT_NEAR(integrate([&](double z) { return hall_polynomials(c, z).p1 * normal_pdf(z); }, -12.0, 12.0), 0.0,
              1e-10);
  EXPECT_NEAR(integrate([&](double z) { return hall_polynomials(c, z).p2 * normal_pdf(z); }, -12.0, 12.0), 0.0,
              1e-10);
}

TEST(PluginPolynomials, AtZero) {
  const auto& c = ctx1();
  const auto pp = plugin_polynomials(c, 0.0);
  for (double v : pp.p3) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(pp.p4, c.C_PI * c.rho11 * c.xi11 * std::pow(c.mu20, -1.5), 1e-12);
}

TEST(PluginPolynomials, OddMomentTermVanishes) {
  for (const auto* c : {&ctx1(), &ctx2()})
    for (double z : {-1.5, 0.7, 2.0}) EXPECT_NEAR(plugin_polynomials(*c, z).p3[1], 0.0, 1e-10);
}

TEST(PluginPolynomials, Reassembly) {
  const auto& c = ctx2();
  const double z = 1.96;
  const auto pp = plugin_polynomials(c, z);
  EXPECT_NEAR(pp.p3[0], -c.C_PI * c.C_Gamma[0] * c.rho11 / c.mu20 * z, 1e-12);
  const double p4 = -c.C_PI * c.rho11 * c.xi11 * std::pow(c.mu20, -1.5) * (z * z - 1.0) +
                    0.5 * c.C_PI * c.rho11 / std::sqrt(c.mu20) * z * z;
  EXPECT_NEAR(pp.p4, p4, 1e-8);
  const double h = c.h0, n = static_cast<double>(c.n);
  const double main = cdf_bracket(c, z, CdfKind::hall2) + pp.p3[0] * std::pow(h, 3) + pp.p3[1] * std::pow(h, 4) +
                      pp.p4 * std::sqrt(h / n);
  EXPECT_NEAR(cdf_bracket(c, z, CdfKind::main), main, 1e-12);
}

TEST(PilotPolynomials, Zeros) {
  for (double z : {-1.0, 1.0})
    for (double v : pilot_polynomials(ctx1(), z).frak_p1) EXPECT_NEAR(v, 0.0, 1e-15);
  EXPECT_NEAR(pilot_polynomials(ctx1(), 0.0).frak_p2, 0.0, 1e-15);
}

TEST(StudentPolynomials, AtZero) {
  const auto& c = ctx1();
  const auto sp = student_polynomials(c, 0.0);
  EXPECT_EQ(sp.q2, 0.0);
  const double m = std::pow(c.mu20, -1.5);
  EXPECT_NEAR(sp.q1, 0.5 * m * c.mu11 + (1.0 / 6.0) * m * (c.mu30 - 3.0 * c.mu11), 1e-12);
}

TEST(CdfApprox, FarTail) {
  for (const auto* c : {&ctx1(), &ctx2()})
    for (auto k : kAllKinds) EXPECT_NEAR(cdf_approx(*c, 10.0, k), 1.0, 1e-8) << to_string(k);
}

TEST(CdfApprox, NormalKind) {
  EXPECT_NEAR(cdf_approx(ctx1(), 1.959964, CdfKind::normal), 0.975, 1e-7);
  EXPECT_EQ(cdf_bracket(ctx1(), 0.4, CdfKind::normal), 0.0);
}

TEST(CdfApprox, KindNames) {
  for (auto k : kAllKinds) EXPECT_EQ(parse_cdf_kind(to_string(k)), k);
  EXPECT_THROW(parse_cdf_kind("hall3"), std::invalid_argument);
}

TEST(CdfApprox, ConvergesToNormal) {
  const auto c = make(1, 0.0, 100000000LL);
  for (auto k : kAllKinds)
    for (double z = -3.0; z <= 3.0; z += 0.25) EXPECT_LT(std::abs(cdf_bracket(c, z, k)), 1e-2) << to_string(k);
}

TEST(CdfApprox, Pilot2WithoutPilotTermsIsMain) {
  auto c = ctx2();
  c.omega111 = 0.0;
  c.psi111 = 0.0;
  for (double z : {-2.0, -0.3, 0.0, 1.1, 2.4})
    EXPECT_EQ(cdf_approx(c, z, CdfKind::pilot2), cdf_approx(c, z, CdfKind::main));
}

TEST(CdfApprox, StudentWithoutStudentTermsIsShared) {
  auto c = ctx1();
  c.delta = c.mu11 = c.mu21 = c.mu02 = 0.0;
  const auto r = detail::rates(c);
  for (double z : {-2.0, -0.3, 0.0, 1.1, 2.4}) {
    const auto sp = student_polynomials(c, z);
    const double q_terms =
        sp.q1 * r.nh_half + (sp.q2 + sp.frak_q1) * r.plug + sp.q3 * r.nh_one + sp.frak_q2 * r.pilot2;
    const double shared = detail::plugin_part(c, r, z) + detail::pilot_part(c, r, z);
    EXPECT_NEAR(cdf_bracket(c, z, CdfKind::student) - q_terms, shared, 1e-14);
  }
}

TEST(Quantile, NormalKind) {
  EXPECT_NEAR(cornish_fisher_quantile(ctx1(), CdfKind::normal, 0.975), 1.959964, 1e-6);
  EXPECT_THROW(cornish_fisher_quantile(ctx1(), CdfKind::normal, 1.0), std::invalid_argument);
  EXPECT_THROW(cornish_fisher_quantile(ctx1(), CdfKind::normal, 0.0), std::invalid_argument);
}

TEST(Quantile, RoundTrip) {
  const std::vector<ExpansionContext> ctxs{ctx1(), ctx2(), make(1, 1.0, 1000), make(2, -2.0, 400), make(1, 0.0, 50)};
  for (const auto& c : ctxs)
    for (auto k : kAllKinds)
      for (double a : {0.01, 0.025, 0.05, 0.5, 0.95, 0.975, 0.99}) {
        const double z = cornish_fisher_quantile(c, k, a);
        EXPECT_LE(std::abs(cdf_approx(c, z, k) - a), 1e-8) << to_string(k) << " alpha " << a << " x " << c.x;
      }
}

TEST(Quantile, PathologicalContextReportsKindAndAlpha) {
  auto c = ctx1();
  c.mu30 = std::nan("");
  try {
    cornish_fisher_quantile(c, CdfKind::hall1, 0.975);
    FAIL() << "expected RootError";
  } catch (const RootError& e) {
    EXPECT_NE(std::string(e.what()).find("hall1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("0.975"), std::string::npos);
  }
}

TEST(Quantile, FrozenModelOne) {
  const auto& c = ctx1();
  EXPECT_NEAR(cornish_fisher_quantile(c, CdfKind::hall2, 0.025), -1.9408, 1e-4);
  EXPECT_NEAR(cornish_fisher_quantile(c, CdfKind::hall2, 0.975), 1.9808, 1e-4);
  EXPECT_NEAR(cornish_fisher_quantile(c, CdfKind::main, 0.025), -2.234, 1e-3);
  EXPECT_NEAR(cornish_fisher_quantile(c, CdfKind::main, 0.975), 2.453, 1e-3);
  EXPECT_NEAR(cornish_fisher_quantile(c, CdfKind::pilot2, 0.025), -2.159, 1e-3);
  EXPECT_NEAR(cornish_fisher_quantile(c, CdfKind::pilot2, 0.975), 2.765, 1e-3);
}

TEST(ExactOrder, MainMinusHallShrinks) {
  double prev = INFINITY;
  for (long long n : {100LL, 1000LL, 10000LL, 100000LL}) {
    const auto c = make(1, 0.5, n, BPolicy::none());
    double sup = 0.0;
    for (double z = -4.0; z <= 4.0; z += 0.01)
      sup = std::max(sup, std::abs(cdf_approx(c, z, CdfKind::main) - cdf_approx(c, z, CdfKind::hall2)));
    EXPECT_LT(sup, prev) << "n " << n;
    prev = sup;
  }
}

TEST(MuSeriesTest, ModelOneAtZero) {
  const auto s = mu_series(marron_wand(1), gauss(), 0.0, 2);
  EXPECT_NEAR(s.m2[0], 0.1125395, 1e-7);
  EXPECT_NEAR(s.m2[1], -0.1591549, 1e-7);
  EXPECT_NEAR(s.m3[1], -3.0 * 0.2820948 * 0.1591549, 1e-6);
  EXPECT_NEAR(s.m3[1], -0.1346903, 1e-7);
}

TEST(MuSeriesTest, MatchesQuadratureAtSmallH) {
  for (int model : {1, 2})
    for (double x : {-0.4, 0.0, 1.0}) {
      const auto c = make(model, x, 10000000LL, BPolicy::none());
      const auto s = mu_series(c.model, gauss(), x, 2);
      const double h = c.h0;
      EXPECT_NEAR(c.mu20, s.m2[0] + s.m2[1] * h + s.m2[2] * h * h, 5.0 * h * h * h) << model << " " << x;
      EXPECT_NEAR(c.mu30, s.m3[0] + s.m3[1] * h + s.m3[2] * h * h, 5.0 * h * h * h) << model << " " << x;
    }
}

TEST(PowerSeries, FirstCoefficientZeros) {
  for (double z : {-1.0, 1.0}) {
    const auto ps = power_series_coeffs(marron_wand(1), gauss(), h6(), 2, 6, 0.3, z);
    EXPECT_NEAR(ps.a[0], 0.0, 1e-15);
  }
}

TEST(PowerSeries, SkewSeriesMatchesContexts) {
  const auto f = marron_wand(2);
  const double x = 0.4;
  const auto s = mu_series(f, gauss(), x, 2);
  const auto sk = detail::skew_series(s, 2);
  const auto c = make(2, x, 100000000LL, BPolicy::none());
  const double h = c.h0;
  EXPECT_NEAR(c.mu30 * std::pow(c.mu20, -1.5), sk[0] + sk[1] * h + sk[2] * h * h, 50.0 * h * h * h);
}

namespace {

// log-log slope of |exact - series| between n1 and n2.
double residual_slope(int model, double x, double z, CdfKind kind, long long n1, long long n2) {
  const auto ps = power_series_coeffs(marron_wand(model), gauss(), h6(), 2, 6, x, z);
  const auto& coef = kind == CdfKind::hall2 ? ps.a : ps.b_coeff;
  auto resid = [&](long long n) {
    const auto c = make(model, x, n, BPolicy::none());
    double series = 0.0;
    for (int q = 0; q < static_cast<int>(coef.size()); ++q) series += coef[q] * std::pow(double(n), -(2.0 + q) / 5.0);
    return std::abs(cdf_bracket(c, z, kind) - series);
  };
  return std::log(resid(n2) / resid(n1)) / std::log(double(n2) / double(n1));
}

}  // namespace

// The truncated series leaves an O(n^-1) residual.
TEST(PowerSeries, HallSeriesResidualOrder) {
  for (double z : {-1.7, 0.6, 2.2}) {
    const double slope = residual_slope(1, 0.5, z, CdfKind::hall2, 10000000LL, 1000000000LL);
    EXPECT_NEAR(slope, -1.0, 0.1) << "z " << z;
  }
}

TEST(PowerSeries, MainSeriesResidualOrder) {
  for (double z : {-1.7, 0.6, 2.2}) {
    const double slope = residual_slope(1, 0.5, z, CdfKind::main, 10000000LL, 1000000000LL);
    EXPECT_NEAR(slope, -1.0, 0.1) << "z " << z;
  }
}

TEST(PowerSeries, GammaSignsFollowMu20Series) {
  const auto ps = power_series_coeffs(marron_wand(1), gauss(), h6(), 2, 6, 0.5, 1.0);
  const auto& g = ps.gammas;
  const double k02 = 1.0 / (2.0 * std::sqrt(kPi));
  const double f = normal_pdf(0.5);
  EXPECT_NEAR(g.g3_1_1 / g.g3_1_0, f / k02, 1e-9);
  EXPECT_NEAR(g.g4_1_1 / g.g4_1_0, 1.5 * f / k02, 1e-9);
  EXPECT_NEAR(g.g4_2_1 / g.g4_2_0, 0.5 * f / k02, 1e-9);
  EXPECT_NEAR(g.c_h, std::pow(4.0 / 3.0, 0.2), 1e-10);
}

TEST(ContextCacheTest, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "kdepi_ctx_cache_test";
  std::filesystem::remove_all(dir);
  const ContextCache cache(dir);
  const auto f = marron_wand(1);
  const auto a = cache.get(f, gauss(), h6(), 2, 6, 0.0, 100, BPolicy::mse(ILVariant::ustat));
  ASSERT_EQ(std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator{}), 1);
  const auto b = cache.get(f, gauss(), h6(), 2, 6, 0.0, 100, BPolicy::mse(ILVariant::ustat));
  for (double z : {-1.96, 0.0, 1.96})
    for (auto k : kAllKinds) EXPECT_EQ(cdf_approx(a, z, k), cdf_approx(b, z, k));
  EXPECT_EQ(a.omega111, b.omega111);
  EXPECT_EQ(a.C_Gamma, b.C_Gamma);
  std::filesystem::remove_all(dir);
}

TEST(ContextCacheTest, KeyMismatchIsRejected) {
  std::stringstream ss;
  write_context(ss, ctx1(), "some key");
  ExpansionContext c;
  EXPECT_FALSE(read_context(ss, c, "other key"));
  std::stringstream bad("not a cache\n");
  EXPECT_FALSE(read_context(bad, c, "some key"));
}
