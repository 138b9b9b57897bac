#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/roots.hpp>

namespace kdepi {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct QuadratureSpec {
  enum class Scheme { adaptive_simpson, tensor_product_2d };

  Scheme scheme = Scheme::adaptive_simpson;
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_depth = 40;

  static QuadratureSpec default_1d() { return {}; }
  static QuadratureSpec default_2d() { return {Scheme::tensor_product_2d, 1e-8, 1e-8, 7}; }

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_depth < 1)
      throw std::invalid_argument("QuadratureSpec: tolerances must be positive and max_depth >= 1");
  }
};

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double estimate, double error_bound)
      : std::runtime_error(what), estimate_(estimate), error_bound_(error_bound) {}
  double estimate() const { return estimate_; }
  double error_bound() const { return error_bound_; }

 private:
  double estimate_;
  double error_bound_;
};

class RootError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class F>
struct SimpsonState {
  F& f;
  int max_depth;
  double err_sum = 0.0;
  bool exhausted = false;
};

template <class F>
double simpson_step(SimpsonState<F>& st, double a, double b, double fa, double fm, double fb,
                    double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = st.f(lm);
  const double frm = st.f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * eps) {
    st.err_sum += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  if (depth >= st.max_depth) {
    st.exhausted = true;
    st.err_sum += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return simpson_step(st, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1) +
         simpson_step(st, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1);
}

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

inline const std::pair<std::vector<double>, std::vector<double>>& gl_rule() {
  static const auto rule = gauss_legendre(12);
  return rule;
}

}  // namespace detail

// Adaptive Simpson on [lo, hi]. Starts from 16 panels so narrow features are not skipped.
template <class F>
double integrate(F&& f, double lo, double hi, const QuadratureSpec& spec = QuadratureSpec::default_1d()) {
  spec.validate();
  if (!(lo < hi)) {
    if (lo == hi) return 0.0;
    throw std::invalid_argument("integrate: lo must be < hi");
  }
  constexpr int panels = 16;
  const double width = (hi - lo) / panels;
  std::array<double, 2 * panels + 1> fx{};
  for (int i = 0; i <= 2 * panels; ++i) fx[i] = f(lo + 0.5 * width * i);
  double coarse = 0.0;
  for (int p = 0; p < panels; ++p) coarse += width / 6.0 * (fx[2 * p] + 4.0 * fx[2 * p + 1] + fx[2 * p + 2]);
  const double tol = std::max(spec.abs_tol, spec.rel_tol * std::abs(coarse));

  detail::SimpsonState<std::remove_reference_t<F>> st{f, spec.max_depth};
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + width * p;
    const double whole = width / 6.0 * (fx[2 * p] + 4.0 * fx[2 * p + 1] + fx[2 * p + 2]);
    total += detail::simpson_step(st, a, a + width, fx[2 * p], fx[2 * p + 1], fx[2 * p + 2], whole,
                                  tol / panels, 1);
  }
  if (!std::isfinite(total)) throw QuadratureError("integrate: non-finite integrand", total, st.err_sum);
  if (st.exhausted) throw QuadratureError("integrate: max_depth reached before convergence", total, st.err_sum);
  return total;
}

struct Box {
  double x_lo, x_hi, y_lo, y_hi;
};

namespace detail {

template <class F>
double tensor_gl(F& f, const Box& box, int panels) {
  const auto& [nodes, weights] = gl_rule();
  const double hx = (box.x_hi - box.x_lo) / panels;
  const double hy = (box.y_hi - box.y_lo) / panels;
  std::vector<double> xs, wx, ys, wy;
  for (int p = 0; p < panels; ++p) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      xs.push_back(box.x_lo + hx * (p + 0.5 * (nodes[k] + 1.0)));
      wx.push_back(0.5 * hx * weights[k]);
      ys.push_back(box.y_lo + hy * (p + 0.5 * (nodes[k] + 1.0)));
      wy.push_back(0.5 * hy * weights[k]);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < ys.size(); ++j) row += wy[j] * f(xs[i], ys[j]);
    total += wx[i] * row;
  }
  return total;
}

}  // namespace detail

// 2D quadrature. tensor_product_2d: composite Gauss-Legendre, panel count doubled until two
// successive estimates agree. adaptive_simpson: nested 1D adaptive rule.
template <class F>
double integrate2d(F&& f, const Box& box, const QuadratureSpec& spec = QuadratureSpec::default_2d()) {
  spec.validate();
  if (!(box.x_lo < box.x_hi) || !(box.y_lo < box.y_hi))
    throw std::invalid_argument("integrate2d: empty box");

  if (spec.scheme == QuadratureSpec::Scheme::adaptive_simpson) {
    QuadratureSpec inner = spec;
    inner.abs_tol = spec.abs_tol / (box.x_hi - box.x_lo) * 0.1;
    auto outer = [&](double x) {
      return integrate([&](double y) { return f(x, y); }, box.y_lo, box.y_hi, inner);
    };
    return integrate(outer, box.x_lo, box.x_hi, spec);
  }

  int panels = 4;
  double prev = detail::tensor_gl(f, box, panels);
  for (int level = 1; level <= spec.max_depth; ++level) {
    panels *= 2;
    const double cur = detail::tensor_gl(f, box, panels);
    if (!std::isfinite(cur)) throw QuadratureError("integrate2d: non-finite integrand", cur, INFINITY);
    const double diff = std::abs(cur - prev);
    if (diff <= std::max(spec.abs_tol, spec.rel_tol * std::abs(cur))) return cur;
    prev = cur;
  }
  throw QuadratureError("integrate2d: panel refinement did not converge", prev, INFINITY);
}

// Root of a monotone function on a sign-changing bracket (TOMS 748).
template <class G>
double find_root(G&& g, double lo, double hi, double tol) {
  if (!(lo <= hi)) std::swap(lo, hi);
  const double glo = g(lo);
  const double ghi = g(hi);
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if (glo * ghi > 0.0) throw RootError("find_root: no sign change in bracket");
  std::uintmax_t iters = 200;
  auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
  auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, stop, iters);
  const double ga = std::abs(g(a));
  const double gb = std::abs(g(b));
  return ga <= gb ? a : b;
}

// Philox4x32-10 counter-based generator.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

// Stateful generator instantiated locally from an immutable stream descriptor.
class StreamGenerator {
 public:
  using result_type = std::uint64_t;

  explicit StreamGenerator(RngStream s)
      : key_{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32)},
        stream_(s.stream_id) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 2) refill();
    return buf_[pos_++];
  }

  // Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                  static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const auto out = Philox4x32::block(ctr, key_);
    buf_[0] = (std::uint64_t{out[1]} << 32) | out[0];
    buf_[1] = (std::uint64_t{out[3]} << 32) | out[2];
    ++block_;
    pos_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buf_{};
  int pos_ = 2;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline std::vector<double> standard_normal_draws(RngStream stream, std::size_t count) {
  StreamGenerator gen(stream);
  std::vector<double> out(count);
  for (auto& v : out) v = gen.normal();
  return out;
}

}  // namespace kdepi
