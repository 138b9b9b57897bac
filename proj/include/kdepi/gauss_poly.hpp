#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "numerics.hpp"

namespace kdepi {

// p(u) * phi(u / s) / s, with p stored in ascending powers.
class GaussPoly {
 public:
  GaussPoly() = default;
  GaussPoly(std::vector<double> coeffs, double scale) : c_(std::move(coeffs)), s_(scale) {
    if (!(s_ > 0.0)) throw std::invalid_argument("GaussPoly: scale must be positive");
    trim();
  }

  double operator()(double u) const {
    const double t = u / s_;
    return poly(u) * kInvSqrt2Pi * std::exp(-0.5 * t * t) / s_;
  }

  double poly(double u) const {
    double acc = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * u + *it;
    return acc;
  }

  const std::vector<double>& coefficients() const { return c_; }
  double scale() const { return s_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }

  // d/du [p phi_s] = (p' - u p / s^2) phi_s
  GaussPoly derivative() const {
    std::vector<double> d(c_.size() + 1, 0.0);
    for (std::size_t i = 1; i < c_.size(); ++i) d[i - 1] += i * c_[i];
    const double inv = 1.0 / (s_ * s_);
    for (std::size_t i = 0; i < c_.size(); ++i) d[i + 1] -= c_[i] * inv;
    return GaussPoly(std::move(d), s_);
  }

  GaussPoly derivative(int k) const {
    GaussPoly g = *this;
    for (int i = 0; i < k; ++i) g = g.derivative();
    return g;
  }

  GaussPoly operator*(double a) const {
    auto c = c_;
    for (auto& v : c) v *= a;
    return GaussPoly(std::move(c), s_);
  }

 private:
  void trim() {
    while (c_.size() > 1 && c_.back() == 0.0) c_.pop_back();
    if (c_.empty()) c_.push_back(0.0);
  }

  std::vector<double> c_{0.0};
  double s_ = 1.0;
};

namespace detail {

inline double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// E[W^k] for W ~ N(0, 1)
inline double normal_moment(int k) {
  if (k % 2) return 0.0;
  double r = 1.0;
  for (int j = k - 1; j > 1; j -= 2) r *= j;
  return r;
}

// Coefficients of p(alpha*u + beta*w) as a matrix [power of u][power of w].
inline std::vector<std::vector<double>> affine_substitute(const std::vector<double>& p, double alpha, double beta) {
  const int deg = static_cast<int>(p.size()) - 1;
  std::vector<std::vector<double>> m(deg + 1, std::vector<double>(deg + 1, 0.0));
  for (int i = 0; i <= deg; ++i) {
    if (p[i] == 0.0) continue;
    for (int j = 0; j <= i; ++j)
      m[i - j][j] += p[i] * binom(i, j) * std::pow(alpha, i - j) * std::pow(beta, j);
  }
  return m;
}

}  // namespace detail

// Closed-form convolution. phi_s1(v) phi_s2(u - v) = phi_s(u) phi_tau(v - m u), so the
// result polynomial is E[p1(V) p2(u - V)] with V = m u + tau W.
inline GaussPoly convolve(const GaussPoly& g1, const GaussPoly& g2) {
  const double s1 = g1.scale(), s2 = g2.scale();
  const double s = std::sqrt(s1 * s1 + s2 * s2);
  const double m = s1 * s1 / (s * s);
  const double tau = s1 * s2 / s;
  const auto a = detail::affine_substitute(g1.coefficients(), m, tau);
  const auto b = detail::affine_substitute(g2.coefficients(), 1.0 - m, -tau);
  const int da = static_cast<int>(a.size()) - 1;
  const int db = static_cast<int>(b.size()) - 1;
  std::vector<double> q(da + db + 1, 0.0);
  for (int iu = 0; iu <= da; ++iu)
    for (int iw = 0; iw <= da; ++iw) {
      if (a[iu][iw] == 0.0) continue;
      for (int ju = 0; ju <= db; ++ju)
        for (int jw = 0; jw <= db; ++jw) {
          if (b[ju][jw] == 0.0) continue;
          q[iu + ju] += a[iu][iw] * b[ju][jw] * detail::normal_moment(iw + jw);
        }
    }
  return GaussPoly(std::move(q), s);
}

}  // namespace kdepi
