#pragma once

// Small numerics toolbox shared by the samplers: RNG wrapper with
// substreams, stable log-sum-exp, log-densities, and 2x2 matrix helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace shmm {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// Mersenne-Twister wrapper. fork() derives an independent substream so
// inner chains (e.g. the birth-death sampler) do not perturb the outer
// chain's draw sequence when their iteration count changes.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unit_(gen_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(gen_); }

  double normal(double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(gen_);
  }

  // shape/rate parameterization
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(gen_);
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }

  std::uint64_t integer(std::uint64_t n) {  // uniform on {0,...,n-1}
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

  Rng fork() {
    const std::uint64_t s = gen_();
    return Rng(s ^ 0x9e3779b97f4a7c15ULL);
  }

  std::mt19937_64& engine() { return gen_; }

private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

inline double log_sum_exp(std::span<const double> xs) {
  double m = neg_inf;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_add(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// ---------------------------------------------------------------------------
// scalar densities (all on the log scale)

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * pi);
}

inline double log_gamma_pdf(double x, double shape, double rate) {
  if (x <= 0.0) return neg_inf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return neg_inf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

inline double log_uniform_pdf(double x, double lo, double hi) {
  return (x < lo || x > hi) ? neg_inf : -std::log(hi - lo);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Modified Bessel function I0. Power series for small arguments, the
// Abramowitz & Stegun 9.8.2 expansion beyond. Concentrations used here
// stay <= 2, so the series branch dominates in practice.
inline double bessel_i0(double x) {
  const double ax = std::fabs(x);
  if (ax <= 3.75) {
    const double q = ax * ax / 4.0;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 64; ++k) {
      term *= q / (static_cast<double>(k) * k);
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    return sum;
  }
  const double t = 3.75 / ax;
  const double p = 0.39894228 + t * (0.01328592 + t * (0.00225319 + t * (-0.00157565 +
                   t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 +
                   t * (-0.01647633 + t * 0.00392377)))))));
  return std::exp(ax) / std::sqrt(ax) * p;
}

inline double log_von_mises_pdf(double angle, double loc, double conc) {
  return conc * std::cos(angle - loc) - std::log(2.0 * pi * bessel_i0(conc));
}

// wraps into (-pi, pi]
inline double wrap_angle(double a) {
  a = std::fmod(a + pi, 2.0 * pi);
  if (a <= 0.0) a += 2.0 * pi;
  return a - pi;
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// symmetric 2x2 matrices (bivariate emission family)

struct Sym2 {
  double xx = 1.0, xy = 0.0, yy = 1.0;

  double det() const { return xx * yy - xy * xy; }
  bool positive_definite() const { return xx > 0.0 && det() > 0.0; }
  double trace() const { return xx + yy; }

  Sym2 inverse() const {
    const double d = det();
    return {yy / d, -xy / d, xx / d};
  }

  // eigenvalues ascending, eigenvectors as columns (v1 | v2)
  void eigen(std::array<double, 2>& values, std::array<std::array<double, 2>, 2>& vectors) const {
    const double tr = trace();
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det()));
    values = {0.5 * tr - disc, 0.5 * tr + disc};
    for (int i = 0; i < 2; ++i) {
      double vx = xy, vy = values[i] - xx;
      if (std::fabs(vx) + std::fabs(vy) < 1e-14) { vx = 1.0; vy = 0.0; }
      const double nrm = std::hypot(vx, vy);
      vectors[i] = {vx / nrm, vy / nrm};
    }
  }

  double quad(const std::array<double, 2>& v) const {
    return v[0] * v[0] * xx + 2.0 * v[0] * v[1] * xy + v[1] * v[1] * yy;
  }
};

inline Sym2 operator+(const Sym2& a, const Sym2& b) {
  return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy};
}
inline Sym2 operator*(double s, const Sym2& a) { return {s * a.xx, s * a.xy, s * a.yy}; }

inline double log_bivariate_normal_pdf(const std::array<double, 2>& x,
                                       const std::array<double, 2>& mean, const Sym2& cov) {
  const double d = cov.det();
  if (d <= 0.0) return neg_inf;
  const std::array<double, 2> r{x[0] - mean[0], x[1] - mean[1]};
  const double q = (r[0] * r[0] * cov.yy - 2.0 * r[0] * r[1] * cov.xy + r[1] * r[1] * cov.xx) / d;
  return -std::log(2.0 * pi) - 0.5 * std::log(d) - 0.5 * q;
}

// Wishart(df, scale) on 2x2 symmetric positive-definite matrices.
inline double log_wishart2_pdf(const Sym2& x, double df, const Sym2& scale) {
  if (!x.positive_definite() || !scale.positive_definite()) return neg_inf;
  const Sym2 vinv = scale.inverse();
  const double tr = vinv.xx * x.xx + 2.0 * vinv.xy * x.xy + vinv.yy * x.yy;
  const double log_gamma2 = 0.5 * std::log(pi) + std::lgamma(0.5 * df) + std::lgamma(0.5 * (df - 1.0));
  return 0.5 * (df - 3.0) * std::log(x.det()) - 0.5 * tr - df * std::log(2.0) -
         0.5 * df * std::log(scale.det()) - log_gamma2;
}

// Bartlett decomposition sampler.
inline Sym2 sample_wishart2(Rng& rng, double df, const Sym2& scale) {
  // scale = L L^T
  const double l11 = std::sqrt(scale.xx);
  const double l21 = scale.xy / l11;
  const double l22 = std::sqrt(scale.yy - l21 * l21);
  const double a11 = std::sqrt(rng.chi_squared(df));
  const double a22 = std::sqrt(rng.chi_squared(df - 1.0));
  const double a21 = rng.normal(0.0, 1.0);
  // B = L A, X = B B^T
  const double b11 = l11 * a11;
  const double b21 = l21 * a11 + l22 * a21;
  const double b22 = l22 * a22;
  return {b11 * b11, b11 * b21, b21 * b21 + b22 * b22};
}

// type-7 empirical quantile (linear interpolation between order statistics)
inline double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("quantile fraction must be in (0,1)");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

}  // namespace shmm
