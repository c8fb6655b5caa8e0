#pragma once

// Shared statistical test utilities: Kolmogorov-Smirnov and chi-square
// goodness-of-fit p-values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

// one-sample KS statistic against a CDF
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

// asymptotic Kolmogorov distribution tail: P(D_n > d)
inline double ks_pvalue(double d, std::size_t n) {
  const double x = (std::sqrt(static_cast<double>(n)) + 0.12 +
                    0.11 / std::sqrt(static_cast<double>(n))) *
                   d;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k)
    s += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
  return std::clamp(s, 0.0, 1.0);
}

// two-sample KS p-value
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() -
                              static_cast<double>(j) / b.size()));
  }
  const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  return ks_pvalue(d, static_cast<std::size_t>(ne));
}

// regularized upper incomplete gamma Q(s, x), series/continued fraction
inline double gamma_q(double s, double x) {
  if (x < 0.0 || s <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  if (x < s + 1.0) {
    // lower series
    double term = 1.0 / s, sum = term;
    for (int k = 1; k < 500; ++k) {
      term *= x / (s + k);
      sum += term;
      if (term < 1e-16 * sum) break;
    }
    const double p = sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
    return 1.0 - p;
  }
  // Lentz continued fraction for Q
  double b = x + 1.0 - s, c = 1e300, d = 1.0 / b, h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// chi-square goodness-of-fit p-value from observed counts and expected counts
inline double chi_square_pvalue(const std::vector<double>& observed,
                                const std::vector<double>& expected,
                                int constraints = 1) {
  double stat = 0.0;
  int bins = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] < 1e-9) continue;
    const double diff = observed[i] - expected[i];
    stat += diff * diff / expected[i];
    ++bins;
  }
  const int df = bins - constraints;
  if (df <= 0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * stat);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace testutil
