#pragma once

// Strauss / independent interaction point process machinery: unnormalized
// density, data-driven threshold (KDE of pairwise distances) and penalty
// selection, birth-death configuration sampler, and the exchange-algorithm
// update for the intensity xi. All penalty arithmetic stays in log space:
// log a = -627 underflows a itself to zero in double precision.

#include <vector>

#include "shmm/math.hpp"

namespace shmm {

struct StraussConfig {
  double xi = 1.0;
  double log_a = 0.0;  // 0 = independent process
  double d = 0.0;      // interaction threshold
  std::vector<std::array<double, 2>> region;  // per-coordinate [lo, hi]

  int dim() const { return static_cast<int>(region.size()); }
  double volume() const {
    double v = 1.0;
    for (const auto& [lo, hi] : region) v *= hi - lo;
    return v;
  }
  bool contains(std::span<const double> point) const {
    for (std::size_t c = 0; c < region.size(); ++c)
      if (point[c] < region[c][0] || point[c] > region[c][1]) return false;
    return true;
  }
};

struct XiPrior {
  double lo = 0.0;
  double hi = 1.0;
};

using PointConfiguration = std::vector<std::vector<double>>;

inline double point_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

inline int close_pair_count(const PointConfiguration& pts, double d) {
  int count = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (point_distance(pts[i], pts[j]) < d) ++count;
  return count;
}

// pairs the given point would form against an existing configuration
inline int close_pairs_with(const PointConfiguration& pts, std::span<const double> p, double d,
                            int skip = -1) {
  int count = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (static_cast<int>(i) == skip) continue;
    if (point_distance(pts[i], p) < d) ++count;
  }
  return count;
}

inline double log_unnormalized_density(const StraussConfig& config,
                                       const PointConfiguration& pts) {
  for (const auto& p : pts)
    if (!config.contains(p)) return neg_inf;
  return static_cast<double>(pts.size()) * std::log(config.xi) +
         static_cast<double>(close_pair_count(pts, config.d)) * config.log_a;
}

inline double select_penalty_log_a(double n_star) {
  if (n_star <= 0.0) throw std::invalid_argument("n_star must be positive");
  return -n_star;
}

// ---------------------------------------------------------------------------
// interaction threshold: smallest local minimum of the KDE of all pairwise
// distances (Silverman bandwidth, 1024-point evaluation grid)

struct ThresholdCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double d = 0.0;
};

inline ThresholdCurve select_threshold_curve(const std::vector<std::vector<double>>& points,
                                             std::size_t grid_size = 1024) {
  if (points.size() < 3) throw std::invalid_argument("select_threshold: need >= 3 observations");

  std::vector<double> dist;
  dist.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      dist.push_back(point_distance(points[i], points[j]));

  const double dmax = *std::max_element(dist.begin(), dist.end());
  if (dmax <= 0.0)
    throw std::invalid_argument("select_threshold: all observations identical (degenerate KDE)");

  const double n = static_cast<double>(dist.size());
  double mean = 0.0;
  for (double v : dist) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : dist) var += (v - mean) * (v - mean);
  var /= (n - 1.0);
  const double iqr = quantile_type7(dist, 0.75) - quantile_type7(dist, 0.25);
  double spread = std::sqrt(var);
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  const double bw = 0.9 * spread * std::pow(n, -0.2);
  if (bw <= 0.0) throw std::invalid_argument("select_threshold: zero bandwidth (degenerate KDE)");

  // Binned KDE: histogram the distances finely, then sum kernel weights per
  // evaluation point; exact-enough for locating minima at a fraction of the
  // O(n_dist * grid) cost.
  const std::size_t bins = 8192;
  const double bin_w = dmax / static_cast<double>(bins);
  std::vector<double> counts(bins + 1, 0.0);
  for (double v : dist) {
    auto b = static_cast<std::size_t>(v / bin_w);
    counts[std::min(b, bins)] += 1.0;
  }

  ThresholdCurve curve;
  curve.grid.resize(grid_size);
  curve.density.assign(grid_size, 0.0);
  const double step = dmax / static_cast<double>(grid_size - 1);
  const double norm = 1.0 / (n * bw * std::sqrt(2.0 * pi));
  for (std::size_t g = 0; g < grid_size; ++g) {
    const double x = static_cast<double>(g) * step;
    curve.grid[g] = x;
    double s = 0.0;
    // kernel support effectively within 6 bandwidths
    const double lo = x - 6.0 * bw, hi = x + 6.0 * bw;
    const auto b_lo = static_cast<std::size_t>(std::max(0.0, lo / bin_w));
    const auto b_hi = std::min(bins, static_cast<std::size_t>(std::max(0.0, hi / bin_w)) + 1);
    for (std::size_t b = b_lo; b <= b_hi; ++b) {
      if (counts[b] == 0.0) continue;
      const double center = (static_cast<double>(b) + 0.5) * bin_w;
      const double u = (x - center) / bw;
      s += counts[b] * std::exp(-0.5 * u * u);
    }
    curve.density[g] = s * norm;
  }

  // first interior sign change of the discrete first difference from - to +;
  // a qualifying minimum must be a genuine antimode (the density rises again
  // by at least 1% of the peak), which filters ripples in the sparse tail
  std::vector<double> suffix_max(grid_size, 0.0);
  suffix_max[grid_size - 1] = curve.density[grid_size - 1];
  for (std::size_t g = grid_size - 1; g-- > 0;)
    suffix_max[g] = std::max(curve.density[g], suffix_max[g + 1]);
  const double rise = 0.01 * *std::max_element(curve.density.begin(), curve.density.end());
  for (std::size_t g = 1; g + 1 < grid_size; ++g) {
    if (curve.density[g] < curve.density[g - 1] && curve.density[g] <= curve.density[g + 1] &&
        suffix_max[g + 1] >= curve.density[g] + rise) {
      curve.d = curve.grid[g];
      return curve;
    }
  }
  throw std::runtime_error(
      "select_threshold: pairwise-distance density has no local minimum; "
      "choose the interaction threshold d manually");
}

inline double select_threshold(const std::vector<std::vector<double>>& points) {
  return select_threshold_curve(points).d;
}

// ---------------------------------------------------------------------------
// birth-death sampler over point configurations (cardinality >= 1)

struct BirthDeathSettings {
  int iterations = 2000;
  double q_birth = 0.5;
};

inline std::vector<double> uniform_point(const StraussConfig& config, Rng& rng) {
  std::vector<double> p(config.region.size());
  for (std::size_t c = 0; c < p.size(); ++c)
    p[c] = rng.uniform(config.region[c][0], config.region[c][1]);
  return p;
}

inline PointConfiguration birth_death_sample(const StraussConfig& config,
                                             const BirthDeathSettings& bd, Rng& rng) {
  const double vol = config.volume();
  const double log_xi = std::log(config.xi);
  const double qb = bd.q_birth, qd = 1.0 - bd.q_birth;
  // birth is forced at cardinality 1 so the configuration never empties
  auto birth_prob = [&](std::size_t n) { return n <= 1 ? 1.0 : qb; };
  auto death_prob = [&](std::size_t n) { return n <= 1 ? 0.0 : qd; };

  PointConfiguration pts{uniform_point(config, rng)};
  for (int it = 0; it < bd.iterations; ++it) {
    const std::size_t n = pts.size();
    if (rng.uniform() < birth_prob(n)) {
      const auto p = uniform_point(config, rng);
      const int new_pairs = close_pairs_with(pts, p, config.d);
      const double log_accept = log_xi + new_pairs * config.log_a + std::log(vol) +
                                std::log(death_prob(n + 1) / (n + 1.0)) -
                                std::log(birth_prob(n));
      if (std::log(rng.uniform()) < log_accept) pts.push_back(p);
    } else {
      const auto victim = static_cast<int>(rng.integer(n));
      const int lost_pairs = close_pairs_with(pts, pts[victim], config.d, victim);
      const double log_accept = -log_xi - lost_pairs * config.log_a - std::log(vol) +
                                std::log(birth_prob(n - 1)) + std::log(static_cast<double>(n)) -
                                std::log(death_prob(n));
      if (std::log(rng.uniform()) < log_accept) {
        pts[victim] = pts.back();
        pts.pop_back();
      }
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// exchange update of xi
//
// The posterior of xi given the point configuration carries an intractable
// normalizer; the exchange move cancels it by simulating an auxiliary
// configuration at the proposed intensity. The resulting log acceptance
// ratio reduces to (N - N_aux + 1) * (log xi* - log xi) plus prior support
// (the +1 from the proposal's lognormal asymmetry).
inline double exchange_update_xi(double xi, const PointConfiguration& pts, const XiPrior& prior,
                                 double tau_xi, const StraussConfig& config,
                                 const BirthDeathSettings& bd, Rng& rng) {
  const double xi_star = xi * std::exp(rng.normal(0.0, tau_xi));
  if (xi_star < prior.lo || xi_star > prior.hi) return xi;

  StraussConfig aux_config = config;
  aux_config.xi = xi_star;
  Rng inner = rng.fork();
  const auto aux = birth_death_sample(aux_config, bd, inner);

  const double n = static_cast<double>(pts.size());
  const double n_aux = static_cast<double>(aux.size());
  const double log_accept = (n - n_aux + 1.0) * (std::log(xi_star) - std::log(xi));
  return std::log(rng.uniform()) < log_accept ? xi_star : xi;
}

}  // namespace shmm
