#pragma once

// Post-processing of a recorded chain: label-switching resolution (order
// constraint or MAP-permutation matching), posterior over N, averaged
// density curves, and allocation probability tables.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>

#include "shmm/rjmcmc.hpp"

namespace shmm {

inline HmmState permute_state(const HmmState& s, const std::vector<int>& perm) {
  // perm[k] = old index placed at new position k
  const int N = s.N();
  HmmState out;
  out.lambda.resize(N);
  out.Lambda.assign(N, std::vector<double>(N, 0.0));
  out.emissions.resize(N);
  for (int k = 0; k < N; ++k) {
    out.lambda[k] = s.lambda[perm[k]];
    out.emissions[k] = s.emissions[perm[k]];
    for (int l = 0; l < N; ++l) out.Lambda[k][l] = s.Lambda[perm[k]][perm[l]];
  }
  return out;
}

enum class RelabelMethod { order, map };

struct RelabeledChain {
  std::vector<ChainSample> samples;
  RelabelMethod method = RelabelMethod::order;
};

inline RelabeledChain relabel_by_order(const std::vector<ChainSample>& chain) {
  if (!chain.empty() && family_of(chain.front().state.emissions.front()) ==
                            Family::bivariate_normal)
    throw std::invalid_argument(
        "relabel_by_order needs a scalar repulsion coordinate; use map-permutation relabeling");
  RelabeledChain out;
  out.method = RelabelMethod::order;
  out.samples.reserve(chain.size());
  for (const auto& cs : chain) {
    const int N = cs.state.N();
    std::vector<int> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
      return repulsion_point(cs.state.emissions[a])[0] <
             repulsion_point(cs.state.emissions[b])[0];
    });
    ChainSample copy = cs;
    copy.state = permute_state(cs.state, perm);
    out.samples.push_back(std::move(copy));
  }
  return out;
}

inline std::map<int, double> posterior_n_distribution(const std::vector<ChainSample>& chain) {
  if (chain.empty()) throw std::invalid_argument("posterior over N of an empty chain");
  std::map<int, double> dist;
  for (const auto& cs : chain) dist[cs.state.N()] += 1.0;
  for (auto& [n, p] : dist) p /= static_cast<double>(chain.size());
  return dist;
}

inline int modal_n(const std::vector<ChainSample>& chain) {
  int best = 0;
  double best_p = -1.0;
  for (const auto& [n, p] : posterior_n_distribution(chain))
    if (p > best_p) {
      best_p = p;
      best = n;
    }
  return best;
}

namespace detail {

inline double permutation_cost(const HmmState& s, const HmmState& ref,
                               const std::vector<int>& perm) {
  double cost = 0.0;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const auto a = repulsion_point(s.emissions[perm[k]]);
    const auto b = repulsion_point(ref.emissions[k]);
    double d2 = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
    cost += std::sqrt(d2);
  }
  return cost;
}

}  // namespace detail

// MAP-permutation relabeling: restricts to modal-N samples, takes the
// highest-posterior sample as reference, and per sample applies the
// permutation minimizing the summed distance of repulsion points to the
// reference (exhaustive for N <= 9; greedy nearest-point beyond).
inline RelabeledChain relabel_by_map(
    const std::vector<ChainSample>& chain,
    const std::function<double(const HmmState&)>& log_prior = nullptr) {
  const int mode = modal_n(chain);
  std::vector<ChainSample> modal;
  for (const auto& cs : chain)
    if (cs.state.N() == mode) modal.push_back(cs);

  std::size_t map_index = 0;
  double best = neg_inf;
  for (std::size_t i = 0; i < modal.size(); ++i) {
    const double lp = modal[i].log_lik + (log_prior ? log_prior(modal[i].state) : 0.0);
    if (lp > best) {
      best = lp;
      map_index = i;
    }
  }
  const HmmState ref = modal[map_index].state;

  RelabeledChain out;
  out.method = RelabelMethod::map;
  out.samples.reserve(modal.size());
  for (auto& cs : modal) {
    const int N = cs.state.N();
    std::vector<int> perm(N), best_perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    if (N <= 9) {
      double best_cost = std::numeric_limits<double>::infinity();
      do {
        const double c = detail::permutation_cost(cs.state, ref, perm);
        if (c < best_cost) {
          best_cost = c;
          best_perm = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
      // greedy nearest-point matching
      std::vector<bool> used(N, false);
      for (int k = 0; k < N; ++k) {
        int arg = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (int j = 0; j < N; ++j) {
          if (used[j]) continue;
          const auto a = repulsion_point(cs.state.emissions[j]);
          const auto b = repulsion_point(ref.emissions[k]);
          double d2 = 0.0;
          for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
          if (d2 < bd) {
            bd = d2;
            arg = j;
          }
        }
        used[arg] = true;
        best_perm[k] = arg;
      }
    }
    ChainSample copy = cs;
    copy.state = permute_state(cs.state, best_perm);
    out.samples.push_back(std::move(copy));
  }
  return out;
}

struct DensityCurves {
  std::vector<double> grid;
  std::vector<std::vector<double>> per_state;  // [state][grid point]
  std::vector<double> mixture;
};

// Averages w_j(t) f(x | theta_j) over the modal-N samples of a relabeled
// chain; for 2-D families the curve is over the first coordinate with the
// second fixed at its state mean (diagnostic use only).
// `t` is the 0-based time index of the weights used for the curves.
inline DensityCurves averaged_density(const RelabeledChain& chain, std::size_t t,
                                      const std::vector<double>& grid) {
  std::vector<ChainSample> samples;
  const int mode = modal_n(chain.samples);
  for (const auto& cs : chain.samples)
    if (cs.state.N() == mode) samples.push_back(cs);

  DensityCurves out;
  out.grid = grid;
  out.per_state.assign(mode, std::vector<double>(grid.size(), 0.0));
  out.mixture.assign(grid.size(), 0.0);
  for (const auto& cs : samples) {
    const auto w = marginal_state_probs(cs.state, t + 1);
    for (int j = 0; j < mode; ++j) {
      const auto& e = cs.state.emissions[j];
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double logf;
        if (family_of(e) == Family::univariate_normal) {
          const std::array<double, 1> obs{grid[g]};
          logf = log_emission_density(e, obs);
        } else if (family_of(e) == Family::step_angle) {
          const auto& p = std::get<StepAngle>(e);
          const double shape = p.mu * p.mu / (p.sigma * p.sigma);
          const double rate = p.mu / (p.sigma * p.sigma);
          logf = std::log1p(-p.z) + log_gamma_pdf(grid[g], shape, rate);
        } else {
          const auto& p = std::get<BivariateNormal>(e);
          const std::array<double, 2> obs{grid[g], p.mu[1]};
          logf = log_emission_density(e, obs);
        }
        out.per_state[j][g] += w[j] * std::exp(logf);
      }
    }
  }
  const double denom = static_cast<double>(samples.size());
  for (int j = 0; j < mode; ++j)
    for (std::size_t g = 0; g < grid.size(); ++g) {
      out.per_state[j][g] /= denom;
      out.mixture[g] += out.per_state[j][g];
    }
  return out;
}

// T x N table of empirical allocation frequencies across samples and draws.
inline std::vector<std::vector<double>> allocation_probabilities(const RelabeledChain& chain,
                                                                 const ObservationPanel& panel,
                                                                 int draws_per_sample, Rng& rng) {
  const int mode = modal_n(chain.samples);
  std::vector<std::vector<double>> table(panel.T(), std::vector<double>(mode, 0.0));
  double total = 0.0;
  for (const auto& cs : chain.samples) {
    if (cs.state.N() != mode) continue;
    for (int d = 0; d < draws_per_sample; ++d) {
      const auto alloc = sample_allocations(cs.state, panel, rng);
      for (std::size_t t = 0; t < panel.T(); ++t) table[t][alloc.states[t][0]] += 1.0;
      total += 1.0;
    }
  }
  for (auto& row : table)
    for (double& v : row) v /= total;
  return table;
}

}  // namespace shmm
