#pragma once

// HMM parameter state (Gamma-decomposed Dirichlet weights) plus the
// marginalized likelihood via the scaled forward recursion, a brute-force
// enumeration oracle, data simulation, and allocation sampling.

#include <vector>

#include "shmm/emissions.hpp"
#include "shmm/panel.hpp"

namespace shmm {

struct HmmState {
  std::vector<double> lambda;               // initial-distribution weights, pi_i = lambda_i / sum
  std::vector<std::vector<double>> Lambda;  // transition weights, P_ij = Lambda_ij / row sum
  std::vector<EmissionParams> emissions;

  int N() const { return static_cast<int>(lambda.size()); }

  std::vector<double> initial_distribution() const {
    double s = 0.0;
    for (double v : lambda) s += v;
    std::vector<double> pi(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) pi[i] = lambda[i] / s;
    return pi;
  }

  std::vector<std::vector<double>> transition_matrix() const {
    std::vector<std::vector<double>> P(Lambda.size());
    for (std::size_t i = 0; i < Lambda.size(); ++i) {
      double s = 0.0;
      for (double v : Lambda[i]) s += v;
      P[i].resize(Lambda[i].size());
      for (std::size_t j = 0; j < Lambda[i].size(); ++j) P[i][j] = Lambda[i][j] / s;
    }
    return P;
  }
};

struct AllocationDraw {
  // states[t][r]: 0-based state index per time point and replicate
  std::vector<std::vector<int>> states;
};

// Per-time log emission terms, replicates multiplied inside the time slice:
// logB[t][j] = sum_r log f(O_{t,r} | theta_j).
inline std::vector<std::vector<double>> emission_log_table(const HmmState& state,
                                                           const ObservationPanel& panel) {
  std::vector<std::vector<double>> logB(panel.T(), std::vector<double>(state.N(), 0.0));
  for (std::size_t t = 0; t < panel.T(); ++t)
    for (int j = 0; j < state.N(); ++j) {
      double s = 0.0;
      for (const auto& obs : panel.replicates[t])
        s += log_emission_density(state.emissions[j], obs);
      logB[t][j] = s;
    }
  return logB;
}

// Recomputes a single state's column of the table (used by block updates).
inline void refresh_emission_column(std::vector<std::vector<double>>& logB,
                                    const HmmState& state, const ObservationPanel& panel,
                                    int j) {
  for (std::size_t t = 0; t < panel.T(); ++t) {
    double s = 0.0;
    for (const auto& obs : panel.replicates[t])
      s += log_emission_density(state.emissions[j], obs);
    logB[t][j] = s;
  }
}

// Per-time, per-state, per-chain log emission terms. A panel with shared
// per-time states collapses to one pseudo-chain whose emission term is the
// replicate sum, so downstream code can treat both layouts uniformly:
// cube[t][j][c] = log f(chain c's observation at t | theta_j).
inline std::vector<std::vector<std::vector<double>>> emission_log_cube(
    const HmmState& state, const ObservationPanel& panel) {
  const std::size_t chains = panel.independent_chains ? panel.replicates.front().size() : 1;
  std::vector<std::vector<std::vector<double>>> cube(
      panel.T(), std::vector<std::vector<double>>(state.N(), std::vector<double>(chains, 0.0)));
  for (std::size_t t = 0; t < panel.T(); ++t) {
    if (panel.independent_chains && panel.replicates[t].size() != chains)
      throw std::invalid_argument("independent-chain panels need equal replicate counts");
    for (int j = 0; j < state.N(); ++j) {
      if (panel.independent_chains) {
        for (std::size_t c = 0; c < chains; ++c)
          cube[t][j][c] = log_emission_density(state.emissions[j], panel.replicates[t][c]);
      } else {
        double s = 0.0;
        for (const auto& obs : panel.replicates[t])
          s += log_emission_density(state.emissions[j], obs);
        cube[t][j][0] = s;
      }
    }
  }
  return cube;
}

inline void refresh_emission_cube_column(std::vector<std::vector<std::vector<double>>>& cube,
                                         const HmmState& state, const ObservationPanel& panel,
                                         int j) {
  for (std::size_t t = 0; t < panel.T(); ++t) {
    if (panel.independent_chains) {
      for (std::size_t c = 0; c < panel.replicates[t].size(); ++c)
        cube[t][j][c] = log_emission_density(state.emissions[j], panel.replicates[t][c]);
    } else {
      double s = 0.0;
      for (const auto& obs : panel.replicates[t])
        s += log_emission_density(state.emissions[j], obs);
      cube[t][j][0] = s;
    }
  }
}

// Scaled forward recursion on a precomputed emission table.
inline double forward_log_likelihood(const std::vector<double>& pi,
                                     const std::vector<std::vector<double>>& P,
                                     const std::vector<std::vector<double>>& logB) {
  const int N = static_cast<int>(pi.size());
  if (N < 1) throw std::invalid_argument("forward recursion requires N >= 1");
  if (logB.empty()) return 0.0;

  std::vector<double> alpha(N), next(N);
  double log_norm = 0.0;
  for (std::size_t t = 0; t < logB.size(); ++t) {
    double m = neg_inf;
    for (int j = 0; j < N; ++j) m = std::max(m, logB[t][j]);
    if (m == neg_inf) return neg_inf;
    double c = 0.0;
    for (int j = 0; j < N; ++j) {
      double w;
      if (t == 0) {
        w = pi[j];
      } else {
        w = 0.0;
        for (int i = 0; i < N; ++i) w += alpha[i] * P[i][j];
      }
      next[j] = w * std::exp(logB[t][j] - m);
      c += next[j];
    }
    if (c <= 0.0 || !std::isfinite(c)) return neg_inf;
    for (int j = 0; j < N; ++j) alpha[j] = next[j] / c;
    log_norm += std::log(c) + m;
  }
  return log_norm;
}

// Sum of independent scaled forward recursions, one per chain slice of the cube.
inline double forward_log_likelihood_cube(
    const std::vector<double>& pi, const std::vector<std::vector<double>>& P,
    const std::vector<std::vector<std::vector<double>>>& cube) {
  const int N = static_cast<int>(pi.size());
  if (N < 1) throw std::invalid_argument("forward recursion requires N >= 1");
  if (cube.empty()) return 0.0;
  const std::size_t chains = cube.front().front().size();

  double total = 0.0;
  std::vector<double> alpha(N), next(N);
  for (std::size_t c = 0; c < chains; ++c) {
    double log_norm = 0.0;
    for (std::size_t t = 0; t < cube.size(); ++t) {
      double m = neg_inf;
      for (int j = 0; j < N; ++j) m = std::max(m, cube[t][j][c]);
      if (m == neg_inf) return neg_inf;
      double norm = 0.0;
      for (int j = 0; j < N; ++j) {
        double w;
        if (t == 0) {
          w = pi[j];
        } else {
          w = 0.0;
          for (int i = 0; i < N; ++i) w += alpha[i] * P[i][j];
        }
        next[j] = w * std::exp(cube[t][j][c] - m);
        norm += next[j];
      }
      if (norm <= 0.0 || !std::isfinite(norm)) return neg_inf;
      for (int j = 0; j < N; ++j) alpha[j] = next[j] / norm;
      log_norm += std::log(norm) + m;
    }
    total += log_norm;
  }
  return total;
}

inline double log_likelihood(const HmmState& state, const ObservationPanel& panel) {
  if (panel.empty()) return 0.0;
  if (panel.independent_chains)
    return forward_log_likelihood_cube(state.initial_distribution(), state.transition_matrix(),
                                       emission_log_cube(state, panel));
  return forward_log_likelihood(state.initial_distribution(), state.transition_matrix(),
                                emission_log_table(state, panel));
}

// Exact enumeration over all N^T state sequences (test oracle).
inline double brute_force_log_likelihood(const HmmState& state, const ObservationPanel& panel) {
  if (panel.empty()) return 0.0;
  if (panel.independent_chains) {
    // one enumeration per chain, each chain being a single-replicate panel
    double total = 0.0;
    for (std::size_t c = 0; c < panel.replicates.front().size(); ++c) {
      ObservationPanel one;
      one.kind = panel.kind;
      one.dim = panel.dim;
      for (const auto& at_t : panel.replicates) one.replicates.push_back({at_t.at(c)});
      total += brute_force_log_likelihood(state, one);
    }
    return total;
  }
  const int N = state.N();
  const std::size_t T = panel.T();
  double total = std::pow(static_cast<double>(N), static_cast<double>(T));
  if (total > 1e6) throw std::invalid_argument("brute-force instance too large (N^T > 1e6)");

  const auto pi = state.initial_distribution();
  const auto P = state.transition_matrix();
  const auto logB = emission_log_table(state, panel);

  std::vector<int> seq(T, 0);
  std::vector<double> terms;
  while (true) {
    double lp = std::log(pi[seq[0]]) + logB[0][seq[0]];
    for (std::size_t t = 1; t < T; ++t) lp += std::log(P[seq[t - 1]][seq[t]]) + logB[t][seq[t]];
    terms.push_back(lp);
    std::size_t t = 0;
    while (t < T && ++seq[t] == N) seq[t++] = 0;
    if (t == T) break;
  }
  return log_sum_exp(terms);
}

inline int sample_categorical(Rng& rng, const std::vector<double>& weights) {
  double s = 0.0;
  for (double w : weights) s += w;
  if (s <= 0.0 || !std::isfinite(s))
    throw std::runtime_error("categorical draw over all-zero or non-finite weights");
  double u = rng.uniform() * s;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u <= 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

inline std::pair<ObservationPanel, AllocationDraw> simulate(const HmmState& state,
                                                            std::size_t T, std::size_t n,
                                                            Rng& rng) {
  const auto pi = state.initial_distribution();
  const auto P = state.transition_matrix();

  ObservationPanel panel;
  switch (family_of(state.emissions.front())) {
    case Family::univariate_normal: panel.kind = PanelKind::scalar; panel.dim = 1; break;
    case Family::bivariate_normal: panel.kind = PanelKind::vector2; panel.dim = 2; break;
    case Family::step_angle: panel.kind = PanelKind::step_angle; panel.dim = 2; break;
  }

  AllocationDraw alloc;
  int s = sample_categorical(rng, pi);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) s = sample_categorical(rng, P[s]);
    std::vector<std::vector<double>> at_t;
    for (std::size_t r = 0; r < n; ++r)
      at_t.push_back(sample_observation(state.emissions[s], rng));
    panel.replicates.push_back(std::move(at_t));
    alloc.states.push_back(std::vector<int>(n, s));
  }
  return {panel, alloc};
}

// Variant where every replicate evolves its own state chain under (pi, P),
// so the time-t cross section is a draw from the marginal state mixture.
// The returned panel is flagged independent_chains so the likelihood
// matches the generator.
inline std::pair<ObservationPanel, AllocationDraw> simulate_replicated(const HmmState& state,
                                                                       std::size_t T,
                                                                       std::size_t n,
                                                                       Rng& rng) {
  const auto pi = state.initial_distribution();
  const auto P = state.transition_matrix();

  ObservationPanel panel;
  switch (family_of(state.emissions.front())) {
    case Family::univariate_normal: panel.kind = PanelKind::scalar; panel.dim = 1; break;
    case Family::bivariate_normal: panel.kind = PanelKind::vector2; panel.dim = 2; break;
    case Family::step_angle: panel.kind = PanelKind::step_angle; panel.dim = 2; break;
  }
  panel.independent_chains = true;

  AllocationDraw alloc;
  std::vector<int> s(n);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::vector<double>> at_t;
    at_t.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      s[r] = sample_categorical(rng, t == 0 ? pi : P[s[r]]);
      at_t.push_back(sample_observation(state.emissions[s[r]], rng));
    }
    panel.replicates.push_back(std::move(at_t));
    alloc.states.push_back(s);
  }
  return {panel, alloc};
}

// Sequential allocation draw conditioning on the previous state and the
// current observation: S_1 ~ pi_j f(O_1), S_t ~ P_{S_{t-1}, j} f(O_t).
inline AllocationDraw sample_allocations(const HmmState& state, const ObservationPanel& panel,
                                         Rng& rng) {
  const auto pi = state.initial_distribution();
  const auto P = state.transition_matrix();
  const int N = state.N();
  AllocationDraw alloc;
  if (panel.independent_chains) {
    // same sequential conditional, run once per chain
    const std::size_t n = panel.replicates.front().size();
    alloc.states.assign(panel.T(), std::vector<int>(n, 0));
    std::vector<int> prev_c(n, -1);
    for (std::size_t t = 0; t < panel.T(); ++t)
      for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> logw(N);
        double m = neg_inf;
        for (int j = 0; j < N; ++j) {
          logw[j] = std::log(t == 0 ? pi[j] : P[prev_c[c]][j]) +
                    log_emission_density(state.emissions[j], panel.replicates[t][c]);
          m = std::max(m, logw[j]);
        }
        if (m == neg_inf)
          throw std::runtime_error("all allocation weights vanish at t=" + std::to_string(t + 1));
        std::vector<double> w(N);
        for (int j = 0; j < N; ++j) w[j] = std::exp(logw[j] - m);
        alloc.states[t][c] = sample_categorical(rng, w);
        prev_c[c] = alloc.states[t][c];
      }
    return alloc;
  }
  int prev = -1;
  for (std::size_t t = 0; t < panel.T(); ++t) {
    std::vector<double> logw(N);
    double m = neg_inf;
    for (int j = 0; j < N; ++j) {
      double s = std::log(t == 0 ? pi[j] : P[prev][j]);
      for (const auto& obs : panel.replicates[t])
        s += log_emission_density(state.emissions[j], obs);
      logw[j] = s;
      m = std::max(m, s);
    }
    if (m == neg_inf)
      throw std::runtime_error("all allocation weights vanish at t=" + std::to_string(t + 1));
    std::vector<double> w(N);
    for (int j = 0; j < N; ++j) w[j] = std::exp(logw[j] - m);
    const int s = sample_categorical(rng, w);
    alloc.states.push_back(std::vector<int>(panel.replicates[t].size(), s));
    prev = s;
  }
  return alloc;
}

// Draws a state for each replicate independently from the time-t marginal
// (used by the misclassification metric, where replicates are co-allocated
// per observation rather than per time point).
inline std::vector<int> sample_replicate_allocations(const HmmState& state,
                                                     const std::vector<double>& weights,
                                                     const std::vector<std::vector<double>>& obs,
                                                     Rng& rng) {
  const int N = state.N();
  std::vector<int> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    std::vector<double> logw(N);
    double m = neg_inf;
    for (int j = 0; j < N; ++j) {
      logw[j] = std::log(weights[j]) + log_emission_density(state.emissions[j], o);
      m = std::max(m, logw[j]);
    }
    std::vector<double> w(N);
    for (int j = 0; j < N; ++j) w[j] = std::exp(logw[j] - m);
    out.push_back(sample_categorical(rng, w));
  }
  return out;
}

inline std::vector<double> marginal_state_probs(const HmmState& state, std::size_t t) {
  auto probs = state.initial_distribution();
  const auto P = state.transition_matrix();
  const int N = state.N();
  for (std::size_t step = 1; step < t; ++step) {
    std::vector<double> next(N, 0.0);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) next[j] += probs[i] * P[i][j];
    probs = std::move(next);
  }
  return probs;
}

}  // namespace shmm
