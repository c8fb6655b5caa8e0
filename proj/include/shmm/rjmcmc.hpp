#pragma once

// Reversible-jump sampler: fixed-dimension Metropolis-Hastings sweeps,
// similarity-paired split/combine moves, prior-draw birth/death moves, and
// exchange updates of the Strauss intensity xi.
//
// Conventions that keep the joint prior exactly invariant:
//  * The location prior h(mu | N) is evaluated against the unit Poisson
//    reference: -N log|R| plus (close pairs) * log a. The intensity xi
//    never enters h conditional on N (it cancels with the conditional
//    normalizer), so xi influences the chain only through its own exchange
//    update. With a = 1 this makes the prior over N exactly Uniform{1..N_max}.
//  * A split picks the source component uniformly (1/N) and inserts the
//    second child at a uniform slot (1/(N+1)); the reverse combine is
//    deterministic (closest pair), so the split acceptance carries an
//    indicator that the realized children are that closest pair.
//  * Proposals that would exceed N_max are skipped and counted as rejected.

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shmm/hmm.hpp"
#include "shmm/strauss.hpp"

namespace shmm {

struct RunConfig {
  long iterations = 10000;
  long burn_in = 1000;
  long thin = 1;
  int n_max = 10;
  std::uint64_t seed = 1;
  Family family = Family::univariate_normal;
  EmissionHyperPrior hyper;
  ProposalScales scales;
  StraussConfig strauss;  // strauss.xi = initial intensity; log_a = 0 for the independent prior
  XiPrior xi_prior;
  BirthDeathSettings bd;
  double p_split_combine = 0.5;  // vs birth/death
  double p_split = 0.5;          // within split/combine, for N >= 2
  double p_birth = 0.5;          // within birth/death, for N >= 2
};

enum class MoveType { none, split, combine, birth, death };

struct MoveRecord {
  MoveType type = MoveType::none;
  bool accepted = false;
};

struct ChainSample {
  long iter = 0;
  HmmState state;
  double xi = 1.0;
  double log_lik = 0.0;
  MoveRecord move;
};

namespace detail {
inline double log_gamma11(double x) { return x > 0.0 ? -x : neg_inf; }
inline double log_gamma13(double x) { return x > 0.0 ? std::log(3.0) - 3.0 * x : neg_inf; }
inline double log_beta22(double x) { return log_beta_pdf(x, 2.0, 2.0); }
}  // namespace detail

inline PointConfiguration repulsion_points(const HmmState& state) {
  PointConfiguration pts;
  pts.reserve(state.emissions.size());
  for (const auto& e : state.emissions) pts.push_back(repulsion_point(e));
  return pts;
}

// Similarity totals d_i; the combine move merges the two smallest.
inline std::vector<double> similarity_totals(const HmmState& state) {
  const int N = state.N();
  std::vector<double> d(N, 0.0);
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      double dist2 = 0.0;
      std::visit(
          [&](const auto& a) {
            using P = std::decay_t<decltype(a)>;
            const auto& b = std::get<P>(state.emissions[j]);
            if constexpr (std::is_same_v<P, UnivariateNormal>) {
              dist2 = (a.mu - b.mu) * (a.mu - b.mu) + (a.sigma - b.sigma) * (a.sigma - b.sigma);
            } else if constexpr (std::is_same_v<P, BivariateNormal>) {
              dist2 = (a.mu[0] - b.mu[0]) * (a.mu[0] - b.mu[0]) +
                      (a.mu[1] - b.mu[1]) * (a.mu[1] - b.mu[1]);
            } else {
              dist2 = (a.mu - b.mu) * (a.mu - b.mu) + (a.sigma - b.sigma) * (a.sigma - b.sigma) +
                      (a.m - b.m) * (a.m - b.m) + (a.k - b.k) * (a.k - b.k);
            }
          },
          state.emissions[i]);
      const double dist = std::sqrt(dist2);
      d[i] += dist;
      d[j] += dist;
    }
  return d;
}

// The two components with the smallest d_i, ordered by the family's
// child-role convention.
inline std::pair<int, int> combine_selection(const HmmState& state,
                                             const EmissionHyperPrior& hyper) {
  const auto d = similarity_totals(state);
  int first = 0, second = 1;
  if (d[second] < d[first]) std::swap(first, second);
  for (int i = 2; i < state.N(); ++i) {
    if (d[i] < d[first]) {
      second = first;
      first = i;
    } else if (d[i] < d[second]) {
      second = i;
    }
  }
  if (!child_order_ok(state.emissions[first], state.emissions[second], hyper))
    std::swap(first, second);
  return {first, second};
}

class Sampler {
 public:
  Sampler(const ObservationPanel& panel, const RunConfig& config, Rng& rng)
      : panel_(panel), config_(config), xi_(config.strauss.xi) {
    // start from a single-component prior draw
    state_.lambda = {rng.gamma(1.0, 1.0)};
    state_.Lambda = {{rng.gamma(1.0, 1.0)}};
    StraussConfig sc = config_.strauss;
    state_.emissions = {sample_prior(config_.hyper, uniform_point(sc, rng), rng)};
    logB_ = emission_log_cube(state_, panel_);
    log_lik_ = likelihood_from_cache();
  }

  const HmmState& state() const { return state_; }

  // replace the current state and rebuild the likelihood cache
  void set_state(HmmState s) {
    state_ = std::move(s);
    logB_ = emission_log_cube(state_, panel_);
    log_lik_ = likelihood_from_cache();
  }

  double xi() const { return xi_; }
  double log_lik() const { return log_lik_; }
  const MoveRecord& last_move() const { return last_move_; }

  // log prior of everything except xi (and the flat prior on N)
  double log_joint_prior(const HmmState& s) const {
    double lp = 0.0;
    for (double v : s.lambda) lp += detail::log_gamma11(v);
    for (const auto& row : s.Lambda)
      for (double v : row) lp += detail::log_gamma11(v);
    for (const auto& e : s.emissions) lp += log_emission_prior_without_mu(e, config_.hyper);
    const auto pts = repulsion_points(s);
    for (const auto& p : pts)
      if (!config_.strauss.contains(p)) return neg_inf;
    lp -= static_cast<double>(s.N()) * std::log(config_.strauss.volume());
    lp += close_pair_count(pts, config_.strauss.d) * config_.strauss.log_a;
    return lp;
  }

  void step(Rng& rng) {
    fixed_dim_sweep(rng);
    variable_dim_move(rng);
    exchange_xi(rng);
  }

  void fixed_dim_sweep(Rng& rng) {
    const int N = state_.N();
    // lambda blocks
    for (int i = 0; i < N; ++i) {
      const double old = state_.lambda[i];
      const double prop = old * std::exp(rng.normal(0.0, config_.scales.tau_lambda));
      state_.lambda[i] = prop;
      const double new_lik = likelihood_from_cache();
      const double log_a = (new_lik - log_lik_) + (detail::log_gamma11(prop) -
                           detail::log_gamma11(old)) + (std::log(prop) - std::log(old));
      if (std::log(rng.uniform()) < log_a) log_lik_ = new_lik;
      else state_.lambda[i] = old;
    }
    // transition-weight blocks
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        const double old = state_.Lambda[i][j];
        const double prop = old * std::exp(rng.normal(0.0, config_.scales.tau_Lambda));
        state_.Lambda[i][j] = prop;
        const double new_lik = likelihood_from_cache();
        const double log_a = (new_lik - log_lik_) + (detail::log_gamma11(prop) -
                             detail::log_gamma11(old)) + (std::log(prop) - std::log(old));
        if (std::log(rng.uniform()) < log_a) log_lik_ = new_lik;
        else state_.Lambda[i][j] = old;
      }
    // emission blocks
    const int blocks = emission_block_count(config_.family);
    for (int i = 0; i < N; ++i)
      for (int b = 0; b < blocks; ++b) {
        auto prop = propose_emission_block(state_.emissions[i], config_.scales, b, rng);
        double log_a = prop.log_hastings +
                       log_emission_prior_without_mu(prop.params, config_.hyper) -
                       log_emission_prior_without_mu(state_.emissions[i], config_.hyper);
        if (prop.mu_changed && log_a > neg_inf) {
          const auto pt = repulsion_point(prop.params);
          if (!config_.strauss.contains(pt)) {
            log_a = neg_inf;
          } else if (config_.strauss.log_a != 0.0) {
            auto pts = repulsion_points(state_);
            const int before = close_pairs_with(pts, pts[i], config_.strauss.d, i);
            const int after = close_pairs_with(pts, pt, config_.strauss.d, i);
            log_a += (after - before) * config_.strauss.log_a;
          }
        }
        if (log_a == neg_inf) continue;
        const EmissionParams old = state_.emissions[i];
        const std::vector<std::vector<double>> old_col = column_of(i);
        state_.emissions[i] = prop.params;
        refresh_emission_cube_column(logB_, state_, panel_, i);
        const double new_lik = likelihood_from_cache();
        log_a += new_lik - log_lik_;
        if (std::log(rng.uniform()) < log_a) {
          log_lik_ = new_lik;
        } else {
          state_.emissions[i] = old;
          restore_column(i, old_col);
        }
      }
  }

  struct VdProposal {
    bool attempted = false;
    MoveType type = MoveType::none;
    HmmState state;
    double log_lik = neg_inf;
    double log_accept = neg_inf;
  };

  void variable_dim_move(Rng& rng) {
    VdProposal vp;
    if (rng.uniform() < config_.p_split_combine) {
      const bool do_split = state_.N() == 1 || rng.uniform() < config_.p_split;
      vp = do_split ? propose_split(rng) : propose_combine(rng);
      last_move_.type = do_split ? MoveType::split : MoveType::combine;
    } else {
      const bool do_birth = state_.N() == 1 || rng.uniform() < config_.p_birth;
      vp = do_birth ? propose_birth(rng) : propose_death(rng);
      last_move_.type = do_birth ? MoveType::birth : MoveType::death;
    }
    last_move_.accepted = false;
    if (!vp.attempted) return;
    if (std::log(rng.uniform()) < vp.log_accept) {
      state_ = std::move(vp.state);
      logB_ = emission_log_cube(state_, panel_);
      log_lik_ = vp.log_lik;
      last_move_.accepted = true;
    }
  }

  void exchange_xi(Rng& rng) {
    StraussConfig sc = config_.strauss;
    sc.xi = xi_;
    xi_ = exchange_update_xi(xi_, repulsion_points(state_), config_.xi_prior,
                             config_.scales.tau_xi, sc, config_.bd, rng);
  }

  // --- trans-dimensional proposals (public so tests can probe the ratios) ---

  VdProposal propose_split(Rng& rng) {
    VdProposal vp;
    const int N = state_.N();
    if (N >= config_.n_max) return vp;  // skipped, counted as rejected
    vp.attempted = true;
    vp.type = MoveType::split;

    const int js = static_cast<int>(rng.integer(N));
    const int slot = static_cast<int>(rng.integer(N + 1));

    // weight-block auxiliaries
    const double rho = rng.beta(2.0, 2.0);
    std::vector<double> rho_j(N, 0.0), theta_j(N, 0.0);
    for (int j = 0; j < N; ++j) {
      if (j == js) continue;
      rho_j[j] = rng.beta(2.0, 2.0);
      theta_j[j] = rng.gamma(1.0, 3.0);
    }
    const double rho_star = rng.beta(2.0, 2.0);
    const double theta_1 = rng.gamma(1.0, 3.0);
    const double theta_2 = rng.gamma(1.0, 3.0);

    double lambda_sum = 0.0;
    for (double v : state_.lambda) lambda_sum += v;
    const double lam_star = state_.lambda[js];
    const WeightContext w{lam_star / lambda_sum, rho * lam_star / lambda_sum,
                          (1.0 - rho) * lam_star / lambda_sum};
    auto es = split_params(state_.emissions[js], config_.hyper, w, rng);
    if (!es.valid) return vp;

    // component order of the child state: child1 replaces js, child2 at slot
    std::vector<int> src(N);
    for (int j = 0; j < N; ++j) src[j] = j;
    src[js] = kChild1;
    src.insert(src.begin() + slot, kChild2);

    HmmState y;
    y.lambda.resize(N + 1);
    y.Lambda.assign(N + 1, std::vector<double>(N + 1, 0.0));
    y.emissions.resize(N + 1);
    int pos1 = -1, pos2 = -1;
    for (int k = 0; k <= N; ++k) {
      if (src[k] == kChild1) {
        pos1 = k;
        y.lambda[k] = rho * lam_star;
        y.emissions[k] = es.child1;
      } else if (src[k] == kChild2) {
        pos2 = k;
        y.lambda[k] = (1.0 - rho) * lam_star;
        y.emissions[k] = es.child2;
      } else {
        y.lambda[k] = state_.lambda[src[k]];
        y.emissions[k] = state_.emissions[src[k]];
      }
    }
    const double Lss = state_.Lambda[js][js];
    for (int k = 0; k <= N; ++k)
      for (int l = 0; l <= N; ++l) {
        const int a = src[k], b = src[l];
        double v;
        if (a >= 0 && b >= 0) v = state_.Lambda[a][b];
        else if (a >= 0) v = state_.Lambda[a][js] * (b == kChild1 ? rho_j[a] : 1.0 - rho_j[a]);
        else if (b >= 0) v = a == kChild1 ? state_.Lambda[js][b] * theta_j[b]
                                          : state_.Lambda[js][b] / theta_j[b];
        else if (a == kChild1) v = b == kChild1 ? Lss * rho_star * theta_1
                                                : Lss * (1.0 - rho_star) * theta_2;
        else v = b == kChild1 ? Lss * rho_star / theta_1 : Lss * (1.0 - rho_star) / theta_2;
        y.Lambda[k][l] = v;
      }

    // reversibility indicator: the deterministic combine applied to y must
    // select exactly this child pair, in these roles
    if (N + 1 >= 2) {
      const auto sel = combine_selection(y, config_.hyper);
      if (sel.first != pos1 || sel.second != pos2) return vp;
    }

    double log_jac = std::log(lam_star);
    double log_aux = detail::log_beta22(rho);
    for (int j = 0; j < N; ++j) {
      if (j == js) continue;
      log_jac += std::log(state_.Lambda[j][js]);
      log_jac += std::log(2.0) + std::log(state_.Lambda[js][j]) - std::log(theta_j[j]);
      log_aux += detail::log_beta22(rho_j[j]) + detail::log_gamma13(theta_j[j]);
    }
    log_jac += std::log(4.0) + std::log(rho_star) + std::log1p(-rho_star) +
               3.0 * std::log(Lss) - std::log(theta_1) - std::log(theta_2);
    log_aux += detail::log_beta22(rho_star) + detail::log_gamma13(theta_1) +
               detail::log_gamma13(theta_2);
    log_jac += es.log_jacobian;
    log_aux += es.log_aux_density;

    const double prior_y = log_joint_prior(y);
    if (prior_y == neg_inf) return vp;
    vp.log_lik = log_likelihood(y, panel_);
    vp.state = std::move(y);
    vp.log_accept = (vp.log_lik - log_lik_) + (prior_y - log_joint_prior(state_)) + log_jac -
                    log_aux + std::log(static_cast<double>(N)) +
                    std::log(static_cast<double>(N + 1)) + std::log(p_combine_at(N + 1)) -
                    std::log(p_split_at(N));
    return vp;
  }

  VdProposal propose_combine(Rng& rng) {
    (void)rng;
    VdProposal vp;
    const int N = state_.N();
    if (N < 2) return vp;
    vp.attempted = true;
    vp.type = MoveType::combine;

    const auto [j1, j2] = combine_selection(state_, config_.hyper);

    double lambda_sum = 0.0;
    for (double v : state_.lambda) lambda_sum += v;
    const double lam_star = state_.lambda[j1] + state_.lambda[j2];
    const double rho = state_.lambda[j1] / lam_star;
    const WeightContext w{lam_star / lambda_sum, state_.lambda[j1] / lambda_sum,
                          state_.lambda[j2] / lambda_sum};
    auto ec = combine_params(state_.emissions[j1], state_.emissions[j2], config_.hyper, w);
    if (!ec.valid) return vp;

    // recovered weight-block auxiliaries
    const double L11 = state_.Lambda[j1][j1], L12 = state_.Lambda[j1][j2];
    const double L21 = state_.Lambda[j2][j1], L22 = state_.Lambda[j2][j2];
    const double Lss = std::sqrt(L11 * L21) + std::sqrt(L12 * L22);
    const double rho_star = std::sqrt(L11 * L21) / Lss;
    const double theta_1 = std::sqrt(L11 / L21);
    const double theta_2 = std::sqrt(L12 / L22);

    // merged state: parent takes j1's place, j2 is removed
    HmmState x;
    const int M = N - 1;
    x.lambda.reserve(M);
    x.emissions.reserve(M);
    std::vector<int> keep;
    for (int j = 0; j < N; ++j)
      if (j != j2) keep.push_back(j);
    double log_jac = std::log(lam_star);
    double log_aux = detail::log_beta22(rho);
    for (int j : keep) {
      if (j == j1) {
        x.lambda.push_back(lam_star);
        x.emissions.push_back(ec.parent);
      } else {
        x.lambda.push_back(state_.lambda[j]);
        x.emissions.push_back(state_.emissions[j]);
      }
    }
    x.Lambda.assign(M, std::vector<double>(M, 0.0));
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) {
        const int ja = keep[a], jb = keep[b];
        double v;
        if (ja == j1 && jb == j1) v = Lss;
        else if (jb == j1) v = state_.Lambda[ja][j1] + state_.Lambda[ja][j2];
        else if (ja == j1) v = std::sqrt(state_.Lambda[j1][jb] * state_.Lambda[j2][jb]);
        else v = state_.Lambda[ja][jb];
        x.Lambda[a][b] = v;
      }
    for (int j : keep) {
      if (j == j1) continue;
      const double col_parent = state_.Lambda[j][j1] + state_.Lambda[j][j2];
      const double rho_j = state_.Lambda[j][j1] / col_parent;
      const double theta_jv = std::sqrt(state_.Lambda[j1][j] / state_.Lambda[j2][j]);
      log_jac += std::log(col_parent);
      log_jac += std::log(2.0) + std::log(std::sqrt(state_.Lambda[j1][j] * state_.Lambda[j2][j])) -
                 std::log(theta_jv);
      log_aux += detail::log_beta22(rho_j) + detail::log_gamma13(theta_jv);
    }
    log_jac += std::log(4.0) + std::log(rho_star) + std::log1p(-rho_star) +
               3.0 * std::log(Lss) - std::log(theta_1) - std::log(theta_2);
    log_aux += detail::log_beta22(rho_star) + detail::log_gamma13(theta_1) +
               detail::log_gamma13(theta_2);
    log_jac += ec.log_jacobian;
    log_aux += ec.log_aux_density;

    const double prior_x = log_joint_prior(x);
    if (prior_x == neg_inf) return vp;
    vp.log_lik = log_likelihood(x, panel_);
    vp.state = std::move(x);
    // A_combine = 1 / A_split(x -> current state)
    vp.log_accept = (vp.log_lik - log_lik_) + (prior_x - log_joint_prior(state_)) - log_jac +
                    log_aux - std::log(static_cast<double>(M)) -
                    std::log(static_cast<double>(N)) - std::log(p_combine_at(N)) +
                    std::log(p_split_at(M));
    return vp;
  }

  VdProposal propose_birth(Rng& rng) {
    VdProposal vp;
    const int N = state_.N();
    if (N >= config_.n_max) return vp;
    vp.attempted = true;
    vp.type = MoveType::birth;

    const int slot = static_cast<int>(rng.integer(N + 1));
    const double lam_new = rng.gamma(1.0, 1.0);
    std::vector<double> col(N), row(N);
    for (int j = 0; j < N; ++j) col[j] = rng.gamma(1.0, 1.0);
    for (int j = 0; j < N; ++j) row[j] = rng.gamma(1.0, 1.0);
    const double diag = rng.gamma(1.0, 1.0);
    const auto point = uniform_point(config_.strauss, rng);
    const EmissionParams born = sample_prior(config_.hyper, point, rng);

    HmmState y;
    y.lambda.resize(N + 1);
    y.Lambda.assign(N + 1, std::vector<double>(N + 1, 0.0));
    y.emissions.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
      const int a = k < slot ? k : k - 1;
      if (k == slot) {
        y.lambda[k] = lam_new;
        y.emissions[k] = born;
      } else {
        y.lambda[k] = state_.lambda[a];
        y.emissions[k] = state_.emissions[a];
      }
      for (int l = 0; l <= N; ++l) {
        const int b = l < slot ? l : l - 1;
        if (k == slot && l == slot) y.Lambda[k][l] = diag;
        else if (k == slot) y.Lambda[k][l] = row[b];
        else if (l == slot) y.Lambda[k][l] = col[a];
        else y.Lambda[k][l] = state_.Lambda[a][b];
      }
    }

    double log_q = detail::log_gamma11(lam_new) + detail::log_gamma11(diag) -
                   std::log(config_.strauss.volume()) +
                   log_emission_prior_without_mu(born, config_.hyper);
    for (int j = 0; j < N; ++j) log_q += detail::log_gamma11(col[j]) + detail::log_gamma11(row[j]);

    const double prior_y = log_joint_prior(y);
    if (prior_y == neg_inf) return vp;
    vp.log_lik = log_likelihood(y, panel_);
    vp.state = std::move(y);
    vp.log_accept = (vp.log_lik - log_lik_) + (prior_y - log_joint_prior(state_)) - log_q +
                    std::log(p_death_at(N + 1)) - std::log(p_birth_at(N));
    return vp;
  }

  VdProposal propose_death(Rng& rng) {
    VdProposal vp;
    const int N = state_.N();
    if (N < 2) return vp;
    vp.attempted = true;
    vp.type = MoveType::death;

    const int victim = static_cast<int>(rng.integer(N));
    HmmState y;
    for (int j = 0; j < N; ++j) {
      if (j == victim) continue;
      y.lambda.push_back(state_.lambda[j]);
      y.emissions.push_back(state_.emissions[j]);
      std::vector<double> r;
      for (int l = 0; l < N; ++l)
        if (l != victim) r.push_back(state_.Lambda[j][l]);
      y.Lambda.push_back(std::move(r));
    }

    // density of re-proposing the removed block in the reverse birth
    double log_q = detail::log_gamma11(state_.lambda[victim]) +
                   detail::log_gamma11(state_.Lambda[victim][victim]) -
                   std::log(config_.strauss.volume()) +
                   log_emission_prior_without_mu(state_.emissions[victim], config_.hyper);
    for (int j = 0; j < N; ++j) {
      if (j == victim) continue;
      log_q += detail::log_gamma11(state_.Lambda[j][victim]) +
               detail::log_gamma11(state_.Lambda[victim][j]);
    }

    const double prior_y = log_joint_prior(y);
    if (prior_y == neg_inf) return vp;
    vp.log_lik = log_likelihood(y, panel_);
    vp.state = std::move(y);
    vp.log_accept = (vp.log_lik - log_lik_) + (prior_y - log_joint_prior(state_)) + log_q -
                    std::log(p_death_at(N)) + std::log(p_birth_at(N - 1));
    return vp;
  }

 private:
  static constexpr int kChild1 = -1;
  static constexpr int kChild2 = -2;

  double p_split_at(int n) const { return n == 1 ? 1.0 : config_.p_split; }
  double p_combine_at(int n) const { return n >= 2 ? 1.0 - config_.p_split : 0.0; }
  double p_birth_at(int n) const { return n == 1 ? 1.0 : config_.p_birth; }
  double p_death_at(int n) const { return n >= 2 ? 1.0 - config_.p_birth : 0.0; }

  double likelihood_from_cache() const {
    if (panel_.empty()) return 0.0;
    return forward_log_likelihood_cube(state_.initial_distribution(), state_.transition_matrix(),
                                       logB_);
  }

  std::vector<std::vector<double>> column_of(int j) const {
    std::vector<std::vector<double>> col(panel_.T());
    for (std::size_t t = 0; t < panel_.T(); ++t) col[t] = logB_[t][j];
    return col;
  }
  void restore_column(int j, const std::vector<std::vector<double>>& col) {
    for (std::size_t t = 0; t < panel_.T(); ++t) logB_[t][j] = col[t];
  }

  const ObservationPanel& panel_;
  RunConfig config_;
  HmmState state_;
  double xi_;
  std::vector<std::vector<std::vector<double>>> logB_;  // [t][state][chain]
  double log_lik_ = 0.0;
  MoveRecord last_move_;
};

inline std::vector<ChainSample> run_chain(const ObservationPanel& panel, const RunConfig& config) {
  Rng rng(config.seed);
  Sampler sampler(panel, config, rng);
  std::vector<ChainSample> chain;
  for (long iter = 1; iter <= config.iterations; ++iter) {
    sampler.step(rng);
    if (iter > config.burn_in && (iter - config.burn_in) % config.thin == 0)
      chain.push_back({iter, sampler.state(), sampler.xi(), sampler.log_lik(),
                       sampler.last_move()});
  }
  return chain;
}

// ---------------------------------------------------------------------------
// chain serialization: JSON lines, numbers with 17 significant digits

namespace detail {

inline void append_num(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
}

inline void append_emission(std::string& s, const EmissionParams& e) {
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, UnivariateNormal>) {
          s += "{\"family\":\"univariate_normal\",\"mu\":";
          append_num(s, p.mu);
          s += ",\"sigma\":";
          append_num(s, p.sigma);
          s += "}";
        } else if constexpr (std::is_same_v<P, BivariateNormal>) {
          s += "{\"family\":\"bivariate_normal\",\"mu\":[";
          append_num(s, p.mu[0]);
          s += ",";
          append_num(s, p.mu[1]);
          s += "],\"Sigma\":[[";
          append_num(s, p.Sigma.xx);
          s += ",";
          append_num(s, p.Sigma.xy);
          s += "],[";
          append_num(s, p.Sigma.xy);
          s += ",";
          append_num(s, p.Sigma.yy);
          s += "]]}";
        } else {
          s += "{\"family\":\"step_angle\",\"z\":";
          append_num(s, p.z);
          s += ",\"mu\":";
          append_num(s, p.mu);
          s += ",\"sigma\":";
          append_num(s, p.sigma);
          s += ",\"m\":";
          append_num(s, p.m);
          s += ",\"k\":";
          append_num(s, p.k);
          s += "}";
        }
      },
      e);
}

}  // namespace detail

inline std::string chain_sample_to_json(const ChainSample& cs) {
  std::string s = "{\"iter\":" + std::to_string(cs.iter);
  s += ",\"N\":" + std::to_string(cs.state.N());
  s += ",\"lambda\":[";
  for (std::size_t i = 0; i < cs.state.lambda.size(); ++i) {
    if (i) s += ",";
    detail::append_num(s, cs.state.lambda[i]);
  }
  s += "],\"Lambda\":[";
  for (std::size_t i = 0; i < cs.state.Lambda.size(); ++i) {
    if (i) s += ",";
    s += "[";
    for (std::size_t j = 0; j < cs.state.Lambda[i].size(); ++j) {
      if (j) s += ",";
      detail::append_num(s, cs.state.Lambda[i][j]);
    }
    s += "]";
  }
  s += "],\"emissions\":[";
  for (std::size_t i = 0; i < cs.state.emissions.size(); ++i) {
    if (i) s += ",";
    detail::append_emission(s, cs.state.emissions[i]);
  }
  s += "],\"xi\":";
  detail::append_num(s, cs.xi);
  s += ",\"log_lik\":";
  detail::append_num(s, cs.log_lik);
  s += "}";
  return s;
}

inline void write_chain(const std::vector<ChainSample>& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write chain file: " + path);
  for (const auto& cs : chain) out << chain_sample_to_json(cs) << '\n';
}

inline EmissionParams emission_from_json(const nlohmann::json& j) {
  const std::string family = j.at("family");
  if (family == "univariate_normal")
    return UnivariateNormal{j.at("mu"), j.at("sigma")};
  if (family == "bivariate_normal") {
    BivariateNormal p;
    p.mu = {j.at("mu")[0], j.at("mu")[1]};
    p.Sigma = {j.at("Sigma")[0][0], j.at("Sigma")[0][1], j.at("Sigma")[1][1]};
    return p;
  }
  if (family == "step_angle")
    return StepAngle{j.at("z"), j.at("mu"), j.at("sigma"), j.at("m"), j.at("k")};
  throw std::runtime_error("unknown emission family in chain file: " + family);
}

inline std::vector<ChainSample> read_chain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain file: " + path);
  std::vector<ChainSample> chain;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ChainSample cs;
    cs.iter = j.at("iter");
    cs.xi = j.at("xi");
    cs.log_lik = j.at("log_lik");
    cs.state.lambda = j.at("lambda").get<std::vector<double>>();
    cs.state.Lambda = j.at("Lambda").get<std::vector<std::vector<double>>>();
    for (const auto& e : j.at("emissions")) cs.state.emissions.push_back(emission_from_json(e));
    chain.push_back(std::move(cs));
  }
  return chain;
}

}  // namespace shmm
