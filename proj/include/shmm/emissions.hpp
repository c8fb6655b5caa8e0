#pragma once

// Emission families: univariate normal (simulation study), bivariate
// normal (acoustic 2-PC panels), and zero-inflated Gamma x von Mises
// (step/angle movement panels). Provides log-densities, prior handling,
// per-block random-walk proposals, and split/combine parameter maps with
// their Jacobian log-determinants.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "shmm/math.hpp"

namespace shmm {

enum class Family { univariate_normal, bivariate_normal, step_angle };

struct UnivariateNormal {
  double mu = 0.0;
  double sigma = 1.0;
};

struct BivariateNormal {
  std::array<double, 2> mu{0.0, 0.0};
  Sym2 Sigma{};
};

struct StepAngle {
  double z = 0.05;    // zero-inflation probability
  double mu = 1.0;    // mean step length
  double sigma = 1.0; // step-length standard deviation
  double m = 0.0;     // angle location
  double k = 1.0;     // angle concentration
};

using EmissionParams = std::variant<UnivariateNormal, BivariateNormal, StepAngle>;

inline Family family_of(const EmissionParams& p) {
  if (std::holds_alternative<UnivariateNormal>(p)) return Family::univariate_normal;
  if (std::holds_alternative<BivariateNormal>(p)) return Family::bivariate_normal;
  return Family::step_angle;
}

struct EmissionHyperPrior {
  Family family = Family::univariate_normal;
  // step-angle family
  double z_a = 1.0, z_b = 100.0;
  double k_lo = 0.5, k_hi = 2.0;
  double m_lo = -pi, m_hi = pi;
  // shared sigma bounds: step-angle uses [0.5 q10, 2 q90]; univariate uses (0, 2 q90]
  double sigma_lo = 0.0, sigma_hi = 10.0;
  // bivariate family: Sigma ~ Wishart(wishart_df, sigma0 / 10)
  double wishart_df = 20.0;
  Sym2 sigma0{};  // pooled data covariance; also fixes the split eigenbasis
};

struct ProposalScales {
  double tau_mu = 0.01;
  double tau_sigma = 0.03;
  double tau_k = 0.08;
  double tau_m = 0.08;
  double tau_z = 0.5;
  double tau_Lambda = 0.05;
  double tau_lambda = 0.07;
  double tau_xi = 0.3;
  double wishart_proposal_df = 1200.0;
  bool mu_additive = false;  // additive normal walk on mu instead of log-scale walk

  static ProposalScales gps_defaults() { return ProposalScales{}; }
  static ProposalScales acoustic_defaults() {
    ProposalScales s;
    s.tau_mu = 0.3;
    s.mu_additive = true;
    s.tau_Lambda = 1.0;
    s.tau_lambda = 1.5;
    return s;
  }
  static ProposalScales simulation_defaults() {
    ProposalScales s;
    s.tau_mu = 0.3;
    s.mu_additive = true;
    s.tau_sigma = 0.1;
    s.tau_Lambda = 0.3;
    s.tau_lambda = 0.3;
    return s;
  }
};

// ---------------------------------------------------------------------------
// densities

inline double log_emission_density(const EmissionParams& params, std::span<const double> obs) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, UnivariateNormal>) {
          if (obs.size() != 1) throw std::invalid_argument("expected scalar observation");
          return log_normal_pdf(obs[0], p.mu, p.sigma);
        } else if constexpr (std::is_same_v<P, BivariateNormal>) {
          if (obs.size() != 2) throw std::invalid_argument("expected 2-vector observation");
          return log_bivariate_normal_pdf({obs[0], obs[1]}, p.mu, p.Sigma);
        } else {
          if (obs.size() != 2) throw std::invalid_argument("expected (step, angle) observation");
          const double step = obs[0], angle = obs[1];
          double step_term;
          if (step == 0.0) {
            step_term = std::log(p.z);  // point mass at zero
          } else {
            const double shape = p.mu * p.mu / (p.sigma * p.sigma);
            const double rate = p.mu / (p.sigma * p.sigma);
            step_term = std::log1p(-p.z) + log_gamma_pdf(step, shape, rate);
          }
          return step_term + log_von_mises_pdf(angle, p.m, p.k);
        }
      },
      params);
}

// Log prior density of all emission parameters except the repulsive
// coordinate mu, whose (Strauss or independent) prior lives in the
// strauss module. Returns -inf outside the prior support.
inline double log_emission_prior_without_mu(const EmissionParams& params,
                                            const EmissionHyperPrior& hyper) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, UnivariateNormal>) {
          return log_uniform_pdf(p.sigma, 0.0, hyper.sigma_hi);
        } else if constexpr (std::is_same_v<P, BivariateNormal>) {
          return log_wishart2_pdf(p.Sigma, hyper.wishart_df, (1.0 / 10.0) * hyper.sigma0);
        } else {
          return log_beta_pdf(p.z, hyper.z_a, hyper.z_b) +
                 log_uniform_pdf(p.sigma, hyper.sigma_lo, hyper.sigma_hi) +
                 log_uniform_pdf(p.m, hyper.m_lo, hyper.m_hi) +
                 log_uniform_pdf(p.k, hyper.k_lo, hyper.k_hi);
        }
      },
      params);
}

inline std::vector<double> repulsion_point(const EmissionParams& params) {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, BivariateNormal>) return {p.mu[0], p.mu[1]};
        else return {p.mu};
      },
      params);
}

inline void set_repulsion_point(EmissionParams& params, std::span<const double> point) {
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, BivariateNormal>) {
          p.mu = {point[0], point[1]};
        } else {
          p.mu = point[0];
        }
      },
      params);
}

// Draws every parameter except mu from the hyperprior; mu comes from the
// supplied repulsion point (birth moves pass a uniform draw over R).
inline EmissionParams sample_prior(const EmissionHyperPrior& hyper,
                                   std::span<const double> point, Rng& rng) {
  switch (hyper.family) {
    case Family::univariate_normal: {
      UnivariateNormal p;
      p.mu = point[0];
      p.sigma = rng.uniform(0.0, hyper.sigma_hi);
      return p;
    }
    case Family::bivariate_normal: {
      BivariateNormal p;
      p.mu = {point[0], point[1]};
      p.Sigma = sample_wishart2(rng, hyper.wishart_df, (1.0 / 10.0) * hyper.sigma0);
      return p;
    }
    case Family::step_angle: {
      StepAngle p;
      p.z = rng.beta(hyper.z_a, hyper.z_b);
      p.mu = point[0];
      p.sigma = rng.uniform(hyper.sigma_lo, hyper.sigma_hi);
      p.m = rng.uniform(hyper.m_lo, hyper.m_hi);
      p.k = rng.uniform(hyper.k_lo, hyper.k_hi);
      return p;
    }
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// fixed-dimension proposals, one parameter block per call

inline int emission_block_count(Family family) {
  switch (family) {
    case Family::univariate_normal: return 2;  // mu, sigma
    case Family::bivariate_normal: return 2;   // mu, Sigma
    case Family::step_angle: return 5;         // z, mu, sigma, m, k
  }
  return 0;
}

struct EmissionProposal {
  EmissionParams params;
  double log_hastings = 0.0;  // log q(old|new) - log q(new|old)
  bool mu_changed = false;
};

namespace detail {
inline double lognormal_walk(Rng& rng, double x, double tau, double& log_hastings) {
  const double y = x * std::exp(rng.normal(0.0, tau));
  log_hastings += std::log(y) - std::log(x);
  return y;
}
}  // namespace detail

inline EmissionProposal propose_emission_block(const EmissionParams& params,
                                               const ProposalScales& scales, int block,
                                               Rng& rng) {
  EmissionProposal out{params, 0.0, false};
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, UnivariateNormal>) {
          if (block == 0) {
            p.mu = scales.mu_additive ? p.mu + rng.normal(0.0, scales.tau_mu)
                                      : detail::lognormal_walk(rng, p.mu, scales.tau_mu,
                                                                out.log_hastings);
            out.mu_changed = true;
          } else {
            p.sigma = detail::lognormal_walk(rng, p.sigma, scales.tau_sigma, out.log_hastings);
          }
        } else if constexpr (std::is_same_v<P, BivariateNormal>) {
          if (block == 0) {
            p.mu[0] += rng.normal(0.0, scales.tau_mu);
            p.mu[1] += rng.normal(0.0, scales.tau_mu);
            out.mu_changed = true;
          } else {
            const double df = scales.wishart_proposal_df;
            const Sym2 old = p.Sigma;
            p.Sigma = sample_wishart2(rng, df, (1.0 / df) * old);
            out.log_hastings = log_wishart2_pdf(old, df, (1.0 / df) * p.Sigma) -
                               log_wishart2_pdf(p.Sigma, df, (1.0 / df) * old);
          }
        } else {
          switch (block) {
            case 0: {  // logit-scale walk on z
              const double y = inv_logit(logit(p.z) + rng.normal(0.0, scales.tau_z));
              out.log_hastings = std::log(y * (1.0 - y)) - std::log(p.z * (1.0 - p.z));
              p.z = y;
              break;
            }
            case 1:
              p.mu = detail::lognormal_walk(rng, p.mu, scales.tau_mu, out.log_hastings);
              out.mu_changed = true;
              break;
            case 2:
              p.sigma = detail::lognormal_walk(rng, p.sigma, scales.tau_sigma, out.log_hastings);
              break;
            case 3:
              p.m = wrap_angle(p.m + rng.normal(0.0, scales.tau_m));  // symmetric on the circle
              break;
            case 4:
              p.k = detail::lognormal_walk(rng, p.k, scales.tau_k, out.log_hastings);
              break;
            default:
              throw std::logic_error("bad emission block index");
          }
        }
      },
      out.params);
  return out;
}

// ---------------------------------------------------------------------------
// split / combine maps
//
// Children are ordered: child1 is the component with the smaller repulsion
// first coordinate for additive location splits, or the one on the negative
// side of the leading eigen direction for the bivariate family. The combine
// map applies the same convention, making the pair mutually inverse.

// Mixture-weight context for the bivariate eigen split (pi = normalized
// lambda of parent/children); unused by the scalar families.
struct WeightContext {
  double pi_star = 1.0;
  double pi_1 = 0.5;
  double pi_2 = 0.5;
};

struct EmissionSplit {
  EmissionParams child1, child2;
  double log_jacobian = 0.0;     // emission-parameter block of |J|
  double log_aux_density = 0.0;  // joint density of the auxiliary draws
  bool valid = false;
};

struct EmissionCombine {
  EmissionParams parent;
  double log_jacobian = 0.0;     // of the reverse split, at the recovered point
  double log_aux_density = 0.0;
  bool valid = false;
};

namespace detail {

inline std::array<std::array<double, 2>, 2> split_basis(const EmissionHyperPrior& hyper) {
  std::array<double, 2> vals;
  std::array<std::array<double, 2>, 2> vecs;
  hyper.sigma0.eigen(vals, vecs);
  return vecs;  // fixed eigenvectors of the pooled data covariance
}

}  // namespace detail

inline EmissionSplit split_params(const EmissionParams& parent, const EmissionHyperPrior& hyper,
                                  const WeightContext& w, Rng& rng) {
  EmissionSplit out;
  if (const auto* p = std::get_if<UnivariateNormal>(&parent)) {
    // location: mu* -/+ theta with theta half-normal; scale: geometric spread
    const double theta = std::fabs(rng.normal(0.0, 2.0));
    const double eps = rng.normal(0.0, 0.3);
    UnivariateNormal c1{p->mu - theta, p->sigma * std::exp(eps)};
    UnivariateNormal c2{p->mu + theta, p->sigma * std::exp(-eps)};
    out.child1 = c1;
    out.child2 = c2;
    out.log_jacobian = std::log(4.0 * p->sigma);
    out.log_aux_density = std::log(2.0) + log_normal_pdf(theta, 0.0, 2.0) +
                          log_normal_pdf(eps, 0.0, 0.3);
    out.valid = true;
    return out;
  }
  if (const auto* p = std::get_if<StepAngle>(&parent)) {
    const double theta_mu = rng.uniform(0.0, p->mu / 2.0);
    const double theta_sigma = rng.uniform(0.0, p->sigma / 2.0);
    const double theta_k = rng.uniform(0.0, p->k / 2.0);
    const double eps_m = rng.normal(0.0, 2.0);
    const double z_half = std::min(p->z, 1.0 - p->z);
    const double u_z = rng.uniform(0.0, z_half);
    StepAngle c1{p->z + u_z, p->mu - theta_mu, p->sigma - theta_sigma, p->m + eps_m,
                 p->k - theta_k};
    StepAngle c2{p->z - u_z, p->mu + theta_mu, p->sigma + theta_sigma, p->m - eps_m,
                 p->k + theta_k};
    out.child1 = c1;
    out.child2 = c2;
    out.log_jacobian = 5.0 * std::log(2.0);
    out.log_aux_density = -std::log(p->mu / 2.0) - std::log(p->sigma / 2.0) -
                          std::log(p->k / 2.0) + log_normal_pdf(eps_m, 0.0, 2.0) -
                          std::log(z_half);
    // children m intentionally left unwrapped: out-of-range values are
    // rejected through the Uniform(-pi, pi) prior, keeping the map bijective
    out.valid = true;
    return out;
  }

  const auto& p = std::get<BivariateNormal>(parent);
  const auto basis = detail::split_basis(hyper);
  // parent covariance in the fixed eigenbasis (diagonal coordinates)
  std::array<double, 2> r{p.Sigma.quad(basis[0]), p.Sigma.quad(basis[1])};
  if (r[0] <= 0.0 || r[1] <= 0.0) return out;

  std::array<double, 2> u, beta;
  for (int d = 0; d < 2; ++d) {
    u[d] = rng.beta(2.0, 2.0);
    beta[d] = rng.beta(1.0, 1.0);
  }
  const double c1s = std::sqrt(w.pi_2 / w.pi_1), c2s = std::sqrt(w.pi_1 / w.pi_2);
  BivariateNormal ch1, ch2;
  ch1.mu = p.mu;
  ch2.mu = p.mu;
  Sym2 s1{0.0, 0.0, 0.0}, s2{0.0, 0.0, 0.0};
  out.log_jacobian = 6.0 * std::log(w.pi_star) - 3.0 * std::log(w.pi_1 * w.pi_2);
  for (int d = 0; d < 2; ++d) {
    const double shift = std::sqrt(r[d]) * u[d];
    for (int c = 0; c < 2; ++c) {
      ch1.mu[c] -= c1s * shift * basis[d][c];
      ch2.mu[c] += c2s * shift * basis[d][c];
    }
    const double r1 = beta[d] * (1.0 - u[d] * u[d]) * (w.pi_star / w.pi_1) * r[d];
    const double r2 = (1.0 - beta[d]) * (1.0 - u[d] * u[d]) * (w.pi_star / w.pi_2) * r[d];
    const Sym2 outer{basis[d][0] * basis[d][0], basis[d][0] * basis[d][1],
                     basis[d][1] * basis[d][1]};
    s1 = s1 + r1 * outer;
    s2 = s2 + r2 * outer;
    out.log_jacobian += 1.5 * std::log(r[d]) + std::log1p(-u[d] * u[d]);
    out.log_aux_density += log_beta_pdf(u[d], 2.0, 2.0);  // beta_d ~ Beta(1,1) adds zero
  }
  ch1.Sigma = s1;
  ch2.Sigma = s2;
  out.child1 = ch1;
  out.child2 = ch2;
  out.valid = s1.positive_definite() && s2.positive_definite();
  return out;
}

inline EmissionCombine combine_params(const EmissionParams& child1, const EmissionParams& child2,
                                      const EmissionHyperPrior& hyper, const WeightContext& w) {
  EmissionCombine out;
  if (const auto* a = std::get_if<UnivariateNormal>(&child1)) {
    const auto& b = std::get<UnivariateNormal>(child2);
    const double theta = 0.5 * (b.mu - a->mu);
    if (theta <= 0.0) return out;  // children must be mu-ordered
    const double eps = 0.5 * (std::log(a->sigma) - std::log(b.sigma));
    UnivariateNormal parent{0.5 * (a->mu + b.mu), std::sqrt(a->sigma * b.sigma)};
    out.parent = parent;
    out.log_jacobian = std::log(4.0 * parent.sigma);
    out.log_aux_density = std::log(2.0) + log_normal_pdf(theta, 0.0, 2.0) +
                          log_normal_pdf(eps, 0.0, 0.3);
    out.valid = true;
    return out;
  }
  if (const auto* a = std::get_if<StepAngle>(&child1)) {
    const auto& b = std::get<StepAngle>(child2);
    StepAngle parent{0.5 * (a->z + b.z), 0.5 * (a->mu + b.mu), 0.5 * (a->sigma + b.sigma),
                     0.5 * (a->m + b.m), 0.5 * (a->k + b.k)};
    const double theta_mu = 0.5 * (b.mu - a->mu);
    const double theta_sigma = 0.5 * (b.sigma - a->sigma);
    const double theta_k = 0.5 * (b.k - a->k);
    const double u_z = 0.5 * (a->z - b.z);
    const double z_half = std::min(parent.z, 1.0 - parent.z);
    // recovered auxiliaries must land inside their proposal supports
    if (theta_mu <= 0.0 || theta_mu >= parent.mu / 2.0) return out;
    if (theta_sigma <= 0.0 || theta_sigma >= parent.sigma / 2.0) return out;
    if (theta_k <= 0.0 || theta_k >= parent.k / 2.0) return out;
    if (u_z <= 0.0 || u_z >= z_half) return out;
    out.parent = parent;
    out.log_jacobian = 5.0 * std::log(2.0);
    out.log_aux_density = -std::log(parent.mu / 2.0) - std::log(parent.sigma / 2.0) -
                          std::log(parent.k / 2.0) +
                          log_normal_pdf(0.5 * (a->m - b.m), 0.0, 2.0) - std::log(z_half);
    out.valid = true;
    return out;
  }

  const auto& a = std::get<BivariateNormal>(child1);
  const auto& b = std::get<BivariateNormal>(child2);
  const auto basis = detail::split_basis(hyper);
  BivariateNormal parent;
  for (int c = 0; c < 2; ++c)
    parent.mu[c] = (w.pi_1 * a.mu[c] + w.pi_2 * b.mu[c]) / w.pi_star;
  Sym2 sp{0.0, 0.0, 0.0};
  out.log_jacobian = 6.0 * std::log(w.pi_star) - 3.0 * std::log(w.pi_1 * w.pi_2);
  for (int d = 0; d < 2; ++d) {
    const double r1 = a.Sigma.quad(basis[d]);
    const double r2 = b.Sigma.quad(basis[d]);
    if (r1 <= 0.0 || r2 <= 0.0) return out;
    const double dmu = (b.mu[0] - a.mu[0]) * basis[d][0] + (b.mu[1] - a.mu[1]) * basis[d][1];
    if (dmu <= 0.0) return out;  // children must be ordered along each eigen direction
    const double r_star = (w.pi_1 * r1 + w.pi_2 * r2) / w.pi_star +
                          (w.pi_1 * w.pi_2) / (w.pi_star * w.pi_star) * dmu * dmu;
    const double u = std::sqrt(w.pi_1 * w.pi_2) * dmu / (w.pi_star * std::sqrt(r_star));
    if (u <= 0.0 || u >= 1.0) return out;
    const double beta = r1 * w.pi_1 / ((1.0 - u * u) * w.pi_star * r_star);
    if (beta <= 0.0 || beta >= 1.0) return out;
    const Sym2 outer{basis[d][0] * basis[d][0], basis[d][0] * basis[d][1],
                     basis[d][1] * basis[d][1]};
    sp = sp + r_star * outer;
    out.log_jacobian += 1.5 * std::log(r_star) + std::log1p(-u * u);
    out.log_aux_density += log_beta_pdf(u, 2.0, 2.0);
  }
  parent.Sigma = sp;
  out.parent = parent;
  out.valid = sp.positive_definite();
  return out;
}

// Ordering predicate for combine-pair roles: true when `a` should play
// child1 against `b` under the family's split convention.
inline bool child_order_ok(const EmissionParams& a, const EmissionParams& b,
                           const EmissionHyperPrior& hyper) {
  if (family_of(a) != Family::bivariate_normal) {
    return repulsion_point(a)[0] < repulsion_point(b)[0];
  }
  const auto basis = detail::split_basis(hyper);
  const auto pa = std::get<BivariateNormal>(a).mu;
  const auto pb = std::get<BivariateNormal>(b).mu;
  return (pb[0] - pa[0]) * basis[0][0] + (pb[1] - pa[1]) * basis[0][1] > 0.0;
}

// sampling from an emission distribution (simulate / allocation draws)

inline double sample_von_mises(Rng& rng, double loc, double conc) {
  // Best & Fisher (1979) rejection sampler
  if (conc < 1e-8) return rng.uniform(-pi, pi);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * conc * conc);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * conc);
  const double rr = (1.0 + rho * rho) / (2.0 * rho);
  while (true) {
    const double u1 = rng.uniform();
    const double zc = std::cos(pi * u1);
    const double f = (1.0 + rr * zc) / (rr + zc);
    const double c = conc * (rr - f);
    const double u2 = rng.uniform();
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double u3 = rng.uniform();
      const double sign = u3 > 0.5 ? 1.0 : -1.0;
      return wrap_angle(sign * std::acos(f) + loc);
    }
  }
}

inline std::vector<double> sample_observation(const EmissionParams& params, Rng& rng) {
  return std::visit(
      [&](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, UnivariateNormal>) {
          return {rng.normal(p.mu, p.sigma)};
        } else if constexpr (std::is_same_v<P, BivariateNormal>) {
          const double l11 = std::sqrt(p.Sigma.xx);
          const double l21 = p.Sigma.xy / l11;
          const double l22 = std::sqrt(p.Sigma.yy - l21 * l21);
          const double z1 = rng.normal(0.0, 1.0), z2 = rng.normal(0.0, 1.0);
          return {p.mu[0] + l11 * z1, p.mu[1] + l21 * z1 + l22 * z2};
        } else {
          double step = 0.0;
          if (rng.uniform() >= p.z) {
            const double shape = p.mu * p.mu / (p.sigma * p.sigma);
            const double rate = p.mu / (p.sigma * p.sigma);
            step = rng.gamma(shape, rate);
          }
          return {step, sample_von_mises(rng, p.m, p.k)};
        }
      },
      params);
}

}  // namespace shmm
