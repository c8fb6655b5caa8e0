#pragma once

// JSON run-configuration parsing and the data-driven defaulting rules
// (region bounds, prior quantile bounds, interaction threshold, xi prior).

#include <fstream>

#include <nlohmann/json.hpp>

#include "shmm/evaluation.hpp"
#include "shmm/rjmcmc.hpp"

namespace shmm {

inline constexpr const char* kVersion = "0.1.0";

struct CliConfig {
  RunConfig run;
  std::string prior = "repulsive";  // or "independent"
  std::string panel_path;
  std::string output_dir = ".";
  // strauss defaulting knobs
  double n_star = 0.0;              // 0 = penalty off unless set
  bool auto_threshold = false;      // select d from the panel
  double xi_multiplier = 80.0;
  bool region_given = false;
  bool independent_chains = false;  // treat each replicate as its own latent chain
  // postprocess knobs
  std::string relabel = "order";
  long density_time = 0;            // 0 = last time point
  std::size_t density_grid_size = 512;
  int allocation_draws = 10;
  // simulate
  StudyScenario scenario;
  // study
  StudySettings study;
  std::vector<StudyScenario> study_scenarios;
  nlohmann::json raw;
};

namespace detail {

inline Family parse_family(const std::string& s) {
  if (s == "univariate_normal") return Family::univariate_normal;
  if (s == "bivariate_normal") return Family::bivariate_normal;
  if (s == "step_angle") return Family::step_angle;
  throw std::runtime_error("config: unknown family '" + s + "'");
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline StudyScenario parse_scenario(const nlohmann::json& j) {
  StudyScenario sc;
  maybe(j, "overlap", sc.overlap_label);
  sc.sigma = study_sigma_for_label(sc.overlap_label);
  maybe(j, "n", sc.n);
  maybe(j, "T", sc.T);
  maybe(j, "replications", sc.replications);
  if (j.contains("means")) sc.means = j.at("means").get<std::vector<double>>();
  if (j.contains("sigma")) sc.sigma = j.at("sigma").get<double>();
  return sc;
}

}  // namespace detail

inline CliConfig load_cli_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }

  CliConfig c;
  c.raw = j;
  detail::maybe(j, "panel", c.panel_path);
  detail::maybe(j, "output_dir", c.output_dir);
  detail::maybe(j, "prior", c.prior);
  detail::maybe(j, "independent_chains", c.independent_chains);
  if (c.prior != "repulsive" && c.prior != "independent")
    throw std::runtime_error("config: prior must be 'repulsive' or 'independent'");

  auto& r = c.run;
  detail::maybe(j, "iterations", r.iterations);
  detail::maybe(j, "burn_in", r.burn_in);
  detail::maybe(j, "thin", r.thin);
  detail::maybe(j, "n_max", r.n_max);
  detail::maybe(j, "seed", r.seed);
  if (r.burn_in >= r.iterations)
    throw std::runtime_error("config: burn_in must be smaller than iterations");
  if (r.thin < 1) throw std::runtime_error("config: thin must be >= 1");

  std::string family = "univariate_normal";
  detail::maybe(j, "family", family);
  r.family = detail::parse_family(family);
  r.hyper.family = r.family;

  switch (r.family) {
    case Family::step_angle: r.scales = ProposalScales::gps_defaults(); break;
    case Family::bivariate_normal: r.scales = ProposalScales::acoustic_defaults(); break;
    case Family::univariate_normal: r.scales = ProposalScales::simulation_defaults(); break;
  }
  c.xi_multiplier = r.family == Family::bivariate_normal ? 120.0 : 80.0;

  if (j.contains("proposals")) {
    const auto& p = j.at("proposals");
    detail::maybe(p, "tau_mu", r.scales.tau_mu);
    detail::maybe(p, "tau_sigma", r.scales.tau_sigma);
    detail::maybe(p, "tau_k", r.scales.tau_k);
    detail::maybe(p, "tau_m", r.scales.tau_m);
    detail::maybe(p, "tau_z", r.scales.tau_z);
    detail::maybe(p, "tau_Lambda", r.scales.tau_Lambda);
    detail::maybe(p, "tau_lambda", r.scales.tau_lambda);
    detail::maybe(p, "tau_xi", r.scales.tau_xi);
    detail::maybe(p, "wishart_proposal_df", r.scales.wishart_proposal_df);
    detail::maybe(p, "mu_additive", r.scales.mu_additive);
  }
  if (j.contains("strauss")) {
    const auto& s = j.at("strauss");
    detail::maybe(s, "n_star", c.n_star);
    detail::maybe(s, "xi_multiplier", c.xi_multiplier);
    if (s.contains("d")) {
      if (s.at("d").is_string()) {
        if (s.at("d") != "auto") throw std::runtime_error("config: strauss.d must be a number or 'auto'");
        c.auto_threshold = true;
      } else {
        r.strauss.d = s.at("d").get<double>();
      }
    }
    if (s.contains("region")) {
      for (const auto& b : s.at("region"))
        r.strauss.region.push_back({b[0].get<double>(), b[1].get<double>()});
      c.region_given = true;
    }
  }
  if (j.contains("bd")) {
    detail::maybe(j.at("bd"), "iterations", r.bd.iterations);
    detail::maybe(j.at("bd"), "q_birth", r.bd.q_birth);
  }
  if (j.contains("hyper")) {
    const auto& h = j.at("hyper");
    detail::maybe(h, "z_a", r.hyper.z_a);
    detail::maybe(h, "z_b", r.hyper.z_b);
    detail::maybe(h, "k_lo", r.hyper.k_lo);
    detail::maybe(h, "k_hi", r.hyper.k_hi);
    detail::maybe(h, "sigma_lo", r.hyper.sigma_lo);
    detail::maybe(h, "sigma_hi", r.hyper.sigma_hi);
    detail::maybe(h, "wishart_df", r.hyper.wishart_df);
  }
  detail::maybe(j, "relabel", c.relabel);
  detail::maybe(j, "density_time", c.density_time);
  detail::maybe(j, "density_grid_size", c.density_grid_size);
  detail::maybe(j, "allocation_draws", c.allocation_draws);
  if (j.contains("scenario")) c.scenario = detail::parse_scenario(j.at("scenario"));
  if (j.contains("study")) {
    const auto& s = j.at("study");
    detail::maybe(s, "iterations", c.study.iterations);
    detail::maybe(s, "burn_in", c.study.burn_in);
    detail::maybe(s, "thin", c.study.thin);
    detail::maybe(s, "n_max", c.study.n_max);
    detail::maybe(s, "threads", c.study.threads);
    detail::maybe(s, "bd_iterations", c.study.bd_iterations);
    detail::maybe(s, "metric_samples", c.study.metric_samples);
    detail::maybe(s, "penalty_fraction", c.study.penalty_fraction);
    c.study.seed = r.seed;
    if (s.contains("scenarios"))
      for (const auto& sj : s.at("scenarios")) c.study_scenarios.push_back(detail::parse_scenario(sj));
  }

  // environment override of the seed
  if (const char* env = std::getenv("SHMM_SEED")) {
    r.seed = std::strtoull(env, nullptr, 10);
    c.study.seed = r.seed;
  }
  return c;
}

// Fills the data-driven pieces of the run config from the loaded panel.
inline void finalize_run_config(CliConfig& c, const ObservationPanel& panel) {
  auto& r = c.run;
  if (!c.region_given) {
    if (r.family == Family::bivariate_normal) {
      const auto x1 = panel.pooled(0);
      const auto x2 = panel.pooled(1);
      r.strauss.region = {
          {*std::min_element(x1.begin(), x1.end()), *std::max_element(x1.begin(), x1.end())},
          {*std::min_element(x2.begin(), x2.end()), *std::max_element(x2.begin(), x2.end())}};
    } else {
      const auto v = panel.pooled(0);
      const double lo = *std::min_element(v.begin(), v.end());
      const double hi = *std::max_element(v.begin(), v.end());
      // step lengths live on [0, max]
      r.strauss.region = {{r.family == Family::step_angle ? 0.0 : lo, hi}};
    }
  }
  const double vol = r.strauss.volume();
  c.run.xi_prior = {1.0 / vol, c.xi_multiplier / vol};
  r.strauss.xi = std::sqrt(c.run.xi_prior.lo * c.run.xi_prior.hi);
  r.strauss.log_a = c.prior == "repulsive" && c.n_star > 0.0 ? select_penalty_log_a(c.n_star) : 0.0;

  // hyperprior bounds from pooled data quantiles
  if (r.family == Family::step_angle) {
    const auto steps = panel.pooled(0);
    if (!c.raw.contains("hyper") || !c.raw.at("hyper").contains("sigma_lo"))
      r.hyper.sigma_lo = 0.5 * quantile_type7(steps, 0.1);
    if (!c.raw.contains("hyper") || !c.raw.at("hyper").contains("sigma_hi"))
      r.hyper.sigma_hi = 2.0 * quantile_type7(steps, 0.9);
  } else if (r.family == Family::univariate_normal) {
    if (!c.raw.contains("hyper") || !c.raw.at("hyper").contains("sigma_hi"))
      r.hyper.sigma_hi = 2.0 * quantile_type7(panel.pooled(0), 0.9);
    r.hyper.sigma_lo = 0.0;
  } else {
    // pooled covariance fixes both the Wishart scale and the split eigenbasis
    const auto x1 = panel.pooled(0);
    const auto x2 = panel.pooled(1);
    const double n = static_cast<double>(x1.size());
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < x1.size(); ++i) {
      m1 += x1[i];
      m2 += x2[i];
    }
    m1 /= n;
    m2 /= n;
    Sym2 cov{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < x1.size(); ++i) {
      cov.xx += (x1[i] - m1) * (x1[i] - m1);
      cov.xy += (x1[i] - m1) * (x2[i] - m2);
      cov.yy += (x2[i] - m2) * (x2[i] - m2);
    }
    r.hyper.sigma0 = (1.0 / (n - 1.0)) * cov;
  }

  if (c.auto_threshold && c.prior == "repulsive") {
    std::vector<std::vector<double>> pts;
    if (r.family == Family::bivariate_normal) {
      const auto x1 = panel.pooled(0);
      const auto x2 = panel.pooled(1);
      for (std::size_t i = 0; i < x1.size(); ++i) pts.push_back({x1[i], x2[i]});
    } else {
      for (double v : panel.pooled(0)) pts.push_back({v});
    }
    r.strauss.d = select_threshold(pts);
  }
}

}  // namespace shmm
