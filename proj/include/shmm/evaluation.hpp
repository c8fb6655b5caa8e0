#pragma once

// Simulation-study harness: overlap calibration, KL divergence between true
// and fitted mixture curves, pairwise misclassification, and the scenario
// grid runner that aggregates replications into the results table.

#include <atomic>
#include <functional>
#include <thread>

#include "shmm/postprocess.hpp"

namespace shmm {

// sigma values published for the four consecutive-overlap labels at mean
// spacing 5; these are the study's data-generating constants
inline double study_sigma_for_label(const std::string& label) {
  if (label == "3%") return 1.1408;
  if (label == "9%") return 1.4726;
  if (label == "33%") return 2.5709;
  if (label == "55%") return 4.2319;
  throw std::invalid_argument("unknown overlap label: " + label);
}

inline double consecutive_overlap(double mu1, double sigma1, double mu2, double sigma2) {
  if (sigma1 <= 0.0 || sigma2 <= 0.0) throw std::invalid_argument("sigmas must be positive");
  const double lo = std::min(mu1 - 8.0 * sigma1, mu2 - 8.0 * sigma2);
  const double hi = std::max(mu1 + 8.0 * sigma1, mu2 + 8.0 * sigma2);
  const std::size_t n = 10000;
  const double h = (hi - lo) / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double f = std::min(std::exp(log_normal_pdf(x, mu1, sigma1)),
                              std::exp(log_normal_pdf(x, mu2, sigma2)));
    sum += (i == 0 || i == n) ? 0.5 * f : f;
  }
  return sum * h;
}

inline double sigma_for_overlap(double target, double spacing = 5.0) {
  if (target <= 0.0 || target >= 1.0) throw std::invalid_argument("target must be in (0,1)");
  double lo = 1e-3, hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double ov = consecutive_overlap(0.0, mid, spacing, mid);
    if (std::fabs(ov - target) < 1e-6) return mid;
    (ov < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double kl_divergence_curve(const std::function<double(double)>& p_true,
                                  const std::function<double(double)>& p_fit,
                                  const std::vector<double>& grid) {
  double sum = 0.0;
  std::vector<double> integrand(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = p_true(grid[i]);
    const double q = std::max(p_fit(grid[i]), 1e-300);
    integrand[i] = p > 0.0 ? p * (std::log(p) - std::log(q)) : 0.0;
  }
  for (std::size_t i = 1; i < grid.size(); ++i)
    sum += 0.5 * (integrand[i] + integrand[i - 1]) * (grid[i] - grid[i - 1]);
  return sum;
}

inline std::vector<double> make_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

// average pairwise min-density overlap, reported for labeling only
inline double overall_overlap(const std::vector<double>& means, const std::vector<double>& sigmas) {
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      sum += consecutive_overlap(means[i], sigmas[i], means[j], sigmas[j]);
      ++pairs;
    }
  return pairs ? sum / pairs : 1.0;
}

struct StudyScenario {
  std::vector<double> means{-10.0, -5.0, 0.0, 5.0, 10.0};
  double sigma = 1.1408;
  std::string overlap_label = "3%";
  std::size_t n = 50;   // replicates per time point
  std::size_t T = 5;
  int replications = 10;
};

inline HmmState study_truth(const StudyScenario& sc) {
  HmmState truth;
  const int K = static_cast<int>(sc.means.size());
  truth.lambda.assign(K, 1.0);
  truth.Lambda.assign(K, std::vector<double>(K, 1.0));
  for (int i = 0; i < K; ++i)
    truth.emissions.push_back(UnivariateNormal{sc.means[i], sc.sigma});
  return truth;
}

// mixture density of an HmmState at time t using its marginal state weights
inline std::function<double(double)> mixture_density_at(const HmmState& state, std::size_t t) {
  auto w = marginal_state_probs(state, t);
  std::vector<std::pair<double, double>> comps;  // (mu, sigma)
  for (const auto& e : state.emissions) {
    const auto& p = std::get<UnivariateNormal>(e);
    comps.emplace_back(p.mu, p.sigma);
  }
  return [w = std::move(w), comps = std::move(comps)](double x) {
    double s = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j)
      s += w[j] * std::exp(log_normal_pdf(x, comps[j].first, comps[j].second));
    return s;
  };
}

// KL averaged per the study's nesting: over posterior samples, then times.
inline double study_kl(const std::vector<ChainSample>& samples, const StudyScenario& sc,
                       const HmmState& truth, const std::vector<double>& grid) {
  if (samples.empty()) throw std::invalid_argument("study_kl over an empty chain");
  double over_t = 0.0;
  for (std::size_t t = 1; t <= sc.T; ++t) {
    const auto p0 = mixture_density_at(truth, t);
    std::vector<double> p0_vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) p0_vals[i] = p0(grid[i]);
    double over_l = 0.0;
    for (const auto& cs : samples) {
      const auto pl = mixture_density_at(cs.state, t);
      double sum = 0.0;
      double prev = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double p = p0_vals[i];
        const double q = std::max(pl(grid[i]), 1e-300);
        const double integrand = p > 0.0 ? p * (std::log(p) - std::log(q)) : 0.0;
        if (i > 0) sum += 0.5 * (integrand + prev) * (grid[i] - grid[i - 1]);
        prev = integrand;
      }
      over_l += sum;
    }
    over_t += over_l / static_cast<double>(samples.size());
  }
  return over_t / static_cast<double>(sc.T);
}

// Pairwise same-state misclassification against the true allocation.
inline double misclassification(const AllocationDraw& truth,
                                const std::vector<ChainSample>& samples,
                                const ObservationPanel& panel, Rng& rng) {
  const std::size_t n = panel.replicates.front().size();
  if (n < 2) throw std::invalid_argument("misclassification needs >= 2 replicates per time");
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  double over_t = 0.0;
  for (std::size_t t = 0; t < panel.T(); ++t) {
    double over_l = 0.0;
    for (const auto& cs : samples) {
      const auto w = marginal_state_probs(cs.state, t + 1);
      const auto alloc = sample_replicate_allocations(cs.state, w, panel.replicates[t], rng);
      double wrong = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const bool same_true = truth.states[t][i] == truth.states[t][j];
          const bool same_fit = alloc[i] == alloc[j];
          if (same_true != same_fit) wrong += 1.0;
        }
      over_l += wrong / pairs;
    }
    over_t += over_l / static_cast<double>(samples.size());
  }
  return over_t / static_cast<double>(panel.T());
}

struct StudyRow {
  std::string overlap_label;
  std::size_t n = 0, T = 0;
  std::string prior;
  int modal_N = 0;
  double kl_mean = 0.0, kl_lo = 0.0, kl_hi = 0.0;
  double misc_mean = 0.0, misc_lo = 0.0, misc_hi = 0.0;
};

struct StudySettings {
  long iterations = 10000;
  long burn_in = 1000;
  long thin = 10;
  int n_max = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  int bd_iterations = 500;
  std::size_t metric_samples = 200;  // chain samples used for KL/misclassification
  double penalty_fraction = 0.025;   // n* = fraction of the total sample size
};

namespace detail {

struct ReplicationResult {
  int modal_N = 0;
  double kl = 0.0;
  double misc = 0.0;
};

inline ReplicationResult run_study_replication(const StudyScenario& sc, bool repulsive,
                                               const StudySettings& st, std::uint64_t seed) {
  Rng rng(seed);
  const HmmState truth = study_truth(sc);
  auto [panel, alloc] = simulate_replicated(truth, sc.T, sc.n, rng);

  RunConfig config;
  config.iterations = st.iterations;
  config.burn_in = st.burn_in;
  config.thin = st.thin;
  config.n_max = st.n_max;
  config.seed = rng.engine()();
  config.family = Family::univariate_normal;
  config.scales = ProposalScales::simulation_defaults();
  config.bd.iterations = st.bd_iterations;

  const auto pooled = panel.pooled(0);
  const double obs_lo = *std::min_element(pooled.begin(), pooled.end());
  const double obs_hi = *std::max_element(pooled.begin(), pooled.end());
  config.hyper.family = Family::univariate_normal;
  config.hyper.sigma_hi = 2.0 * quantile_type7(pooled, 0.9);
  if (config.hyper.sigma_hi <= 0.0) config.hyper.sigma_hi = 2.0 * (obs_hi - obs_lo);
  config.strauss.region = {{obs_lo, obs_hi}};
  const double vol = obs_hi - obs_lo;
  config.xi_prior = {1.0 / vol, 80.0 / vol};
  config.strauss.xi = std::sqrt(config.xi_prior.lo * config.xi_prior.hi);
  if (repulsive) {
    config.strauss.log_a =
        select_penalty_log_a(st.penalty_fraction * static_cast<double>(sc.n * sc.T));
    // the threshold rule needs a bimodal pairwise-distance density; when the
    // mixture is too overlapped to provide one, no repulsion scale is
    // identifiable and the prior degenerates to the independent case
    std::vector<std::vector<double>> pts;
    for (double v : pooled) pts.push_back({v});
    try {
      config.strauss.d = select_threshold(pts);
    } catch (const std::exception&) {
      config.strauss.d = 0.0;
    }
  }

  const auto chain = run_chain(panel, config);

  ReplicationResult out;
  out.modal_N = modal_n(chain);

  // subsample retained draws for the quadrature-heavy metrics
  std::vector<ChainSample> metric;
  const std::size_t stride = std::max<std::size_t>(1, chain.size() / st.metric_samples);
  for (std::size_t i = 0; i < chain.size(); i += stride) metric.push_back(chain[i]);

  const double lo = sc.means.front() - 8.0 * sc.sigma;
  const double hi = sc.means.back() + 8.0 * sc.sigma;
  const auto grid = make_grid(lo, hi, 4096);
  out.kl = study_kl(metric, sc, truth, grid);
  out.misc = misclassification(alloc, metric, panel, rng);
  return out;
}

inline std::array<double, 3> mean_and_interval(std::vector<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return {mean, quantile_type7(v, 0.025), quantile_type7(v, 0.975)};
}

}  // namespace detail

struct RawReplicationRow {
  std::string overlap_label;
  std::size_t n = 0, T = 0;
  std::string prior;
  int replication = 0;
  int modal_N = 0;
  double kl = 0.0;
  double misc = 0.0;
};

inline std::vector<StudyRow> run_study(const std::vector<StudyScenario>& scenarios,
                                       const StudySettings& settings,
                                       const std::function<void(const std::string&)>& log =
                                           nullptr,
                                       std::vector<RawReplicationRow>* raw = nullptr) {
  std::vector<StudyRow> rows;
  for (const auto& sc : scenarios) {
    for (const bool repulsive : {false, true}) {
      std::vector<detail::ReplicationResult> results(sc.replications);
      std::atomic<int> next{0};
      auto worker = [&] {
        while (true) {
          const int r = next.fetch_add(1);
          if (r >= sc.replications) break;
          // replication seeds decorrelated per scenario/prior cell
          std::seed_seq seq{static_cast<std::uint64_t>(settings.seed),
                            static_cast<std::uint64_t>(sc.n), static_cast<std::uint64_t>(sc.T),
                            static_cast<std::uint64_t>(std::hash<std::string>{}(sc.overlap_label)),
                            static_cast<std::uint64_t>(repulsive ? 1 : 0),
                            static_cast<std::uint64_t>(r)};
          std::vector<std::uint64_t> s(1);
          seq.generate(s.begin(), s.end());
          results[r] = detail::run_study_replication(sc, repulsive, settings, s[0]);
        }
      };
      if (settings.threads > 1) {
        std::vector<std::thread> pool;
        for (int i = 0; i < settings.threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      } else {
        worker();
      }

      StudyRow row;
      row.overlap_label = sc.overlap_label;
      row.n = sc.n;
      row.T = sc.T;
      row.prior = repulsive ? "repulsive" : "independent";
      std::map<int, int> votes;
      std::vector<double> kls, miscs;
      for (const auto& res : results) {
        votes[res.modal_N] += 1;
        kls.push_back(res.kl);
        miscs.push_back(res.misc);
      }
      if (raw)
        for (int r = 0; r < sc.replications; ++r)
          raw->push_back({sc.overlap_label, sc.n, sc.T, row.prior, r, results[r].modal_N,
                          results[r].kl, results[r].misc});
      int best_votes = -1;
      for (const auto& [n_val, c] : votes)
        if (c > best_votes) {
          best_votes = c;
          row.modal_N = n_val;
        }
      const auto k = detail::mean_and_interval(kls);
      const auto m = detail::mean_and_interval(miscs);
      row.kl_mean = k[0]; row.kl_lo = k[1]; row.kl_hi = k[2];
      row.misc_mean = m[0]; row.misc_lo = m[1]; row.misc_hi = m[2];
      rows.push_back(row);
      if (log)
        log(sc.overlap_label + " n=" + std::to_string(sc.n) + " T=" + std::to_string(sc.T) +
            " " + row.prior + ": modal_N=" + std::to_string(row.modal_N) +
            " kl=" + std::to_string(row.kl_mean) + " misc=" + std::to_string(row.misc_mean));
    }
  }
  return rows;
}

inline void write_study_csv(const std::vector<StudyRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write study results: " + path);
  out << "overlap_label,n,T,prior,modal_N,kl_mean,kl_lo,kl_hi,misc_mean,misc_lo,misc_hi\n";
  for (const auto& r : rows) {
    out << r.overlap_label << ',' << r.n << ',' << r.T << ',' << r.prior << ',' << r.modal_N;
    for (double v : {r.kl_mean, r.kl_lo, r.kl_hi, r.misc_mean, r.misc_lo, r.misc_hi})
      out << ',' << detail::fmt17(v);
    out << '\n';
  }
}

}  // namespace shmm
