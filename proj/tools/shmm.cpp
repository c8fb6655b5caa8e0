// shmm: fit / simulate / threshold / study / postprocess subcommands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "shmm/config.hpp"
#include "shmm/postprocess.hpp"

namespace fs = std::filesystem;
using namespace shmm;

namespace {

// all artifacts go through write-to-temp + rename so failures leave no partial files
void atomic_write(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_metadata(const CliConfig& c, const fs::path& dir) {
  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["seed"] = c.run.seed;
  meta["config_hash"] = fnv1a_hex(c.raw.dump());
  meta["config"] = c.raw;
  atomic_write(dir / "metadata.json", meta.dump(2) + "\n");
}

PanelKind panel_kind_for(Family f) {
  switch (f) {
    case Family::univariate_normal: return PanelKind::scalar;
    case Family::bivariate_normal: return PanelKind::vector2;
    case Family::step_angle: return PanelKind::step_angle;
  }
  return PanelKind::scalar;
}

PanelKind parse_kind(const std::string& s) {
  if (s == "scalar") return PanelKind::scalar;
  if (s == "vector2") return PanelKind::vector2;
  if (s == "step-angle" || s == "step_angle") return PanelKind::step_angle;
  throw std::runtime_error("unknown panel kind: " + s);
}

std::string csv_of_table(const std::string& header,
                         const std::vector<std::vector<double>>& rows,
                         bool index_from_one) {
  std::string s = header + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s += std::to_string(i + (index_from_one ? 1 : 0));
    for (double v : rows[i]) s += "," + detail::fmt17(v);
    s += "\n";
  }
  return s;
}

void write_postprocess_outputs(const CliConfig& c, const std::vector<ChainSample>& chain,
                               const ObservationPanel& panel, const fs::path& dir) {
  const auto dist = posterior_n_distribution(chain);
  {
    std::string s = "N,probability\n";
    for (const auto& [n, p] : dist) s += std::to_string(n) + "," + detail::fmt17(p) + "\n";
    atomic_write(dir / "n_posterior.csv", s);
  }

  RelabeledChain relabeled;
  const bool scalar_repulsion = c.run.family != Family::bivariate_normal;
  if (c.relabel == "order" && scalar_repulsion)
    relabeled = relabel_by_order(chain);
  else
    relabeled = relabel_by_map(chain);

  const std::size_t t_density =
      c.density_time > 0 ? static_cast<std::size_t>(c.density_time) - 1 : panel.T() - 1;
  if (t_density >= panel.T())
    throw std::runtime_error("density_time exceeds the panel length");
  const auto pooled = panel.pooled(0);
  double lo = *std::min_element(pooled.begin(), pooled.end());
  double hi = *std::max_element(pooled.begin(), pooled.end());
  const double pad = 0.1 * (hi - lo);
  if (c.run.family == Family::step_angle)
    lo = std::max(0.0, lo - pad);
  else
    lo -= pad;
  const auto curves =
      averaged_density(relabeled, t_density, make_grid(lo, hi + pad, c.density_grid_size));
  {
    std::string s = "grid";
    for (std::size_t j = 0; j < curves.per_state.size(); ++j)
      s += ",state_" + std::to_string(j + 1);
    s += ",mixture\n";
    for (std::size_t g = 0; g < curves.grid.size(); ++g) {
      s += detail::fmt17(curves.grid[g]);
      for (const auto& st : curves.per_state) s += "," + detail::fmt17(st[g]);
      s += "," + detail::fmt17(curves.mixture[g]) + "\n";
    }
    atomic_write(dir / ("density_t" + std::to_string(t_density + 1) + ".csv"), s);
  }

  Rng rng(c.run.seed ^ 0xa5a5a5a5a5a5a5a5ull);
  const auto alloc = allocation_probabilities(relabeled, panel, c.allocation_draws, rng);
  std::string header = "t";
  for (std::size_t j = 0; j < alloc.front().size(); ++j)
    header += ",p_state" + std::to_string(j + 1);
  atomic_write(dir / "allocation.csv", csv_of_table(header, alloc, true));
}

int cmd_fit(const std::string& config_path) {
  CliConfig c = load_cli_config(config_path);
  if (c.panel_path.empty()) throw std::runtime_error("fit: config must set 'panel'");
  auto panel = load_panel(c.panel_path, panel_kind_for(c.run.family),
                          c.run.family == Family::step_angle);
  panel.independent_chains = c.independent_chains;
  finalize_run_config(c, panel);
  fs::create_directories(c.output_dir);
  const fs::path dir = c.output_dir;

  const auto chain = run_chain(panel, c.run);
  {
    std::string s;
    for (const auto& cs : chain) s += chain_sample_to_json(cs) + "\n";
    atomic_write(dir / "chain.jsonl", s);
  }
  write_postprocess_outputs(c, chain, panel, dir);
  write_metadata(c, dir);
  std::cout << "wrote chain and summaries to " << dir.string() << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path) {
  CliConfig c = load_cli_config(config_path);
  fs::create_directories(c.output_dir);
  const fs::path dir = c.output_dir;

  const HmmState truth = study_truth(c.scenario);
  Rng rng(c.run.seed);
  auto [panel, alloc] = simulate_replicated(truth, c.scenario.T, c.scenario.n, rng);

  save_panel(panel, (dir / "panel.csv.tmp").string());
  fs::rename(dir / "panel.csv.tmp", dir / "panel.csv");
  {
    std::string s = "t,replicate,state\n";
    for (std::size_t t = 0; t < alloc.states.size(); ++t)
      for (std::size_t r = 0; r < alloc.states[t].size(); ++r)
        s += std::to_string(t + 1) + "," + std::to_string(r + 1) + "," +
             std::to_string(alloc.states[t][r] + 1) + "\n";
    atomic_write(dir / "truth_allocations.csv", s);
  }
  {
    nlohmann::json truth_json;
    truth_json["overlap_label"] = c.scenario.overlap_label;
    truth_json["sigma"] = c.scenario.sigma;
    truth_json["means"] = c.scenario.means;
    truth_json["n"] = c.scenario.n;
    truth_json["T"] = c.scenario.T;
    truth_json["lambda"] = truth.lambda;
    truth_json["Lambda"] = truth.Lambda;
    atomic_write(dir / "truth_parameters.json", truth_json.dump(2) + "\n");
  }
  write_metadata(c, dir);
  std::cout << "wrote simulated panel (sigma=" << c.scenario.sigma << ") to " << dir.string()
            << "\n";
  return 0;
}

int cmd_threshold(const std::string& panel_path, const std::string& kind_str, int coordinate,
                  const std::string& out_path) {
  const PanelKind kind = parse_kind(kind_str);
  const auto panel = load_panel(panel_path, kind, kind == PanelKind::step_angle);

  std::vector<std::vector<double>> pts;
  if (coordinate >= 0) {
    for (double v : panel.pooled(coordinate)) pts.push_back({v});
  } else if (kind == PanelKind::vector2) {
    const auto x1 = panel.pooled(0);
    const auto x2 = panel.pooled(1);
    for (std::size_t i = 0; i < x1.size(); ++i) pts.push_back({x1[i], x2[i]});
  } else {
    for (double v : panel.pooled(0)) pts.push_back({v});
  }

  const auto curve = select_threshold_curve(pts);
  std::string s = "r,density\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i)
    s += detail::fmt17(curve.grid[i]) + "," + detail::fmt17(curve.density[i]) + "\n";
  atomic_write(out_path, s);
  std::cout << "d = " << curve.d << "\n";
  return 0;
}

int cmd_study(const std::string& config_path) {
  CliConfig c = load_cli_config(config_path);
  fs::create_directories(c.output_dir);
  const fs::path dir = c.output_dir;

  std::vector<StudyScenario> scenarios = c.study_scenarios;
  if (scenarios.empty()) {
    for (const char* label : {"3%", "9%", "33%", "55%"}) {
      StudyScenario sc;
      sc.overlap_label = label;
      sc.sigma = study_sigma_for_label(label);
      scenarios.push_back(sc);
    }
  }

  std::vector<RawReplicationRow> raw;
  const auto rows = run_study(
      scenarios, c.study, [](const std::string& line) { std::cerr << line << "\n"; }, &raw);

  write_study_csv(rows, (dir / "study_results.csv.tmp").string());
  fs::rename(dir / "study_results.csv.tmp", dir / "study_results.csv");
  {
    std::string s = "overlap_label,n,T,prior,replication,modal_N,kl,misc\n";
    for (const auto& r : raw)
      s += r.overlap_label + "," + std::to_string(r.n) + "," + std::to_string(r.T) + "," +
           r.prior + "," + std::to_string(r.replication) + "," + std::to_string(r.modal_N) +
           "," + detail::fmt17(r.kl) + "," + detail::fmt17(r.misc) + "\n";
    atomic_write(dir / "study_replications.csv", s);
  }
  write_metadata(c, dir);
  std::cout << "wrote study results to " << dir.string() << "\n";
  return 0;
}

int cmd_postprocess(const std::string& chain_path, const std::string& method,
                    const std::string& panel_path, const std::string& kind_str,
                    const std::string& out_dir) {
  const auto chain = read_chain(chain_path);
  if (chain.empty()) throw std::runtime_error("postprocess: chain file has no samples");

  CliConfig c;
  c.relabel = method;
  c.run.family = family_of(chain.front().state.emissions.front());
  c.run.seed = 1;
  if (const char* env = std::getenv("SHMM_SEED")) c.run.seed = std::strtoull(env, nullptr, 10);
  const PanelKind kind = kind_str.empty() ? panel_kind_for(c.run.family) : parse_kind(kind_str);
  const auto panel = load_panel(panel_path, kind, kind == PanelKind::step_angle);
  fs::create_directories(out_dir);
  write_postprocess_outputs(c, chain, panel, out_dir);
  std::cout << "wrote summaries to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hidden Markov model sampler with a repulsive prior on the number of states"};
  app.require_subcommand(1);

  std::string config_path, panel_path, chain_path, out_dir = ".";
  std::string kind = "scalar", method = "order", kde_out = "distance_kde.csv";
  int coordinate = -1;

  auto* fit = app.add_subcommand("fit", "run the sampler on a panel");
  fit->add_option("--config", config_path, "JSON config file")->required();

  auto* sim = app.add_subcommand("simulate", "simulate a study panel");
  sim->add_option("--config", config_path, "JSON config file")->required();

  auto* thr = app.add_subcommand("threshold", "select the interaction distance from data");
  thr->add_option("--panel", panel_path, "panel CSV")->required();
  thr->add_option("--coordinate", coordinate, "restrict distances to one coordinate");
  thr->add_option("--kind", kind, "panel kind: scalar, vector2, step-angle");
  thr->add_option("--output", kde_out, "distance KDE output path");

  auto* study = app.add_subcommand("study", "run the simulation study");
  study->add_option("--config", config_path, "JSON config file")->required();

  auto* post = app.add_subcommand("postprocess", "summarize a saved chain");
  post->add_option("--chain", chain_path, "chain JSONL file")->required();
  post->add_option("--method", method, "relabeling: order or map")
      ->check(CLI::IsMember({"order", "map"}));
  post->add_option("--panel", panel_path, "panel CSV the chain was fit to")->required();
  post->add_option("--kind", kind, "panel kind override");
  post->add_option("--output-dir", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return cmd_fit(config_path);
    if (sim->parsed()) return cmd_simulate(config_path);
    if (thr->parsed()) return cmd_threshold(panel_path, kind, coordinate, kde_out);
    if (study->parsed()) return cmd_study(config_path);
    if (post->parsed())
      return cmd_postprocess(chain_path, method, panel_path,
                             post->count("--kind") ? kind : "", out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
