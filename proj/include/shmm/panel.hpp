#pragma once

// Observation-panel ingestion: CSV parsing/serialization for the three
// panel layouts, pooled quantiles, and PCA projection of feature matrices.

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shmm/math.hpp"

namespace shmm {

enum class PanelKind { scalar, vector2, step_angle };

struct ObservationPanel {
  PanelKind kind = PanelKind::scalar;
  int dim = 1;
  // replicates[t][r] is an observation vector of length dim
  std::vector<std::vector<std::vector<double>>> replicates;
  // When set, replicate r forms its own latent chain under the shared
  // (pi, P, theta): the likelihood is a product of per-replicate forward
  // recursions instead of multiplying replicate densities inside one
  // shared per-time state. Requires the same replicate count at every t.
  bool independent_chains = false;

  std::size_t T() const { return replicates.size(); }
  bool empty() const { return replicates.empty(); }

  std::vector<double> pooled(int coordinate) const {
    std::vector<double> out;
    for (const auto& at_t : replicates)
      for (const auto& obs : at_t) out.push_back(obs.at(coordinate));
    return out;
  }
};

struct PcaProjection {
  std::vector<std::array<double, 2>> loadings;  // D_in rows, 2 columns
  std::array<double, 2> explained_variance_ratio{};
  std::vector<double> center;
};

struct PanelParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used != cell.size()) throw std::invalid_argument("trailing");
    if (!std::isfinite(v)) throw std::invalid_argument("nonfinite");
    return v;
  } catch (const std::exception&) {
    throw PanelParseError("row " + std::to_string(row) + ": non-numeric value '" + cell +
                          "' in column " + col);
  }
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline ObservationPanel load_panel(const std::string& path, PanelKind kind,
                                   bool wrap_angles = false) {
  std::ifstream in(path);
  if (!in) throw PanelParseError("cannot open panel file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw PanelParseError("empty file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto cols = detail::split_csv_row(header);

  const bool keyed_by_replicate = kind != PanelKind::step_angle;
  std::vector<std::string> expected;
  if (kind == PanelKind::scalar) expected = {"t", "replicate", "value"};
  else if (kind == PanelKind::vector2) expected = {"t", "replicate", "x1", "x2"};
  else expected = {"t", "step", "angle"};
  if (cols != expected) {
    std::string want;
    for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
    throw PanelParseError("unexpected header in " + path + "; expected '" + want + "'");
  }

  // rows may arrive in any order; group by (t, replicate)
  std::map<long, std::map<long, std::vector<double>>> grouped;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_row(line);
    if (cells.size() != expected.size())
      throw PanelParseError("row " + std::to_string(row) + ": expected " +
                            std::to_string(expected.size()) + " columns, found " +
                            std::to_string(cells.size()));
    const double t_raw = detail::parse_cell(cells[0], row, "t");
    const long t = static_cast<long>(t_raw);
    if (t_raw != static_cast<double>(t) || t < 1)
      throw PanelParseError("row " + std::to_string(row) + ": t must be a positive integer");

    long rep = 1;
    std::vector<double> obs;
    if (keyed_by_replicate) {
      const double rep_raw = detail::parse_cell(cells[1], row, "replicate");
      rep = static_cast<long>(rep_raw);
      if (rep_raw != static_cast<double>(rep) || rep < 1)
        throw PanelParseError("row " + std::to_string(row) + ": replicate must be a positive integer");
      for (std::size_t c = 2; c < cells.size(); ++c)
        obs.push_back(detail::parse_cell(cells[c], row, expected[c]));
    } else {
      const double step = detail::parse_cell(cells[1], row, "step");
      double angle = detail::parse_cell(cells[2], row, "angle");
      if (step < 0.0)
        throw PanelParseError("row " + std::to_string(row) + ": negative step length");
      if (angle <= -pi || angle > pi) {
        if (wrap_angles) angle = wrap_angle(angle);
        else
          throw PanelParseError("row " + std::to_string(row) +
                                ": angle outside (-pi, pi]; pass wrap_angles to wrap");
      }
      obs = {step, angle};
    }
    auto [it, inserted] = grouped[t].emplace(rep, std::move(obs));
    (void)it;
    if (!inserted)
      throw PanelParseError("duplicate (t, replicate) key (" + std::to_string(t) + ", " +
                            std::to_string(rep) + ")");
  }
  if (grouped.empty()) throw PanelParseError("panel has no data rows: " + path);

  ObservationPanel panel;
  panel.kind = kind;
  panel.dim = kind == PanelKind::scalar ? 1 : 2;
  long expect_t = 1;
  for (const auto& [t, reps] : grouped) {
    if (t != expect_t)
      throw PanelParseError("time indices must be contiguous from 1; missing t=" +
                            std::to_string(expect_t));
    ++expect_t;
    std::vector<std::vector<double>> at_t;
    at_t.reserve(reps.size());
    for (const auto& [rep, obs] : reps) at_t.push_back(obs);
    panel.replicates.push_back(std::move(at_t));
  }
  return panel;
}

inline void save_panel(const ObservationPanel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw PanelParseError("cannot write panel file: " + path);
  if (panel.kind == PanelKind::scalar) out << "t,replicate,value\n";
  else if (panel.kind == PanelKind::vector2) out << "t,replicate,x1,x2\n";
  else out << "t,step,angle\n";
  for (std::size_t t = 0; t < panel.T(); ++t) {
    for (std::size_t r = 0; r < panel.replicates[t].size(); ++r) {
      const auto& obs = panel.replicates[t][r];
      out << (t + 1);
      if (panel.kind != PanelKind::step_angle) out << ',' << (r + 1);
      for (double v : obs) out << ',' << detail::fmt17(v);
      out << '\n';
    }
  }
}

inline double data_quantile(const ObservationPanel& panel, int coordinate, double q) {
  return quantile_type7(panel.pooled(coordinate), q);
}

// Projects an n x D feature matrix onto its top-2 principal components.
inline std::pair<PcaProjection, ObservationPanel> pca_fit_project(
    const std::vector<std::vector<double>>& features) {
  const std::size_t n = features.size();
  if (n < 3) throw std::invalid_argument("pca: need more rows than feature dimensions");
  const std::size_t d = features.front().size();
  if (d < 2) throw std::invalid_argument("pca: need at least 2 feature columns");
  if (n <= d) throw std::invalid_argument("pca: need more rows than feature dimensions");

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw std::invalid_argument("pca: ragged feature matrix");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = features[i][j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const auto& evals = es.eigenvalues();   // ascending
  const auto& evecs = es.eigenvectors();
  const double total = std::max(evals.sum(), 1e-300);
  if (evals(d - 2) <= 1e-12 * total)
    throw std::invalid_argument("pca: input is rank-deficient (fewer than 2 components)");

  PcaProjection proj;
  proj.center.assign(mean.data(), mean.data() + d);
  proj.loadings.resize(d);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = evecs.col(static_cast<int>(d) - 1 - c);
    // sign convention: the largest-magnitude loading entry is positive
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    for (std::size_t j = 0; j < d; ++j) proj.loadings[j][c] = v(j);
    proj.explained_variance_ratio[c] = evals(static_cast<int>(d) - 1 - c) / total;
  }

  ObservationPanel panel;
  panel.kind = PanelKind::vector2;
  panel.dim = 2;
  panel.replicates.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      s1 += x(i, j) * proj.loadings[j][0];
      s2 += x(i, j) * proj.loadings[j][1];
    }
    panel.replicates[i].push_back({s1, s2});
  }
  return {proj, panel};
}

// feature CSV: columns t,f1,...,fK (t becomes the row order)
inline std::vector<std::vector<double>> load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PanelParseError("cannot open feature file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw PanelParseError("empty file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto cols = detail::split_csv_row(header);
  if (cols.size() < 3 || cols[0] != "t")
    throw PanelParseError("feature header must be t,f1,...,fK with K >= 2");

  std::map<long, std::vector<double>> rows;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_row(line);
    if (cells.size() != cols.size())
      throw PanelParseError("row " + std::to_string(row) + ": column count mismatch");
    const long t = static_cast<long>(detail::parse_cell(cells[0], row, "t"));
    std::vector<double> f;
    for (std::size_t c = 1; c < cells.size(); ++c)
      f.push_back(detail::parse_cell(cells[c], row, cols[c]));
    if (!rows.emplace(t, std::move(f)).second)
      throw PanelParseError("duplicate t key " + std::to_string(t));
  }
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (auto& [t, f] : rows) out.push_back(std::move(f));
  return out;
}

}  // namespace shmm
