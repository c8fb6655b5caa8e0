#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shmm/panel.hpp"

using namespace shmm;

namespace {
std::string write_temp(const std::string& name, const std::string& contents) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << contents;
  return path;
}
}  // namespace

TEST_CASE("scalar panel loads and groups by time") {
  const auto path = write_temp("panel_scalar.csv",
                               "t,replicate,value\n"
                               "1,1,0.5\n"
                               "2,1,-1.25\n"
                               "1,2,3.0\n"
                               "2,2,4.0\n");
  const auto panel = load_panel(path, PanelKind::scalar);
  REQUIRE(panel.T() == 2);
  REQUIRE(panel.replicates[0].size() == 2);
  CHECK(panel.replicates[0][0][0] == 0.5);
  CHECK(panel.replicates[0][1][0] == 3.0);
  CHECK(panel.replicates[1][0][0] == -1.25);
  CHECK(panel.dim == 1);
  const auto pooled = panel.pooled(0);
  CHECK(pooled.size() == 4);
}

TEST_CASE("panel parse errors carry row numbers") {
  const auto bad_header = write_temp("panel_bad_header.csv", "time,rep,val\n1,1,2\n");
  CHECK_THROWS_AS(load_panel(bad_header, PanelKind::scalar), PanelParseError);

  const auto dup = write_temp("panel_dup.csv",
                              "t,replicate,value\n1,1,2\n1,1,3\n");
  CHECK_THROWS_WITH(load_panel(dup, PanelKind::scalar),
                    Catch::Matchers::ContainsSubstring("duplicate"));

  const auto gap = write_temp("panel_gap.csv",
                              "t,replicate,value\n1,1,2\n3,1,3\n");
  CHECK_THROWS_WITH(load_panel(gap, PanelKind::scalar),
                    Catch::Matchers::ContainsSubstring("contiguous"));

  const auto non_numeric = write_temp("panel_nan.csv",
                                      "t,replicate,value\n1,1,abc\n");
  CHECK_THROWS_WITH(load_panel(non_numeric, PanelKind::scalar),
                    Catch::Matchers::ContainsSubstring("row 2"));

  CHECK_THROWS_AS(load_panel("/nonexistent/file.csv", PanelKind::scalar), PanelParseError);
  const auto empty = write_temp("panel_empty.csv", "t,replicate,value\n");
  CHECK_THROWS_AS(load_panel(empty, PanelKind::scalar), PanelParseError);
}

TEST_CASE("step-angle panel validates domain") {
  const auto neg = write_temp("panel_negstep.csv", "t,step,angle\n1,-2,0.1\n");
  CHECK_THROWS_WITH(load_panel(neg, PanelKind::step_angle),
                    Catch::Matchers::ContainsSubstring("negative step"));

  const auto out_of_range = write_temp("panel_angle.csv", "t,step,angle\n1,2,4.5\n");
  CHECK_THROWS_AS(load_panel(out_of_range, PanelKind::step_angle), PanelParseError);
  const auto wrapped = load_panel(out_of_range, PanelKind::step_angle, true);
  CHECK(wrapped.replicates[0][0][1] == Catch::Approx(wrap_angle(4.5)));

  const auto good = write_temp("panel_sa.csv", "t,step,angle\n1,2.5,0.3\n2,0.0,-3.0\n");
  const auto panel = load_panel(good, PanelKind::step_angle);
  CHECK(panel.T() == 2);
  CHECK(panel.dim == 2);
  CHECK(panel.replicates[1][0][0] == 0.0);
}

TEST_CASE("save/load round trip preserves values exactly") {
  ObservationPanel panel;
  panel.kind = PanelKind::vector2;
  panel.dim = 2;
  panel.replicates = {{{0.1234567890123456, -7.5}, {2.0, 3.0}}, {{-1.0, 1e-17}}};
  const auto path = (std::filesystem::temp_directory_path() / "panel_rt.csv").string();
  save_panel(panel, path);
  const auto back = load_panel(path, PanelKind::vector2);
  REQUIRE(back.T() == 2);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t r = 0; r < panel.replicates[t].size(); ++r)
      for (int c = 0; c < 2; ++c)
        CHECK(back.replicates[t][r][c] == panel.replicates[t][r][c]);
}

TEST_CASE("data_quantile matches direct quantile of pooled values") {
  ObservationPanel panel;
  panel.kind = PanelKind::scalar;
  panel.replicates = {{{1.0}, {2.0}}, {{3.0}, {4.0}}};
  CHECK(data_quantile(panel, 0, 0.5) == Catch::Approx(2.5));
}

TEST_CASE("pca recovers a planted two-dimensional structure") {
  // points on a noisy plane embedded in 4 dimensions
  std::vector<std::vector<double>> feats;
  std::mt19937 gen(5);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (int i = 0; i < 200; ++i) {
    const double a = std::cos(0.1 * i) * 5.0, b = std::sin(0.13 * i) * 2.0;
    feats.push_back({a + noise(gen), b + noise(gen), 0.5 * a - b + noise(gen),
                     -a + 2.0 * b + noise(gen)});
  }
  const auto [proj, panel] = pca_fit_project(feats);
  CHECK(proj.explained_variance_ratio[0] + proj.explained_variance_ratio[1] ==
        Catch::Approx(1.0).margin(1e-4));
  CHECK(panel.kind == PanelKind::vector2);
  CHECK(panel.T() == 200);
  // loadings are unit vectors with positive largest entry
  for (int c = 0; c < 2; ++c) {
    double norm = 0.0, maxabs = 0.0, maxval = 0.0;
    for (const auto& row : proj.loadings) {
      norm += row[c] * row[c];
      if (std::fabs(row[c]) > maxabs) {
        maxabs = std::fabs(row[c]);
        maxval = row[c];
      }
    }
    CHECK(norm == Catch::Approx(1.0));
    CHECK(maxval > 0.0);
  }
}

TEST_CASE("pca rejects rank-deficient input") {
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 50; ++i) feats.push_back({static_cast<double>(i), 2.0 * i, 3.0 * i});
  CHECK_THROWS_WITH(pca_fit_project(feats),
                    Catch::Matchers::ContainsSubstring("rank-deficient"));
}
