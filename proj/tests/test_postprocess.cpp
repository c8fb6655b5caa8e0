#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "shmm/postprocess.hpp"

using namespace shmm;

namespace {

ChainSample make_sample(std::vector<double> mus, long iter = 1) {
  ChainSample cs;
  cs.iter = iter;
  const int N = static_cast<int>(mus.size());
  cs.state.lambda.assign(N, 1.0);
  cs.state.Lambda.assign(N, std::vector<double>(N, 1.0));
  for (int i = 0; i < N; ++i) {
    cs.state.emissions.push_back(UnivariateNormal{mus[i], 1.0 + 0.1 * i});
    cs.state.lambda[i] = 1.0 + i;
    for (int j = 0; j < N; ++j) cs.state.Lambda[i][j] = 10.0 * i + j + 1.0;
  }
  return cs;
}

}  // namespace

TEST_CASE("permute_state carries every block consistently") {
  auto cs = make_sample({5.0, 1.0, 3.0});
  const auto p = permute_state(cs.state, {1, 2, 0});  // new i takes old perm[i]
  CHECK(std::get<UnivariateNormal>(p.emissions[0]).mu == 1.0);
  CHECK(std::get<UnivariateNormal>(p.emissions[1]).mu == 3.0);
  CHECK(std::get<UnivariateNormal>(p.emissions[2]).mu == 5.0);
  CHECK(p.lambda[0] == cs.state.lambda[1]);
  CHECK(p.Lambda[0][2] == cs.state.Lambda[1][0]);
  CHECK(p.Lambda[1][0] == cs.state.Lambda[2][1]);
}

TEST_CASE("relabel_by_order sorts states by the repulsion coordinate") {
  std::vector<ChainSample> chain{make_sample({5.0, 1.0, 3.0}), make_sample({1.0, 2.0, 3.0})};
  const auto out = relabel_by_order(chain);
  REQUIRE(out.samples.size() == 2);
  for (const auto& cs : out.samples) {
    std::vector<double> mus;
    for (const auto& e : cs.state.emissions)
      mus.push_back(std::get<UnivariateNormal>(e).mu);
    CHECK(std::is_sorted(mus.begin(), mus.end()));
  }
  // already-sorted sample is unchanged
  CHECK(std::get<UnivariateNormal>(out.samples[1].state.emissions[0]).mu == 1.0);
  CHECK(out.samples[1].state.lambda[0] == chain[1].state.lambda[0]);
}

TEST_CASE("relabeling preserves the likelihood") {
  Rng rng(8);
  HmmState truth;
  truth.lambda = {1.0, 1.0};
  truth.Lambda = {{3.0, 1.0}, {1.0, 3.0}};
  truth.emissions = {UnivariateNormal{2.0, 1.0}, UnivariateNormal{-2.0, 1.0}};
  const auto panel = simulate(truth, 6, 4, rng).first;
  std::vector<ChainSample> chain{make_sample({5.0, 1.0, 3.0})};
  chain[0].log_lik = log_likelihood(chain[0].state, panel);
  const auto out = relabel_by_order(chain);
  CHECK(log_likelihood(out.samples[0].state, panel) ==
        Catch::Approx(chain[0].log_lik).margin(1e-12));
}

TEST_CASE("relabel_by_order rejects vector repulsion coordinates") {
  ChainSample cs;
  cs.state.lambda = {1.0};
  cs.state.Lambda = {{1.0}};
  cs.state.emissions = {BivariateNormal{}};
  CHECK_THROWS(relabel_by_order({cs}));
}

TEST_CASE("posterior_n_distribution counts correctly and sums to one") {
  std::vector<ChainSample> chain;
  for (int i = 0; i < 480; ++i) chain.push_back(make_sample({0.0, 1.0, 2.0, 3.0}));
  for (int i = 0; i < 211; ++i) chain.push_back(make_sample({0.0, 1.0, 2.0}));
  for (int i = 0; i < 309; ++i) chain.push_back(make_sample({0.0, 1.0}));
  const auto dist = posterior_n_distribution(chain);
  CHECK(dist.at(4) == Catch::Approx(0.48));
  CHECK(dist.at(3) == Catch::Approx(0.211));
  double total = 0.0;
  for (const auto& [n, p] : dist) total += p;
  CHECK(total == Catch::Approx(1.0));
  CHECK(modal_n(chain) == 4);
}

TEST_CASE("relabel_by_map recovers a label rotation of the MAP sample") {
  std::vector<ChainSample> chain;
  auto map_sample = make_sample({-4.0, 0.0, 4.0});
  map_sample.log_lik = 10.0;  // the MAP
  chain.push_back(map_sample);
  // rotated copy with smaller likelihood
  ChainSample rotated;
  rotated.state = permute_state(map_sample.state, {2, 0, 1});
  rotated.log_lik = 5.0;
  chain.push_back(rotated);
  const auto out = relabel_by_map(chain);
  REQUIRE(out.samples.size() == 2);
  for (const auto& cs : out.samples)
    for (int j = 0; j < 3; ++j)
      CHECK(std::get<UnivariateNormal>(cs.state.emissions[j]).mu ==
            Catch::Approx(std::get<UnivariateNormal>(map_sample.state.emissions[j]).mu));
}

TEST_CASE("relabel_by_map restricts to the modal N") {
  std::vector<ChainSample> chain;
  chain.push_back(make_sample({0.0, 2.0}));
  chain.push_back(make_sample({0.0, 2.0}));
  chain.push_back(make_sample({0.0, 2.0, 4.0}));
  const auto out = relabel_by_map(chain);
  CHECK(out.samples.size() == 2);
  for (const auto& cs : out.samples) CHECK(cs.state.N() == 2);
}

TEST_CASE("exhaustive permutation search matches a brute-force oracle for N=4") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> ref_mus, mus;
    for (int j = 0; j < 4; ++j) {
      ref_mus.push_back(rng.normal(0.0, 5.0));
      mus.push_back(rng.normal(0.0, 5.0));
    }
    auto ref = make_sample(ref_mus);
    auto cs = make_sample(mus);
    ref.log_lik = 100.0;
    cs.log_lik = 0.0;
    const auto out = relabel_by_map({ref, cs});
    // brute force: minimal summed distance permutation
    std::vector<int> perm{0, 1, 2, 3}, best_perm = perm;
    double best = 1e300;
    do {
      double cost = 0.0;
      for (int j = 0; j < 4; ++j) cost += std::fabs(mus[perm[j]] - ref_mus[j]);
      if (cost < best) {
        best = cost;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int j = 0; j < 4; ++j)
      CHECK(std::get<UnivariateNormal>(out.samples[1].state.emissions[j]).mu ==
            Catch::Approx(mus[best_perm[j]]));
  }
}

TEST_CASE("averaged_density on a single N=1 sample equals that density") {
  ChainSample cs = make_sample({1.5});
  RelabeledChain chain{{cs}, RelabelMethod::order};
  const auto grid = [] {
    std::vector<double> g;
    for (int i = 0; i <= 100; ++i) g.push_back(-4.0 + 0.11 * i);
    return g;
  }();
  const auto curves = averaged_density(chain, 0, grid);
  REQUIRE(curves.per_state.size() == 1);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double expect = std::exp(log_normal_pdf(grid[g], 1.5, 1.0));
    CHECK(curves.per_state[0][g] == Catch::Approx(expect).margin(1e-12));
    CHECK(curves.mixture[g] == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("averaged_density matches a hand computation on a 2-sample chain") {
  auto a = make_sample({-1.0, 1.0});
  auto b = make_sample({-2.0, 2.0});
  RelabeledChain chain{{a, b}, RelabelMethod::order};
  const std::vector<double> grid{0.0, 0.5};
  const auto curves = averaged_density(chain, 0, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double hand = 0.0;
    for (const auto& cs : chain.samples) {
      const auto w = marginal_state_probs(cs.state, 1);
      for (int j = 0; j < 2; ++j) {
        const auto& e = std::get<UnivariateNormal>(cs.state.emissions[j]);
        hand += 0.5 * w[j] * std::exp(log_normal_pdf(grid[g], e.mu, e.sigma));
      }
    }
    CHECK(curves.mixture[g] == Catch::Approx(hand).margin(1e-12));
  }
}

TEST_CASE("mixture curve integrates to one on a wide grid") {
  auto a = make_sample({-1.0, 1.5});
  RelabeledChain chain{{a}, RelabelMethod::order};
  std::vector<double> grid;
  for (int i = 0; i <= 4000; ++i) grid.push_back(-20.0 + 0.01 * i);
  const auto curves = averaged_density(chain, 0, grid);
  double integral = 0.0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    integral += 0.5 * (curves.mixture[g] + curves.mixture[g - 1]) * 0.01;
  CHECK(integral == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("allocation probabilities are one-hot for separated states and rows sum to 1") {
  Rng rng(3);
  HmmState truth;
  truth.lambda = {1.0, 1.0};
  truth.Lambda = {{4.0, 1.0}, {1.0, 4.0}};
  truth.emissions = {UnivariateNormal{-30.0, 0.5}, UnivariateNormal{30.0, 0.5}};
  const auto [panel, alloc] = simulate(truth, 6, 3, rng);
  ChainSample cs;
  cs.state = truth;
  RelabeledChain chain{{cs}, RelabelMethod::order};
  const auto table = allocation_probabilities(chain, panel, 20, rng);
  REQUIRE(table.size() == 6);
  for (std::size_t t = 0; t < 6; ++t) {
    double row = 0.0;
    for (double v : table[t]) row += v;
    CHECK(row == Catch::Approx(1.0));
    CHECK(table[t][alloc.states[t][0]] == Catch::Approx(1.0));
  }
}
