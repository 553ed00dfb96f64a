#include <catch2/catch.hpp>

#include <cmath>

#include "oracles.hpp"
#include "sefa/align.hpp"

using namespace sefa;

namespace {

// Demos already expressed in normalized coordinates for direct control.
NormalizedDemos make_demos(std::vector<std::vector<double>> obs,
                           std::vector<std::vector<double>> actions) {
  NormalizedDemos nd;
  nd.obs = std::move(obs);
  nd.actions = std::move(actions);
  return nd;
}

CouplingRecord coupling(std::vector<double> noise, std::vector<double> action,
                        std::vector<double> obs) {
  CouplingRecord r;
  r.noise = std::move(noise);
  r.action = std::move(action);
  r.obs = std::move(obs);
  r.source = Source::reflow;
  return r;
}

}  // namespace

TEST_CASE("nearest_expert: exact match and hand distances") {
  const NormalizedDemos demos =
      make_demos({{0.0, 0.0}, {1.0, 1.0}}, {{0.0}, {1.0}});
  const NearestExpert exact = nearest_expert({1.0, 1.0}, demos);
  REQUIRE(exact.index == 1);
  REQUIRE(exact.distance == 0.0);

  const NearestExpert near = nearest_expert({0.1, 0.0}, demos);
  REQUIRE(near.index == 0);
  REQUIRE(near.distance == Approx(0.1).margin(1e-15));

  REQUIRE_THROWS_AS(nearest_expert({0.0}, NormalizedDemos{}), InvalidArgumentError);
}

TEST_CASE("nearest_expert: ties break to the lowest index") {
  const NormalizedDemos demos =
      make_demos({{1.0, 0.0}, {-1.0, 0.0}}, {{0.0}, {1.0}});
  REQUIRE(nearest_expert({0.0, 0.0}, demos).index == 0);
}

TEST_CASE("nearest_expert: matches the exhaustive oracle on random data") {
  DeterministicRng rng(31);
  std::vector<std::vector<double>> obs, actions;
  for (int i = 0; i < 1000; ++i) {
    obs.push_back({rng.next_uniform(-1, 1), rng.next_uniform(-1, 1),
                   rng.next_uniform(-1, 1)});
    actions.push_back({0.0});
  }
  const NormalizedDemos demos = make_demos(obs, actions);
  for (int q = 0; q < 100; ++q) {
    const std::vector<double> query{rng.next_uniform(-1, 1), rng.next_uniform(-1, 1),
                                    rng.next_uniform(-1, 1)};
    REQUIRE(nearest_expert(query, demos).index ==
            oracles::brute_force_nearest(query, demos.obs));
  }
}

TEST_CASE("align_coupling: replacement and preservation branches") {
  const NormalizedDemos demos =
      make_demos({{0.0, 0.0}}, {{0.52, 0.49}});
  AlignConfig cfg;
  cfg.delta = 0.1;

  // distance ~0.0224 < 0.1: replaced with the expert action.
  const CouplingRecord generated = coupling({0.0, 0.0}, {0.50, 0.50}, {0.0, 0.0});
  const CouplingRecord replaced = align_coupling(generated, demos, cfg);
  REQUIRE(replaced.replaced);
  REQUIRE(replaced.action == std::vector<double>{0.52, 0.49});
  REQUIRE(replaced.noise == generated.noise);
  REQUIRE(replaced.obs == generated.obs);

  // distance > 1 >= 0.1: preserved untouched.
  const NormalizedDemos far_demos = make_demos({{0.0, 0.0}}, {{-0.52, 0.49}});
  const CouplingRecord preserved = align_coupling(generated, far_demos, cfg);
  REQUIRE_FALSE(preserved.replaced);
  REQUIRE(preserved.action == std::vector<double>{0.50, 0.50});
}

TEST_CASE("align_coupling: threshold limits") {
  const NormalizedDemos demos = make_demos({{0.0}}, {{5.0}});
  const CouplingRecord c = coupling({0.0}, {1.0}, {0.0});

  AlignConfig huge;
  huge.delta = 1e9;
  REQUIRE(align_coupling(c, demos, huge).replaced);

  AlignConfig tiny;
  tiny.delta = 1e-12;
  REQUIRE_FALSE(align_coupling(c, demos, tiny).replaced);

  AlignConfig bad;
  bad.delta = 0.0;
  REQUIRE_THROWS_AS(align_coupling(c, demos, bad), InvalidArgumentError);
}

TEST_CASE("align_dataset: zero-distance replacement is a value identity") {
  const NormalizedDemos demos = make_demos({{0.0}, {1.0}}, {{0.3}, {0.7}});
  CouplingSet couplings{coupling({0.1}, {0.3}, {0.0}), coupling({0.2}, {0.7}, {1.0})};
  AlignConfig cfg;
  cfg.delta = 0.5;
  const auto [aligned, report] = align_dataset(couplings, demos, cfg);
  REQUIRE(report.total == 2);
  REQUIRE(report.replaced == 2);
  REQUIRE(report.fraction == 1.0);
  for (std::size_t i = 0; i < couplings.size(); ++i) {
    REQUIRE(aligned[i].action == couplings[i].action);
    REQUIRE(aligned[i].replaced);
    REQUIRE(aligned[i].source == Source::sefa);
  }
}

TEST_CASE("align_dataset: vanishing threshold preserves every record") {
  DeterministicRng rng(41);
  const NormalizedDemos demos =
      make_demos({{0.0, 0.0}, {0.5, 0.5}}, {{0.1, 0.1}, {0.9, 0.9}});
  CouplingSet couplings;
  for (int i = 0; i < 20; ++i) {
    couplings.push_back(coupling(rng.gaussian_vector(2), rng.gaussian_vector(2),
                                 {rng.next_uniform(-1, 1), rng.next_uniform(-1, 1)}));
  }
  AlignConfig cfg;
  cfg.delta = 1e-12;
  const auto [aligned, report] = align_dataset(couplings, demos, cfg);
  REQUIRE(report.replaced == 0);
  for (std::size_t i = 0; i < couplings.size(); ++i) {
    REQUIRE(aligned[i].noise == couplings[i].noise);
    REQUIRE(aligned[i].action == couplings[i].action);
    REQUIRE(aligned[i].obs == couplings[i].obs);
    REQUIRE_FALSE(aligned[i].replaced);
  }
}

TEST_CASE("align_dataset: replacement set grows monotonically with delta") {
  DeterministicRng rng(42);
  std::vector<std::vector<double>> obs, actions;
  for (int i = 0; i < 30; ++i) {
    obs.push_back({rng.next_uniform(-1, 1)});
    actions.push_back({rng.next_uniform(-1, 1), rng.next_uniform(-1, 1)});
  }
  const NormalizedDemos demos = make_demos(obs, actions);
  CouplingSet couplings;
  for (int i = 0; i < 100; ++i) {
    couplings.push_back(coupling(rng.gaussian_vector(2), rng.gaussian_vector(2),
                                 {rng.next_uniform(-1, 1)}));
  }
  AlignConfig narrow, wide;
  narrow.delta = 0.4;
  wide.delta = 1.1;
  const auto [a_narrow, r_narrow] = align_dataset(couplings, demos, narrow);
  const auto [a_wide, r_wide] = align_dataset(couplings, demos, wide);
  REQUIRE(r_narrow.replaced <= r_wide.replaced);
  for (std::size_t i = 0; i < couplings.size(); ++i) {
    if (a_narrow[i].replaced) {
      REQUIRE(a_wide[i].replaced);
    }
  }
}

TEST_CASE("align_dataset: idempotent under a fixed config") {
  DeterministicRng rng(43);
  std::vector<std::vector<double>> obs, actions;
  for (int i = 0; i < 25; ++i) {
    obs.push_back({rng.next_uniform(-1, 1), rng.next_uniform(-1, 1)});
    actions.push_back({rng.next_uniform(-1, 1)});
  }
  const NormalizedDemos demos = make_demos(obs, actions);
  CouplingSet couplings;
  for (int i = 0; i < 60; ++i) {
    couplings.push_back(coupling(rng.gaussian_vector(1), rng.gaussian_vector(1),
                                 {rng.next_uniform(-1, 1), rng.next_uniform(-1, 1)}));
  }
  AlignConfig cfg;
  cfg.delta = 0.3;
  const auto [once, r1] = align_dataset(couplings, demos, cfg);
  const auto [twice, r2] = align_dataset(once, demos, cfg);
  REQUIRE(r2.total == r1.total);
  for (std::size_t i = 0; i < once.size(); ++i) {
    REQUIRE(twice[i].noise == once[i].noise);
    REQUIRE(twice[i].action == once[i].action);
    REQUIRE(twice[i].obs == once[i].obs);
  }
}

TEST_CASE("align_dataset: report statistics") {
  const NormalizedDemos demos = make_demos({{0.0}, {10.0}}, {{0.0}, {10.0}});
  // First coupling: nearest expert action 0.0 at distance 0.1 -> replaced.
  // Second: nearest expert action 10.0 at distance 2.0 -> preserved.
  CouplingSet couplings{coupling({0.0}, {0.1}, {0.0}), coupling({0.0}, {8.0}, {10.0})};
  AlignConfig cfg;
  cfg.delta = 0.5;
  const auto [aligned, report] = align_dataset(couplings, demos, cfg);
  REQUIRE(report.total == 2);
  REQUIRE(report.replaced == 1);
  REQUIRE(report.fraction == 0.5);
  REQUIRE(report.mean_replaced_distance == Approx(0.1).margin(1e-12));
  REQUIRE(report.mean_preserved_distance == Approx(2.0).margin(1e-12));
  REQUIRE(aligned[0].action == std::vector<double>{0.0});
  REQUIRE(aligned[1].action == std::vector<double>{8.0});
}
