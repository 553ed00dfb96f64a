#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "sefa/envs.hpp"
#include "sefa/errors.hpp"
#include "sefa/flow.hpp"
#include "sefa/rng.hpp"
#include "sefa/solvers.hpp"

namespace sefa {

// Coupling generation from a trained policy (the distillation data for a
// reflow round) plus the transport-cost probe for those couplings.

struct CouplingGenConfig {
  int couplings_per_obs = 10;
  SolverConfig solver = SolverConfig::euler(100);
  std::uint64_t seed = 0;
};

namespace detail {

struct VecBytesHash {
  std::size_t operator()(const std::vector<double>& v) const {
    // FNV-1a over the raw bytes; observations are replayed deterministically,
    // so bitwise equality is the right key.
    std::uint64_t h = 1469598103934665603ULL;
    for (double d : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 1099511628211ULL;
      }
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

// Distinct normalized observations in first-appearance order.
inline std::vector<std::vector<double>> distinct_observations(
    const std::vector<Demonstration>& demos, const Normalizer& norm) {
  std::vector<std::vector<double>> out;
  std::unordered_map<std::vector<double>, int, detail::VecBytesHash> seen;
  for (const Demonstration& d : demos) {
    std::vector<double> obs_n = norm.normalize_obs(d.obs);
    if (seen.emplace(obs_n, static_cast<int>(out.size())).second) {
      out.push_back(std::move(obs_n));
    }
  }
  return out;
}

// For each distinct observation draws K noise vectors and integrates each to
// an action with the configured solver. Observation o uses the rng
// derive_seed(seed, o), so records are ordered and reproducible regardless of
// how the outer loop is scheduled.
inline CouplingSet generate_couplings(const VelocityNet& net,
                                      const std::vector<Demonstration>& demos,
                                      const CouplingGenConfig& cfg, Source tag) {
  if (demos.empty()) {
    throw InvalidArgumentError("generate_couplings: empty demonstration set");
  }
  if (cfg.couplings_per_obs < 1) {
    throw InvalidArgumentError("generate_couplings: couplings_per_obs must be >= 1");
  }
  const std::vector<std::vector<double>> observations =
      distinct_observations(demos, net.norm);
  CouplingSet out;
  out.reserve(observations.size() * static_cast<std::size_t>(cfg.couplings_per_obs));
  for (std::size_t o = 0; o < observations.size(); ++o) {
    DeterministicRng rng(derive_seed(cfg.seed, o));
    for (int j = 0; j < cfg.couplings_per_obs; ++j) {
      CouplingRecord r;
      r.noise = rng.gaussian_vector(net.arch.action_dim);
      try {
        SamplePath path = integrate_field(NetField{net, observations[o]}, r.noise, cfg.solver);
        r.action = path.states.back();
      } catch (const IntegrationFailure& e) {
        throw IntegrationFailure("generate_couplings: observation " +
                                 std::to_string(o) + ": " + e.what());
      }
      r.obs = observations[o];
      r.source = tag;
      r.replaced = false;
      out.push_back(std::move(r));
    }
  }
  return out;
}

// Mean squared Euclidean transport cost ||action - noise||^2 in normalized
// space; the quantity the rewired couplings keep below random re-pairings.
inline double transport_cost(const CouplingSet& couplings) {
  if (couplings.empty()) {
    throw InvalidArgumentError("transport_cost: empty coupling set");
  }
  double total = 0.0;
  for (const CouplingRecord& r : couplings) {
    total += squared_l2(r.action, r.noise);
  }
  return total / static_cast<double>(couplings.size());
}

struct ReflowRound {
  VelocityNet net;
  CouplingSet couplings;  // the data the returned net was trained on
};

// One reflow round: generate couplings from `prev`, warm-start a copy of
// `prev`, and fit it to those couplings. `gen_tag` names the stage of the
// generating policy.
inline ReflowRound run_reflow_round(const VelocityNet& prev,
                                    const std::vector<Demonstration>& demos,
                                    const CouplingGenConfig& gen_cfg,
                                    const TrainConfig& train_cfg,
                                    Source gen_tag = Source::base) {
  ReflowRound round;
  round.couplings = generate_couplings(prev, demos, gen_cfg, gen_tag);
  TrainResult result = train_policy(prev, round.couplings, train_cfg);
  round.net = std::move(result.net);
  return round;
}

}  // namespace sefa
