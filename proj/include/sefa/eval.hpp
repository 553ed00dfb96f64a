#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <vector>

#include "sefa/envs.hpp"
#include "sefa/errors.hpp"
#include "sefa/flow.hpp"
#include "sefa/rng.hpp"
#include "sefa/solvers.hpp"

namespace sefa {

// Rollout evaluation and the flow-geometry metrics: cross-seed success-rate
// studies, path straightness, and the 1-step vs many-step endpoint gap.

struct EvalConfig {
  EnvId env = EnvId::bimodal;
  int episodes = 50;
  std::vector<std::uint64_t> seeds = {0};  // inference seeds
  SolverConfig solver = SolverConfig::euler(1);
  std::uint64_t env_seed = 0;   // episode e resets from derive_seed(env_seed, e)
  int max_invocations = 0;      // 0: ceil(horizon / chunk length)

  int effective_max_invocations() const {
    if (max_invocations > 0) return max_invocations;
    return (env_horizon(env) + kChunkLen - 1) / kChunkLen;
  }

  void validate() const {
    if (episodes < 1) throw InvalidArgumentError("eval: episodes must be >= 1");
    if (seeds.empty()) throw InvalidArgumentError("eval: need at least one seed");
  }
};

struct RolloutResult {
  bool success = false;
  long nfe = 0;
  long invocations = 0;
  std::vector<EnvState> trajectory;
};

// One episode under a policy functor (raw observation -> ActionSample).
// Keeping the policy generic lets tests roll out hand-built oracles through
// the exact loop the network policies use. An IntegrationFailure inside the
// policy fails the episode instead of aborting the study.
template <typename Policy>
RolloutResult rollout_episode(Policy&& policy, EnvId env, std::uint64_t reset_seed,
                              int max_invocations) {
  DeterministicRng reset_rng(derive_seed(reset_seed, 0));
  RolloutResult result;
  EnvState s = env_reset(env, reset_rng);
  result.trajectory.push_back(s);
  try {
    while (!s.terminal && result.invocations < max_invocations) {
      const ActionSample sample = policy(observe(s));
      ++result.invocations;
      result.nfe += sample.nfe;
      for (int j = 0; j < kChunkLen && !s.terminal; ++j) {
        const std::vector<double> step_action{
            sample.action[static_cast<std::size_t>(2 * j)],
            sample.action[static_cast<std::size_t>(2 * j + 1)]};
        s = env_step(s, step_action);
        result.trajectory.push_back(s);
      }
    }
    result.success = env_success(s);
  } catch (const IntegrationFailure& e) {
    std::cerr << "rollout: episode failed: " << e.what() << "\n";
    result.success = false;
  }
  return result;
}

// Network policy: one inference rng per episode, consumed across chunk
// predictions in order.
struct NetPolicy {
  const VelocityNet& net;
  SolverConfig solver;
  DeterministicRng rng;

  ActionSample operator()(const std::vector<double>& raw_obs) {
    return sample_action(net, raw_obs, solver, rng);
  }
};

struct SeedRate {
  std::uint64_t seed = 0;
  double success_rate = 0.0;
};

struct StudyResult {
  std::vector<SeedRate> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation across seeds
  double nfe_per_prediction = 0.0;
};

inline StudyResult aggregate_rates(const std::vector<SeedRate>& per_seed) {
  StudyResult r;
  r.per_seed = per_seed;
  for (const SeedRate& s : per_seed) r.mean += s.success_rate;
  r.mean /= static_cast<double>(per_seed.size());
  double var = 0.0;
  for (const SeedRate& s : per_seed) {
    const double d = s.success_rate - r.mean;
    var += d * d;
  }
  r.stddev = std::sqrt(var / static_cast<double>(per_seed.size()));
  return r;
}

// Fig-4-style protocol: the episode set (resets) is fixed by env_seed while
// the inference seed varies, so the spread across seeds isolates the noise
// initialization.
inline StudyResult success_rate_study(const VelocityNet& net, const EvalConfig& cfg) {
  cfg.validate();
  std::vector<SeedRate> rates;
  long total_nfe = 0, total_invocations = 0;
  for (const std::uint64_t seed : cfg.seeds) {
    int successes = 0;
    for (int e = 0; e < cfg.episodes; ++e) {
      NetPolicy policy{net, cfg.solver,
                       DeterministicRng(derive_seed(derive_seed(seed, 0x5eed),
                                                    static_cast<std::uint64_t>(e)))};
      const RolloutResult rr =
          rollout_episode(policy, cfg.env, derive_seed(cfg.env_seed, static_cast<std::uint64_t>(e)),
                          cfg.effective_max_invocations());
      successes += rr.success ? 1 : 0;
      total_nfe += rr.nfe;
      total_invocations += rr.invocations;
    }
    rates.push_back(
        SeedRate{seed, static_cast<double>(successes) / cfg.episodes});
  }
  StudyResult result = aggregate_rates(rates);
  result.nfe_per_prediction =
      total_invocations > 0 ? static_cast<double>(total_nfe) / total_invocations : 0.0;
  return result;
}

// Mean over couplings of the mean squared deviation between the velocity
// along the simulated path and the path's endpoint displacement. Zero iff the
// field is constant along every probed path, i.e. perfectly straight.
inline double straightness(const VelocityNet& net, const CouplingSet& couplings,
                           int probe_steps = 100) {
  if (couplings.empty()) {
    throw InvalidArgumentError("straightness: empty coupling set");
  }
  if (probe_steps < 1) {
    throw InvalidArgumentError("straightness: probe_steps must be >= 1");
  }
  const double h = 1.0 / probe_steps;
  double total = 0.0;
  std::vector<std::vector<double>> velocities(
      static_cast<std::size_t>(probe_steps));
  for (const CouplingRecord& r : couplings) {
    std::vector<double> a = r.noise;
    for (int k = 0; k < probe_steps; ++k) {
      const double s = static_cast<double>(k) / probe_steps;
      velocities[static_cast<std::size_t>(k)] = eval_velocity(net, a, s, r.obs);
      const auto& v = velocities[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += h * v[i];
    }
    std::vector<double> displacement(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) displacement[i] = a[i] - r.noise[i];
    double score = 0.0;
    for (int k = 0; k < probe_steps; ++k) {
      score += squared_l2(velocities[static_cast<std::size_t>(k)], displacement);
    }
    total += score / probe_steps;
  }
  return total / static_cast<double>(couplings.size());
}

// Mean distance between the euler:1 endpoint and the euler:many endpoint over
// the couplings' (noise, obs) pairs; the deployable one-step error.
inline double one_step_gap(const VelocityNet& net, const CouplingSet& couplings,
                           int many_steps = 100) {
  if (couplings.empty()) {
    throw InvalidArgumentError("one_step_gap: empty coupling set");
  }
  double total = 0.0;
  for (const CouplingRecord& r : couplings) {
    const SamplePath one = euler_integrate(net, r.noise, r.obs, 1);
    const SamplePath many = euler_integrate(net, r.noise, r.obs, many_steps);
    total += l2_distance(one.states.back(), many.states.back());
  }
  return total / static_cast<double>(couplings.size());
}

}  // namespace sefa
