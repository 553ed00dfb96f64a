#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sefa/errors.hpp"
#include "sefa/rng.hpp"

namespace sefa {

// Two deterministic point-mass tasks with scripted experts.
//
// BimodalReach: an agent starts near the origin and must reach either goal
// (1,1) or (-1,1). The expert commits to one goal per episode by a fair coin
// that is NOT part of the observation, so early observations genuinely admit
// two expert action distributions.
//
// PushBlock: a pusher must shove a block from the origin to (1,0). Contact is
// kinematic: whenever the pusher ends a step closer than the contact distance,
// the block slides along the pusher->block direction until the gap is exactly
// the contact distance again. Small action errors accumulate through contact,
// which is what makes the task precision-sensitive.

enum class EnvId { bimodal, pushblock };

inline EnvId parse_env(const std::string& name) {
  if (name == "bimodal") return EnvId::bimodal;
  if (name == "pushblock") return EnvId::pushblock;
  throw InvalidArgumentError("unknown environment: " + name);
}

inline std::string env_name(EnvId id) {
  return id == EnvId::bimodal ? "bimodal" : "pushblock";
}

inline constexpr int kChunkLen = 4;          // per-step actions per predicted chunk
inline constexpr int kStepActionDim = 2;     // every env acts in the plane
inline constexpr double kContactDist = 0.15; // pushblock pusher/block gap
inline constexpr double kSuccessDist = 0.1;
inline constexpr double kStagingOffset = 0.25;
inline constexpr double kStagingTol = 0.02;
inline constexpr double kPushAimOffset = 0.05;

inline int env_horizon(EnvId id) { return id == EnvId::bimodal ? 30 : 60; }
inline int env_obs_dim(EnvId id) { return id == EnvId::bimodal ? 2 : 4; }
inline double env_action_limit(EnvId id) { return id == EnvId::bimodal ? 0.2 : 0.1; }
inline int chunk_dim(EnvId) { return kChunkLen * kStepActionDim; }

// bimodal state: {agent_x, agent_y}
// pushblock state: {pusher_x, pusher_y, block_x, block_y}
struct EnvState {
  EnvId id = EnvId::bimodal;
  std::vector<double> state;
  int step = 0;
  bool terminal = false;
};

inline bool env_success(const EnvState& s) {
  if (s.id == EnvId::bimodal) {
    const double dr = std::hypot(s.state[0] - 1.0, s.state[1] - 1.0);
    const double dl = std::hypot(s.state[0] + 1.0, s.state[1] - 1.0);
    return dr <= kSuccessDist || dl <= kSuccessDist;
  }
  return std::hypot(s.state[2] - 1.0, s.state[3]) <= kSuccessDist;
}

// Uniform start boxes; draw order is part of the determinism contract:
// bimodal agent x,y; pushblock block x,y then pusher x,y.
inline EnvState env_reset(EnvId id, DeterministicRng& rng) {
  EnvState s;
  s.id = id;
  if (id == EnvId::bimodal) {
    s.state = {rng.next_uniform(-0.05, 0.05), rng.next_uniform(-0.05, 0.05)};
  } else {
    const double bx = rng.next_uniform(-0.05, 0.05);
    const double by = rng.next_uniform(-0.05, 0.05);
    const double px = -0.5 + rng.next_uniform(-0.05, 0.05);
    const double py = rng.next_uniform(-0.05, 0.05);
    s.state = {px, py, bx, by};
  }
  return s;
}

inline double clamp_to(double v, double lim) { return std::clamp(v, -lim, lim); }

inline EnvState env_step(const EnvState& s, const std::vector<double>& action) {
  if (s.terminal) {
    throw StateError("env_step: episode already terminal");
  }
  if (action.size() != kStepActionDim) {
    throw InvalidArgumentError("env_step: action must have dimension 2, got " +
                               std::to_string(action.size()));
  }
  const double lim = env_action_limit(s.id);
  const double ax = clamp_to(action[0], lim);
  const double ay = clamp_to(action[1], lim);

  EnvState next = s;
  next.step = s.step + 1;
  if (s.id == EnvId::bimodal) {
    next.state[0] += ax;
    next.state[1] += ay;
  } else {
    next.state[0] += ax;
    next.state[1] += ay;
    const double dx = next.state[2] - next.state[0];
    const double dy = next.state[3] - next.state[1];
    const double dist = std::hypot(dx, dy);
    if (dist < kContactDist) {
      // Gap before the move is >= contact distance and the move is <= 0.1*sqrt(2),
      // so dist stays strictly positive and the unit vector is well defined.
      const double ux = dx / dist;
      const double uy = dy / dist;
      next.state[2] = next.state[0] + kContactDist * ux;
      next.state[3] = next.state[1] + kContactDist * uy;
    }
  }
  next.terminal = env_success(next) || next.step >= env_horizon(s.id);
  return next;
}

inline std::vector<double> observe(const EnvState& s) { return s.state; }

enum class BimodalMode { left, right };

inline std::vector<double> expert_action(const EnvState& s, BimodalMode mode) {
  if (s.terminal) {
    throw StateError("expert_action: episode already terminal");
  }
  const double lim = env_action_limit(s.id);
  if (s.id == EnvId::bimodal) {
    const double gx = mode == BimodalMode::right ? 1.0 : -1.0;
    return {clamp_to(gx - s.state[0], lim), clamp_to(1.0 - s.state[1], lim)};
  }
  const double px = s.state[0], py = s.state[1];
  const double bx = s.state[2], by = s.state[3];
  const double tox = 1.0 - bx, toy = -by;
  const double tonorm = std::hypot(tox, toy);
  if (tonorm < 1e-12) {
    return {0.0, 0.0};
  }
  const double ux = tox / tonorm, uy = toy / tonorm;
  const double sx = bx - kStagingOffset * ux;
  const double sy = by - kStagingOffset * uy;
  // Two sequential phases. The push phase is recognized statelessly: either
  // the pusher just arrived at the staging point, or it is already closer to
  // the block than any staging approach ever gets (the approach keeps the gap
  // above kStagingOffset - kStagingTol, while pushing holds it near the
  // contact distance). Re-testing only the staging condition would retreat
  // after every push and the block would never move.
  const double gap = std::hypot(bx - px, by - py);
  const bool pushing = gap <= kStagingOffset - kStagingTol ||
                       std::hypot(px - sx, py - sy) <= kStagingTol;
  if (!pushing) {
    return {clamp_to(sx - px, lim), clamp_to(sy - py, lim)};
  }
  // Pushing servos the pusher onto a point just inside the contact radius on
  // the block->goal line; tracking that moving point keeps the pusher aligned
  // while the contact projection carries the block toward the goal. Stepping
  // blindly along the goal direction instead lets lateral error grow until
  // the pusher slides past the block.
  const double tx = bx - kPushAimOffset * ux;
  const double ty = by - kPushAimOffset * uy;
  return {clamp_to(tx - px, lim), clamp_to(ty - py, lim)};
}

// One (observation, flattened action chunk) pair cut from an expert episode.
struct Demonstration {
  std::vector<double> obs;
  std::vector<double> action;  // kChunkLen consecutive per-step actions
  int episode = 0;
  int t = 0;  // chunk start step within the episode
};

// Rolls out the scripted expert and slices each episode into stride-1 chunks,
// padding past the end by repeating the final action. Episode e uses the rng
// derive_seed(seed, e); for bimodal the mode coin is drawn right after reset.
inline std::vector<Demonstration> generate_demos(EnvId id, int episodes,
                                                 std::uint64_t seed) {
  if (episodes < 1) {
    throw InvalidArgumentError("generate_demos: episodes must be >= 1");
  }
  std::vector<Demonstration> out;
  for (int e = 0; e < episodes; ++e) {
    DeterministicRng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    EnvState s = env_reset(id, rng);
    const BimodalMode mode = id == EnvId::bimodal
                                 ? (rng.next_uniform() < 0.5 ? BimodalMode::left
                                                             : BimodalMode::right)
                                 : BimodalMode::right;
    std::vector<std::vector<double>> obs_seq;
    std::vector<std::vector<double>> act_seq;
    while (!s.terminal) {
      obs_seq.push_back(observe(s));
      act_seq.push_back(expert_action(s, mode));
      s = env_step(s, act_seq.back());
    }
    const int len = static_cast<int>(act_seq.size());
    for (int k = 0; k < len; ++k) {
      Demonstration d;
      d.obs = obs_seq[static_cast<std::size_t>(k)];
      d.action.reserve(chunk_dim(id));
      for (int j = 0; j < kChunkLen; ++j) {
        const auto& a = act_seq[static_cast<std::size_t>(std::min(k + j, len - 1))];
        d.action.insert(d.action.end(), a.begin(), a.end());
      }
      d.episode = e;
      d.t = k;
      out.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace sefa
