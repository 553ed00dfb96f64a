#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "sefa/envs.hpp"
#include "sefa/errors.hpp"
#include "sefa/flow.hpp"
#include "sefa/normalizer.hpp"

namespace sefa {

// Selective flow alignment: look up the expert demonstration whose
// observation is nearest to a coupling's conditioning, and replace the
// generated action with that expert action when the two actions are closer
// than the threshold. Couplings beyond the threshold are preserved untouched,
// which is what keeps genuinely multimodal action distributions intact.

struct AlignConfig {
  double delta = 0.5;  // replacement threshold in normalized action space

  void validate() const {
    if (!(delta > 0.0)) {
      throw InvalidArgumentError("align: delta must be > 0");
    }
  }
};

// Demonstrations mapped into normalized spaces once, so the nearest-neighbor
// scan works on the same coordinates the couplings carry.
struct NormalizedDemos {
  std::vector<std::vector<double>> obs;
  std::vector<std::vector<double>> actions;

  static NormalizedDemos from(const std::vector<Demonstration>& demos,
                              const Normalizer& norm) {
    NormalizedDemos nd;
    nd.obs.reserve(demos.size());
    nd.actions.reserve(demos.size());
    for (const Demonstration& d : demos) {
      nd.obs.push_back(norm.normalize_obs(d.obs));
      nd.actions.push_back(norm.normalize_action(d.action));
    }
    return nd;
  }

  std::size_t size() const { return obs.size(); }
};

struct NearestExpert {
  int index = -1;
  double distance = 0.0;  // Euclidean, normalized observation space
};

// Exhaustive scan; ties go to the lowest dataset index. Demo sets here stay
// far below the size where an index structure would pay off.
inline NearestExpert nearest_expert(const std::vector<double>& obs_n,
                                    const NormalizedDemos& demos) {
  if (demos.size() == 0) {
    throw InvalidArgumentError("nearest_expert: empty demonstration set");
  }
  NearestExpert best;
  double best_sq = 0.0;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const double d_sq = squared_l2(obs_n, demos.obs[i]);
    if (best.index < 0 || d_sq < best_sq) {
      best.index = static_cast<int>(i);
      best_sq = d_sq;
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

// Output of aligning one record: noise and obs pass through bit-exactly;
// only the action may be swapped for its expert counterpart.
inline CouplingRecord align_coupling(const CouplingRecord& coupling,
                                     const NormalizedDemos& demos,
                                     const AlignConfig& cfg) {
  cfg.validate();
  const NearestExpert nearest = nearest_expert(coupling.obs, demos);
  const std::vector<double>& expert_action =
      demos.actions[static_cast<std::size_t>(nearest.index)];
  CouplingRecord out = coupling;
  out.source = Source::sefa;
  const double action_dist = l2_distance(coupling.action, expert_action);
  if (action_dist < cfg.delta) {
    out.action = expert_action;
    out.replaced = true;
  } else {
    out.replaced = false;
  }
  return out;
}

struct AlignmentReport {
  long total = 0;
  long replaced = 0;
  double fraction = 0.0;
  double mean_replaced_distance = 0.0;   // action distance among replaced
  double mean_preserved_distance = 0.0;  // action distance among preserved
};

inline std::pair<CouplingSet, AlignmentReport> align_dataset(
    const CouplingSet& couplings, const NormalizedDemos& demos,
    const AlignConfig& cfg) {
  cfg.validate();
  if (couplings.empty()) {
    throw InvalidArgumentError("align_dataset: empty coupling set");
  }
  CouplingSet out;
  out.reserve(couplings.size());
  AlignmentReport report;
  report.total = static_cast<long>(couplings.size());
  double replaced_dist = 0.0, preserved_dist = 0.0;
  for (const CouplingRecord& r : couplings) {
    const NearestExpert nearest = nearest_expert(r.obs, demos);
    const std::vector<double>& expert_action =
        demos.actions[static_cast<std::size_t>(nearest.index)];
    const double action_dist = l2_distance(r.action, expert_action);
    CouplingRecord aligned = r;
    aligned.source = Source::sefa;
    if (action_dist < cfg.delta) {
      aligned.action = expert_action;
      aligned.replaced = true;
      ++report.replaced;
      replaced_dist += action_dist;
    } else {
      aligned.replaced = false;
      preserved_dist += action_dist;
    }
    out.push_back(std::move(aligned));
  }
  const long preserved = report.total - report.replaced;
  report.fraction = static_cast<double>(report.replaced) / report.total;
  report.mean_replaced_distance =
      report.replaced > 0 ? replaced_dist / report.replaced : 0.0;
  report.mean_preserved_distance =
      preserved > 0 ? preserved_dist / preserved : 0.0;
  return {std::move(out), report};
}

}  // namespace sefa
