#pragma once

#include <vector>

#include "sefa/envs.hpp"
#include "sefa/errors.hpp"

namespace sefa {

// Per-dimension min-max normalization onto [-1, 1], fitted once from the
// demonstration dataset and carried inside every checkpoint. Normalized
// observation space doubles as the metric space for nearest-expert search,
// and normalized action space is where noise lives and where the alignment
// threshold applies. Dimensions with max == min map to 0 and map back to min.
struct Normalizer {
  std::vector<double> obs_min, obs_max;
  std::vector<double> act_min, act_max;
  bool fitted = false;

  static Normalizer fit(const std::vector<Demonstration>& demos) {
    if (demos.empty()) {
      throw InvalidArgumentError("Normalizer::fit: empty demonstration set");
    }
    Normalizer n;
    n.obs_min = demos[0].obs;
    n.obs_max = demos[0].obs;
    n.act_min = demos[0].action;
    n.act_max = demos[0].action;
    for (const Demonstration& d : demos) {
      for (std::size_t i = 0; i < n.obs_min.size(); ++i) {
        n.obs_min[i] = std::min(n.obs_min[i], d.obs[i]);
        n.obs_max[i] = std::max(n.obs_max[i], d.obs[i]);
      }
      for (std::size_t i = 0; i < n.act_min.size(); ++i) {
        n.act_min[i] = std::min(n.act_min[i], d.action[i]);
        n.act_max[i] = std::max(n.act_max[i], d.action[i]);
      }
    }
    n.fitted = true;
    return n;
  }

  std::vector<double> normalize_obs(const std::vector<double>& x) const {
    return apply(x, obs_min, obs_max, "observation");
  }
  std::vector<double> denormalize_obs(const std::vector<double>& x) const {
    return invert(x, obs_min, obs_max, "observation");
  }
  std::vector<double> normalize_action(const std::vector<double>& x) const {
    return apply(x, act_min, act_max, "action");
  }
  std::vector<double> denormalize_action(const std::vector<double>& x) const {
    return invert(x, act_min, act_max, "action");
  }

 private:
  void require_fitted() const {
    if (!fitted) {
      throw StateError("normalizer used before fitting");
    }
  }

  std::vector<double> apply(const std::vector<double>& x,
                            const std::vector<double>& lo,
                            const std::vector<double>& hi,
                            const char* what) const {
    require_fitted();
    if (x.size() != lo.size()) {
      throw InvalidArgumentError(std::string("normalize: ") + what +
                                 " dimension mismatch");
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double range = hi[i] - lo[i];
      out[i] = range == 0.0 ? 0.0 : 2.0 * (x[i] - lo[i]) / range - 1.0;
    }
    return out;
  }

  std::vector<double> invert(const std::vector<double>& x,
                             const std::vector<double>& lo,
                             const std::vector<double>& hi,
                             const char* what) const {
    require_fitted();
    if (x.size() != lo.size()) {
      throw InvalidArgumentError(std::string("denormalize: ") + what +
                                 " dimension mismatch");
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double range = hi[i] - lo[i];
      out[i] = range == 0.0 ? lo[i] : lo[i] + (x[i] + 1.0) * range / 2.0;
    }
    return out;
  }
};

}  // namespace sefa
