#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "sefa/errors.hpp"
#include "sefa/normalizer.hpp"
#include "sefa/rng.hpp"
#include "sefa/velocity_net.hpp"

namespace sefa {

// ODE integration of da/ds = v(a, s, O) from s=0 (noise) to s=1 (action).
// The cores are generic over the velocity field so that analytic test fields
// exercise exactly the code path the network samplers use.

struct SolverConfig {
  enum class Kind { euler, rk45 };

  Kind kind = Kind::euler;
  int steps = 1;           // euler only
  double rtol = 1e-3;      // rk45 only
  double atol = 1e-6;      // rk45 only
  int max_trial_steps = 10000;

  static SolverConfig euler(int steps) {
    SolverConfig c;
    c.kind = Kind::euler;
    c.steps = steps;
    return c;
  }

  static SolverConfig rk45(double rtol, double atol) {
    SolverConfig c;
    c.kind = Kind::rk45;
    c.rtol = rtol;
    c.atol = atol;
    return c;
  }
};

// Textual grammar: "euler:N" or "rk45:RTOL,ATOL".
inline SolverConfig parse_solver(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (head == "euler") {
      const int steps = std::stoi(rest);
      if (steps < 1) throw InvalidArgumentError("");
      return SolverConfig::euler(steps);
    }
    if (head == "rk45") {
      const auto comma = rest.find(',');
      if (comma == std::string::npos) throw InvalidArgumentError("");
      const double rtol = std::stod(rest.substr(0, comma));
      const double atol = std::stod(rest.substr(comma + 1));
      if (!(rtol > 0.0) || !(atol > 0.0)) throw InvalidArgumentError("");
      return SolverConfig::rk45(rtol, atol);
    }
  } catch (const std::exception&) {
    // fall through to the shared error below
  }
  throw InvalidArgumentError("bad solver spec '" + text +
                             "' (want euler:N or rk45:RTOL,ATOL)");
}

inline std::string format_solver(const SolverConfig& c) {
  if (c.kind == SolverConfig::Kind::euler) {
    return "euler:" + std::to_string(c.steps);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "rk45:%g,%g", c.rtol, c.atol);
  return buf;
}

struct SamplePath {
  std::vector<double> times;                // visited s values, 0 .. 1
  std::vector<std::vector<double>> states;  // one state per visited time
  long nfe = 0;                             // velocity evaluations performed
};

namespace detail {

inline void check_finite_state(const std::vector<double>& a, const char* solver,
                               int step_index) {
  for (double v : a) {
    if (!std::isfinite(v)) {
      throw IntegrationFailure(std::string(solver) + ": non-finite state at step " +
                               std::to_string(step_index));
    }
  }
}

}  // namespace detail

// Fixed-step Euler with the velocity evaluated at the left endpoint of each
// interval: a_{k+1} = a_k + (1/steps) v(a_k, k/steps). Exact for fields that
// are constant along the path, which is why straight flows sample in 1 step.
template <typename Field>
SamplePath integrate_euler_field(Field&& field, std::vector<double> start, int steps) {
  if (steps < 1) {
    throw InvalidArgumentError("euler: steps must be >= 1");
  }
  SamplePath path;
  path.times.reserve(static_cast<std::size_t>(steps) + 1);
  path.states.reserve(static_cast<std::size_t>(steps) + 1);
  path.times.push_back(0.0);
  path.states.push_back(start);
  const double h = 1.0 / static_cast<double>(steps);
  std::vector<double> a = std::move(start);
  for (int k = 0; k < steps; ++k) {
    const double s = static_cast<double>(k) / static_cast<double>(steps);
    const std::vector<double> v = field(a, s);
    ++path.nfe;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] += h * v[i];
    }
    detail::check_finite_state(a, "euler", k);
    path.times.push_back(static_cast<double>(k + 1) / static_cast<double>(steps));
    path.states.push_back(a);
  }
  return path;
}

// Dormand-Prince 5(4) with the standard step-size controller. FSAL reuse is
// off: every trial step evaluates all seven stages, so nfe is exactly
// 7 * (trial steps, rejections included). Controller constants: initial step
// 0.1, safety 0.9, growth factor clamped to [0.2, 5].
template <typename Field>
SamplePath integrate_rk45_field(Field&& field, std::vector<double> start, double rtol,
                                double atol, int max_trial_steps = 10000) {
  if (!(rtol > 0.0) || !(atol > 0.0)) {
    throw InvalidArgumentError("rk45: tolerances must be positive");
  }
  static constexpr double c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr double a2[] = {1.0 / 5};
  static constexpr double a3[] = {3.0 / 40, 9.0 / 40};
  static constexpr double a4[] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
  static constexpr double a5[] = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561,
                                  -212.0 / 729};
  static constexpr double a6[] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247,
                                  49.0 / 176, -5103.0 / 18656};
  static constexpr double a7[] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192,
                                  -2187.0 / 6784, 11.0 / 84};
  // 5th-order weights equal the last tableau row; the embedded 4th-order
  // weights give the error estimate via their difference.
  static constexpr double b5[7] = {35.0 / 384,     0.0,        500.0 / 1113,
                                   125.0 / 192,    -2187.0 / 6784,
                                   11.0 / 84,      0.0};
  static constexpr double b4[7] = {5179.0 / 57600,   0.0,         7571.0 / 16695,
                                   393.0 / 640,      -92097.0 / 339200,
                                   187.0 / 2100,     1.0 / 40};
  const double* arows[6] = {a2, a3, a4, a5, a6, a7};

  const std::size_t dim = start.size();
  SamplePath path;
  path.times.push_back(0.0);
  path.states.push_back(start);

  std::vector<double> y = std::move(start);
  std::vector<std::vector<double>> k(7, std::vector<double>(dim));
  std::vector<double> ytmp(dim), y5(dim);

  double s = 0.0;
  double h = 0.1;
  int trials = 0;
  while (s < 1.0) {
    if (trials >= max_trial_steps) {
      throw IntegrationFailure("rk45: exceeded " + std::to_string(max_trial_steps) +
                               " trial steps");
    }
    if (h < 1e-14) {
      throw IntegrationFailure("rk45: step size underflow at s=" + std::to_string(s));
    }
    const bool last = h >= 1.0 - s;
    if (last) h = 1.0 - s;
    ++trials;

    k[0] = field(y, s);
    for (int stage = 1; stage < 7; ++stage) {
      const double* arow = arows[stage - 1];
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (int j = 0; j < stage; ++j) {
          acc += arow[j] * k[static_cast<std::size_t>(j)][i];
        }
        ytmp[i] = y[i] + h * acc;
      }
      k[static_cast<std::size_t>(stage)] = field(ytmp, std::min(s + c[stage] * h, 1.0));
    }
    path.nfe += 7;

    double err_sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      double acc5 = 0.0, errw = 0.0;
      for (int j = 0; j < 7; ++j) {
        acc5 += b5[j] * k[static_cast<std::size_t>(j)][i];
        errw += (b5[j] - b4[j]) * k[static_cast<std::size_t>(j)][i];
      }
      y5[i] = y[i] + h * acc5;
      const double scale = atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      const double e = h * errw / scale;
      err_sq += e * e;
    }
    const double err_norm = std::sqrt(err_sq / static_cast<double>(dim));

    double factor = err_norm == 0.0
                        ? 5.0
                        : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    if (err_norm <= 1.0) {
      s = last ? 1.0 : s + h;
      y = y5;
      detail::check_finite_state(y, "rk45", trials);
      path.times.push_back(s);
      path.states.push_back(y);
      h *= factor;
    } else {
      h *= factor;
    }
  }
  return path;
}

template <typename Field>
SamplePath integrate_field(Field&& field, std::vector<double> start,
                           const SolverConfig& cfg) {
  if (cfg.kind == SolverConfig::Kind::euler) {
    return integrate_euler_field(field, std::move(start), cfg.steps);
  }
  return integrate_rk45_field(field, std::move(start), cfg.rtol, cfg.atol,
                              cfg.max_trial_steps);
}

// Velocity field of a network under fixed conditioning, in normalized space.
struct NetField {
  const VelocityNet& net;
  const std::vector<double>& obs_normalized;

  std::vector<double> operator()(const std::vector<double>& a, double s) const {
    return eval_velocity(net, a, s, obs_normalized);
  }
};

inline SamplePath euler_integrate(const VelocityNet& net,
                                  const std::vector<double>& noise,
                                  const std::vector<double>& obs_normalized,
                                  int steps) {
  return integrate_euler_field(NetField{net, obs_normalized}, noise, steps);
}

inline SamplePath rk45_integrate(const VelocityNet& net,
                                 const std::vector<double>& noise,
                                 const std::vector<double>& obs_normalized,
                                 double rtol, double atol,
                                 int max_trial_steps = 10000) {
  return integrate_rk45_field(NetField{net, obs_normalized}, noise, rtol, atol,
                              max_trial_steps);
}

struct ActionSample {
  std::vector<double> action;  // denormalized action chunk
  long nfe = 0;
};

// One action prediction: draw noise in normalized action space, integrate it
// to an action under the normalized observation, map back to raw units.
inline ActionSample sample_action(const VelocityNet& net,
                                  const std::vector<double>& raw_obs,
                                  const SolverConfig& cfg, DeterministicRng& rng) {
  if (!net.norm.fitted) {
    throw StateError("sample_action: net has no fitted normalizer");
  }
  const std::vector<double> noise = rng.gaussian_vector(net.arch.action_dim);
  const std::vector<double> obs_n = net.norm.normalize_obs(raw_obs);
  SamplePath path = integrate_field(NetField{net, obs_n}, noise, cfg);
  ActionSample out;
  out.action = net.norm.denormalize_action(path.states.back());
  out.nfe = path.nfe;
  return out;
}

}  // namespace sefa
