#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sefa/adamw.hpp"
#include "sefa/envs.hpp"
#include "sefa/errors.hpp"
#include "sefa/normalizer.hpp"
#include "sefa/rng.hpp"
#include "sefa/velocity_net.hpp"

namespace sefa {

// Which stage produced a coupling. groundtruth pairs fresh gaussian noise
// with an expert action; the other tags mark model-generated or aligned data.
enum class Source { groundtruth, base, reflow, sefa };

inline std::string source_name(Source s) {
  switch (s) {
    case Source::groundtruth: return "groundtruth";
    case Source::base: return "base";
    case Source::reflow: return "reflow";
    case Source::sefa: return "sefa";
  }
  return "?";
}

inline Source parse_source(const std::string& s) {
  if (s == "groundtruth") return Source::groundtruth;
  if (s == "base") return Source::base;
  if (s == "reflow") return Source::reflow;
  if (s == "sefa") return Source::sefa;
  throw ValidationError("unknown coupling source tag: " + s);
}

// One (noise, action, observation) triple in normalized space.
struct CouplingRecord {
  std::vector<double> noise;
  std::vector<double> action;
  std::vector<double> obs;
  Source source = Source::groundtruth;
  bool replaced = false;
};

using CouplingSet = std::vector<CouplingRecord>;

// Stream tag separating the training rng from other consumers of a seed.
inline constexpr std::uint64_t kTrainStream = 0x7121;

struct TrainConfig {
  int epochs = 1;
  int batch = 64;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

// Linear interpolant between noise (s=0) and action (s=1).
inline std::vector<double> interpolate(const std::vector<double>& noise,
                                       const std::vector<double>& action, double s) {
  if (noise.size() != action.size()) {
    throw InvalidArgumentError("interpolate: dimension mismatch");
  }
  if (!(s >= 0.0 && s <= 1.0)) {
    throw InvalidArgumentError("interpolate: time " + std::to_string(s) +
                               " outside [0,1]");
  }
  std::vector<double> out(noise.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - s) * noise[i] + s * action[i];
  }
  return out;
}

struct LossGrads {
  double loss = 0.0;
  std::vector<TensorBuffer> grads;  // (w1, b1, w2, b2, ...) order
};

namespace detail {

inline void check_coupling_dims(const VelocityNet& net, const CouplingRecord& r) {
  if (static_cast<int>(r.noise.size()) != net.arch.action_dim ||
      static_cast<int>(r.action.size()) != net.arch.action_dim ||
      static_cast<int>(r.obs.size()) != net.arch.obs_dim) {
    throw InvalidArgumentError("coupling record dimensions do not match the net");
  }
}

// Builds the [B, input_dim] interpolant batch and the [B, action_dim]
// velocity target (action - noise).
inline void build_batch(const VelocityNet& net, const CouplingSet& data,
                        const std::vector<int>& indices,
                        const std::vector<double>& times, TensorBuffer& inputs,
                        TensorBuffer& targets) {
  const NetArch& arch = net.arch;
  const int batch = static_cast<int>(indices.size());
  inputs = TensorBuffer({batch, arch.input_dim()});
  targets = TensorBuffer({batch, arch.action_dim});
  for (int i = 0; i < batch; ++i) {
    const CouplingRecord& r = data[static_cast<std::size_t>(indices[i])];
    const double s = times[static_cast<std::size_t>(i)];
    const std::vector<double> a_t = interpolate(r.noise, r.action, s);
    fill_input_row(inputs.data.data() + static_cast<std::size_t>(i) * arch.input_dim(),
                   arch, a_t, s, r.obs);
    for (int j = 0; j < arch.action_dim; ++j) {
      targets.at(i, j) = r.action[j] - r.noise[j];
    }
  }
}

inline LossGrads loss_and_grads(Tape& tape, const VelocityNet& net,
                                TensorBuffer inputs, TensorBuffer targets) {
  const int batch = inputs.shape[0];
  const TracedForward tf = trace_forward(tape, net, std::move(inputs));
  const Tape::NodeId neg_target = tape.input(std::move(targets));
  const Tape::NodeId residual = tape.add(tf.output, tape.scale(neg_target, -1.0));
  const Tape::NodeId loss_node =
      tape.scale(tape.sum_squares(residual), 1.0 / static_cast<double>(batch));
  tape.backward(loss_node);
  LossGrads lg;
  lg.loss = tape.value(loss_node).data[0];
  lg.grads.reserve(tf.params.size());
  for (Tape::NodeId p : tf.params) {
    lg.grads.push_back(tape.grad(p));
  }
  return lg;
}

}  // namespace detail

// Mean over the batch of || (action - noise) - v(a_s, s, O) ||^2 together
// with the gradients for every parameter tensor.
inline LossGrads flow_matching_loss(const VelocityNet& net, const CouplingSet& batch,
                                    const std::vector<double>& times) {
  if (batch.empty()) {
    throw InvalidArgumentError("flow_matching_loss: empty batch");
  }
  if (times.size() != batch.size()) {
    throw InvalidArgumentError("flow_matching_loss: need one time per record");
  }
  for (double s : times) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw InvalidArgumentError("flow_matching_loss: time outside [0,1]");
    }
  }
  for (const CouplingRecord& r : batch) {
    detail::check_coupling_dims(net, r);
  }
  std::vector<int> indices(batch.size());
  std::iota(indices.begin(), indices.end(), 0);
  TensorBuffer inputs, targets;
  detail::build_batch(net, batch, indices, times, inputs, targets);
  Tape tape;
  return detail::loss_and_grads(tape, net, std::move(inputs), std::move(targets));
}

struct TrainResult {
  VelocityNet net;
  std::vector<double> epoch_losses;  // mean step loss per epoch
  long steps = 0;

  double final_loss() const {
    return epoch_losses.empty() ? 0.0 : epoch_losses.back();
  }
};

// Runs epochs x ceil(N/batch) AdamW steps over deterministically shuffled
// batches, drawing a fresh uniform time per record per step. One rng seeded
// from cfg.seed drives shuffling and time sampling, consumed sequentially, so
// identical inputs give bit-identical parameters.
inline TrainResult train_policy(const VelocityNet& init, const CouplingSet& data,
                                const TrainConfig& cfg) {
  if (cfg.epochs < 1) {
    throw InvalidArgumentError("train_policy: epochs must be >= 1");
  }
  if (cfg.batch < 1) {
    throw InvalidArgumentError("train_policy: batch must be >= 1");
  }
  if (data.empty()) {
    throw InvalidArgumentError("train_policy: empty coupling set");
  }
  for (const CouplingRecord& r : data) {
    detail::check_coupling_dims(init, r);
  }

  TrainResult result;
  result.net = init;
  VelocityNet& net = result.net;

  std::vector<const TensorBuffer*> param_view;
  for (int l = 0; l < net.num_layers(); ++l) {
    param_view.push_back(&net.weights[l]);
    param_view.push_back(&net.biases[l]);
  }
  AdamWState opt(param_view,
                 AdamWConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  const std::vector<std::string> names = net.param_names();

  DeterministicRng rng(derive_seed(cfg.seed, kTrainStream));
  const int n = static_cast<int>(data.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Tape tape;
  std::vector<double> times;
  std::vector<int> batch_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates from the shared stream.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double epoch_loss = 0.0;
    int epoch_steps = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int count = std::min(cfg.batch, n - start);
      batch_idx.assign(order.begin() + start, order.begin() + start + count);
      times.resize(static_cast<std::size_t>(count));
      for (double& s : times) s = rng.next_uniform();

      TensorBuffer inputs, targets;
      detail::build_batch(net, data, batch_idx, times, inputs, targets);
      tape.reset();
      LossGrads lg = detail::loss_and_grads(tape, net, std::move(inputs),
                                            std::move(targets));
      ++result.steps;
      if (!std::isfinite(lg.loss)) {
        throw TrainingDivergence("train_policy: non-finite loss at step " +
                                 std::to_string(result.steps));
      }
      std::vector<TensorBuffer*> params;
      std::vector<const TensorBuffer*> grads;
      for (int l = 0; l < net.num_layers(); ++l) {
        params.push_back(&net.weights[l]);
        params.push_back(&net.biases[l]);
      }
      for (const TensorBuffer& g : lg.grads) {
        grads.push_back(&g);
      }
      opt.step(params, grads, names);
      epoch_loss += lg.loss;
      ++epoch_steps;
    }
    result.epoch_losses.push_back(epoch_loss / epoch_steps);
  }
  return result;
}

// Pairs every demonstration with `noises_per_demo` fresh gaussian noise
// vectors in normalized action space; the record for demo d, draw j uses the
// rng derive_seed(seed, d * noises_per_demo + j).
inline CouplingSet groundtruth_couplings(const std::vector<Demonstration>& demos,
                                         const Normalizer& norm, int noises_per_demo,
                                         std::uint64_t seed) {
  if (demos.empty()) {
    throw InvalidArgumentError("groundtruth_couplings: empty demonstration set");
  }
  if (noises_per_demo < 1) {
    throw InvalidArgumentError("groundtruth_couplings: noises_per_demo must be >= 1");
  }
  CouplingSet out;
  out.reserve(demos.size() * static_cast<std::size_t>(noises_per_demo));
  const int adim = static_cast<int>(demos[0].action.size());
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const std::vector<double> obs_n = norm.normalize_obs(demos[d].obs);
    const std::vector<double> act_n = norm.normalize_action(demos[d].action);
    for (int j = 0; j < noises_per_demo; ++j) {
      DeterministicRng rng(derive_seed(
          seed, d * static_cast<std::uint64_t>(noises_per_demo) + j));
      CouplingRecord r;
      r.noise = rng.gaussian_vector(adim);
      r.action = act_n;
      r.obs = obs_n;
      r.source = Source::groundtruth;
      r.replaced = false;
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace sefa
