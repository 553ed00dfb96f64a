#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sefa/errors.hpp"
#include "sefa/normalizer.hpp"
#include "sefa/rng.hpp"
#include "sefa/tape.hpp"
#include "sefa/tensor.hpp"

namespace sefa {

// The drift network v(a_t, s, O): a tanh MLP over the concatenation
// [noisy action chunk | time features | observation], all in normalized
// units. Time runs from s=0 at the noise end to s=1 at the action end.
//
// Time enters as the scalar s plus optionally `time_harmonics` Fourier pairs
// sin(2 pi k s), cos(2 pi k s). With the bare scalar the network must carve
// all of its time dependence out of one input; the steep, ill-conditioned
// region near s=1 then dominates training and drags the fit at s=0 — the
// slice one-step inference runs on — to an error floor an order of magnitude
// above what the same network reaches on the s=0 function alone. The
// harmonics give the first layer a near-orthogonal basis along the time axis,
// which decouples those regions.
struct NetArch {
  int action_dim = 0;
  int obs_dim = 0;
  std::vector<int> hidden = {128, 128};
  int time_harmonics = 0;

  int time_dim() const { return 1 + 2 * time_harmonics; }

  int input_dim() const { return action_dim + time_dim() + obs_dim; }

  // Layer sizes including input and output.
  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim());
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(action_dim);
    return dims;
  }
};

struct VelocityNet {
  NetArch arch;
  std::vector<TensorBuffer> weights;  // weights[l]: [dims[l], dims[l+1]]
  std::vector<TensorBuffer> biases;   // biases[l]: [dims[l+1]]
  Normalizer norm;

  int num_layers() const { return static_cast<int>(weights.size()); }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (int l = 0; l < num_layers(); ++l) {
      names.push_back("w" + std::to_string(l + 1));
      names.push_back("b" + std::to_string(l + 1));
    }
    return names;
  }

  bool params_finite() const {
    for (const auto& w : weights) {
      if (!w.all_finite()) return false;
    }
    for (const auto& b : biases) {
      if (!b.all_finite()) return false;
    }
    return true;
  }
};

// Scaled-uniform fan-in initialization: w ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// biases zero. Weights are drawn layer by layer in row-major order, so an
// identical seed reproduces the net bit-exactly.
inline VelocityNet init_net(int action_dim, int obs_dim, DeterministicRng& rng,
                            std::vector<int> hidden = {128, 128},
                            int time_harmonics = 0) {
  if (action_dim < 1 || obs_dim < 1) {
    throw InvalidArgumentError("init_net: dims must be >= 1");
  }
  if (time_harmonics < 0) {
    throw InvalidArgumentError("init_net: time_harmonics must be >= 0");
  }
  for (int h : hidden) {
    if (h < 1) throw InvalidArgumentError("init_net: hidden widths must be >= 1");
  }
  VelocityNet net;
  net.arch = NetArch{action_dim, obs_dim, std::move(hidden), time_harmonics};
  const std::vector<int> dims = net.arch.layer_dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    TensorBuffer w({fan_in, fan_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) {
      v = rng.next_uniform(-bound, bound);
    }
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(std::vector<int>{fan_out});
  }
  return net;
}

// Assembles the network input row [a_t | time features | obs] into `row`.
inline void fill_input_row(double* row, const NetArch& arch,
                           const std::vector<double>& a_t, double s,
                           const std::vector<double>& obs) {
  for (int i = 0; i < arch.action_dim; ++i) row[i] = a_t[i];
  int at = arch.action_dim;
  row[at++] = s;
  for (int k = 1; k <= arch.time_harmonics; ++k) {
    const double angle = 2.0 * 3.14159265358979323846 * k * s;
    row[at++] = std::sin(angle);
    row[at++] = std::cos(angle);
  }
  for (int i = 0; i < arch.obs_dim; ++i) row[at + i] = obs[i];
}

// Plain single-row forward pass used on the inference paths (ODE sampling,
// straightness probes). Tanh on every layer but the last.
inline std::vector<double> eval_velocity(const VelocityNet& net,
                                         const std::vector<double>& a_t, double s,
                                         const std::vector<double>& obs) {
  const NetArch& arch = net.arch;
  if (static_cast<int>(a_t.size()) != arch.action_dim ||
      static_cast<int>(obs.size()) != arch.obs_dim) {
    throw InvalidArgumentError("eval_velocity: dimension mismatch");
  }
  if (!(s >= 0.0 && s <= 1.0)) {
    throw InvalidArgumentError("eval_velocity: time " + std::to_string(s) +
                               " outside [0,1]");
  }
  std::vector<double> x(static_cast<std::size_t>(arch.input_dim()));
  fill_input_row(x.data(), arch, a_t, s, obs);
  std::vector<double> y;
  for (int l = 0; l < net.num_layers(); ++l) {
    const TensorBuffer& w = net.weights[l];
    const TensorBuffer& b = net.biases[l];
    y.resize(b.data.size());
    mm(y.data(), x.data(), w.data.data(), 1, w.shape[0], w.shape[1]);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += b.data[j];
    if (l + 1 < net.num_layers()) {
      for (double& v : y) v = std::tanh(v);
    }
    x.swap(y);
  }
  return x;
}

// Traces a whole-batch forward pass onto the tape and returns the output node
// together with the parameter nodes, in (w1, b1, w2, b2, ...) order.
struct TracedForward {
  Tape::NodeId output;
  std::vector<Tape::NodeId> params;
};

inline TracedForward trace_forward(Tape& tape, const VelocityNet& net,
                                   TensorBuffer batch_inputs) {
  TracedForward tf;
  Tape::NodeId x = tape.input(std::move(batch_inputs));
  for (int l = 0; l < net.num_layers(); ++l) {
    const Tape::NodeId w = tape.input(net.weights[l]);
    const Tape::NodeId b = tape.input(net.biases[l]);
    tf.params.push_back(w);
    tf.params.push_back(b);
    x = tape.add_row(tape.matmul(x, w), b);
    if (l + 1 < net.num_layers()) {
      x = tape.tanh_fn(x);
    }
  }
  tf.output = x;
  return tf;
}

}  // namespace sefa
