#pragma once

// Fully connected ReLU network with a softmax cross-entropy head, trained
// through a flat parameter vector so that gradients can be sparsified and
// aggregated coordinate by coordinate.
//
// Flat layout, layer by layer: the weight matrix (fan_out rows of fan_in,
// row-major) followed by the bias vector.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "agefl/dataset.hpp"
#include "agefl/error.hpp"
#include "agefl/rng.hpp"
#include "agefl/vectors.hpp"

namespace agefl {

struct ModelSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw ParameterError("model needs at least an input and an output layer");
    for (auto s : layer_sizes)
      if (s == 0) throw ParameterError("layer sizes must be positive");
  }

  std::size_t parameter_count() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      d += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return d;
  }

  // Offset of layer l's weight block in the flat vector; its bias follows the weights.
  std::size_t weight_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1];
    return off;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ModelState {
  ModelSpec spec;
  GradientVector theta;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

// Structured view of one layer.
struct LayerBlocks {
  std::vector<std::vector<double>> weights;  // [fan_out][fan_in]
  std::vector<double> bias;

  friend bool operator==(const LayerBlocks&, const LayerBlocks&) = default;
};

inline std::vector<LayerBlocks> unflatten(const ModelSpec& spec, const GradientVector& theta) {
  if (theta.dim() != spec.parameter_count()) throw StructuralError("unflatten: parameter count mismatch");
  std::vector<LayerBlocks> out(spec.num_layers());
  std::size_t pos = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = spec.layer_sizes[l], fan_out = spec.layer_sizes[l + 1];
    out[l].weights.assign(fan_out, std::vector<double>(in));
    for (std::size_t o = 0; o < fan_out; ++o)
      for (std::size_t i = 0; i < in; ++i) out[l].weights[o][i] = theta[pos++];
    out[l].bias.resize(fan_out);
    for (std::size_t o = 0; o < fan_out; ++o) out[l].bias[o] = theta[pos++];
  }
  return out;
}

inline GradientVector flatten(const ModelSpec& spec, const std::vector<LayerBlocks>& layers) {
  if (layers.size() != spec.num_layers()) throw StructuralError("flatten: layer count mismatch");
  GradientVector theta(spec.parameter_count());
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto in = spec.layer_sizes[l], fan_out = spec.layer_sizes[l + 1];
    if (layers[l].weights.size() != fan_out || layers[l].bias.size() != fan_out)
      throw StructuralError("flatten: block shape mismatch");
    for (const auto& row : layers[l].weights) {
      if (row.size() != in) throw StructuralError("flatten: block shape mismatch");
      for (double w : row) theta[pos++] = w;
    }
    for (double b : layers[l].bias) theta[pos++] = b;
  }
  return theta;
}

// Glorot-uniform weights, zero biases.
inline ModelState init_model(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  ModelState m{spec, GradientVector(spec.parameter_count())};
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = spec.layer_sizes[l], fan_out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + fan_out));
    const std::size_t off = spec.weight_offset(l);
    for (std::size_t i = 0; i < in * fan_out; ++i) m.theta[off + i] = rng.uniform(-limit, limit);
  }
  return m;
}

namespace detail {

struct Forward {
  std::vector<std::vector<double>> activations;  // [layer][sample * width], activations[0] = input
  std::vector<double> log_probs;                  // [sample * classes]
};

inline void check_batch(const ModelState& m, const Dataset& batch) {
  if (m.theta.dim() != m.spec.parameter_count())
    throw StructuralError("model parameter vector does not match its spec");
  if (batch.input_dim != m.spec.input_dim())
    throw StructuralError("feature dimension " + std::to_string(batch.input_dim) + " does not match model input " +
                          std::to_string(m.spec.input_dim()));
  if (batch.features.size() != batch.size() * batch.input_dim)
    throw StructuralError("batch feature storage does not match its sample count");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= m.spec.num_classes())
      throw StructuralError("label " + std::to_string(y) + " outside [0, " + std::to_string(m.spec.num_classes()) + ")");
}

inline Forward forward(const ModelState& m, const Dataset& batch) {
  const auto& sizes = m.spec.layer_sizes;
  const std::size_t n = batch.size();
  Forward f;
  f.activations.push_back(batch.features);
  for (std::size_t l = 0; l < m.spec.num_layers(); ++l) {
    const auto in = sizes[l], out = sizes[l + 1];
    const double* w = m.theta.values().data() + m.spec.weight_offset(l);
    const double* b = w + in * out;
    const auto& x = f.activations.back();
    std::vector<double> z(n * out);
    const bool hidden = l + 1 < m.spec.num_layers();
    for (std::size_t s = 0; s < n; ++s) {
      const double* xs = x.data() + s * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = w + o * in;
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xs[i];
        z[s * out + o] = hidden ? std::max(acc, 0.0) : acc;
      }
    }
    f.activations.push_back(std::move(z));
  }
  const std::size_t classes = m.spec.num_classes();
  const auto& logits = f.activations.back();
  f.log_probs.resize(n * classes);
  for (std::size_t s = 0; s < n; ++s) {
    const double* zs = logits.data() + s * classes;
    const double peak = *std::max_element(zs, zs + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(zs[c] - peak);
    const double lse = peak + std::log(total);
    for (std::size_t c = 0; c < classes; ++c) f.log_probs[s * classes + c] = zs[c] - lse;
  }
  for (double v : f.log_probs)
    if (!std::isfinite(v)) throw NumericalError("non-finite activation in forward pass");
  return f;
}

}  // namespace detail

struct LossAndGradient {
  double loss = 0.0;
  GradientVector gradient;
};

// Mean softmax cross-entropy over the batch and its exact gradient (backprop).
inline LossAndGradient loss_and_gradient(const ModelState& m, const Dataset& batch) {
  detail::check_batch(m, batch);
  if (batch.empty()) throw ParameterError("loss_and_gradient: empty batch");
  const auto& sizes = m.spec.layer_sizes;
  const std::size_t n = batch.size();
  const std::size_t classes = m.spec.num_classes();
  const auto f = detail::forward(m, batch);
  const double inv_n = 1.0 / static_cast<double>(n);

  LossAndGradient out{0.0, GradientVector(m.theta.dim())};
  std::vector<double> delta(n * classes);
  for (std::size_t s = 0; s < n; ++s) {
    const auto y = static_cast<std::size_t>(batch.labels[s]);
    out.loss -= f.log_probs[s * classes + y];
    for (std::size_t c = 0; c < classes; ++c)
      delta[s * classes + c] = (std::exp(f.log_probs[s * classes + c]) - (c == y ? 1.0 : 0.0)) * inv_n;
  }
  out.loss *= inv_n;

  for (std::size_t l = m.spec.num_layers(); l-- > 0;) {
    const auto in = sizes[l], fan_out = sizes[l + 1];
    const std::size_t off = m.spec.weight_offset(l);
    const double* w = m.theta.values().data() + off;
    double* gw = out.gradient.values().data() + off;
    double* gb = gw + in * fan_out;
    const auto& x = f.activations[l];
    for (std::size_t s = 0; s < n; ++s) {
      const double* xs = x.data() + s * in;
      const double* ds = delta.data() + s * fan_out;
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double d = ds[o];
        if (d == 0.0) continue;
        double* gwo = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) gwo[i] += d * xs[i];
        gb[o] += d;
      }
    }
    if (l == 0) break;
    std::vector<double> prev(n * in, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* ds = delta.data() + s * fan_out;
      double* ps = prev.data() + s * in;
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double d = ds[o];
        if (d == 0.0) continue;
        const double* wo = w + o * in;
        for (std::size_t i = 0; i < in; ++i) ps[i] += d * wo[i];
      }
      const double* as = x.data() + s * in;  // post-ReLU activations of the layer below
      for (std::size_t i = 0; i < in; ++i)
        if (as[i] <= 0.0) ps[i] = 0.0;
    }
    delta = std::move(prev);
  }
  if (!std::isfinite(out.loss) || !out.gradient.all_finite()) throw NumericalError("non-finite loss or gradient");
  return out;
}

inline double loss(const ModelState& m, const Dataset& batch) {
  detail::check_batch(m, batch);
  if (batch.empty()) throw ParameterError("loss: empty batch");
  const auto f = detail::forward(m, batch);
  const std::size_t classes = m.spec.num_classes();
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s)
    total -= f.log_probs[s * classes + static_cast<std::size_t>(batch.labels[s])];
  return total / static_cast<double>(batch.size());
}

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Argmax accuracy (ties go to the lower class) and mean cross-entropy.
inline Evaluation evaluate(const ModelState& m, const Dataset& data) {
  if (data.empty()) throw ParameterError("evaluate: empty dataset");
  detail::check_batch(m, data);
  constexpr std::size_t kChunk = 1024;
  const std::size_t classes = m.spec.num_classes();
  std::size_t correct = 0;
  double total_loss = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t stop = std::min(data.size(), start + kChunk);
    Dataset chunk;
    chunk.input_dim = data.input_dim;
    chunk.features.assign(data.features.begin() + static_cast<std::ptrdiff_t>(start * data.input_dim),
                          data.features.begin() + static_cast<std::ptrdiff_t>(stop * data.input_dim));
    chunk.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                        data.labels.begin() + static_cast<std::ptrdiff_t>(stop));
    const auto f = detail::forward(m, chunk);
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      const double* lp = f.log_probs.data() + s * classes;
      const auto pred = static_cast<std::size_t>(std::max_element(lp, lp + classes) - lp);
      const auto y = static_cast<std::size_t>(chunk.labels[s]);
      correct += pred == y;
      total_loss -= lp[y];
    }
  }
  const auto n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, total_loss / n};
}

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerConfig cfg, std::size_t dim)
      : config(cfg),
        first_moment(cfg.kind == OptimizerKind::Adam ? dim : 0, 0.0),
        second_moment(cfg.kind == OptimizerKind::Adam ? dim : 0, 0.0) {}

  void reset() {
    std::fill(first_moment.begin(), first_moment.end(), 0.0);
    std::fill(second_moment.begin(), second_moment.end(), 0.0);
    step = 0;
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline void apply_update(ModelState& m, OptimizerState& opt, const GradientVector& g) {
  if (g.dim() != m.theta.dim())
    throw StructuralError("apply_update: gradient dimension " + std::to_string(g.dim()) +
                          " does not match model dimension " + std::to_string(m.theta.dim()));
  if (!g.all_finite()) throw NumericalError("apply_update: non-finite gradient");
  ++opt.step;
  const auto& c = opt.config;
  auto& theta = m.theta.values();
  if (c.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= c.learning_rate * g[i];
    return;
  }
  if (opt.first_moment.size() != theta.size()) {
    opt.first_moment.assign(theta.size(), 0.0);
    opt.second_moment.assign(theta.size(), 0.0);
  }
  const double t = static_cast<double>(opt.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto& mi = opt.first_moment[i];
    auto& vi = opt.second_moment[i];
    mi = c.beta1 * mi + (1.0 - c.beta1) * g[i];
    vi = c.beta2 * vi + (1.0 - c.beta2) * g[i] * g[i];
    theta[i] -= c.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + c.epsilon);
  }
}

// Checkpoint layout (little-endian):
//   8 bytes  "AGEFLMDL"
//   u32      number of layer sizes L
//   u32 x L  layer sizes
//   u64      parameter count d
//   f64 x d  flat parameters (IEEE-754 bit pattern)
namespace detail {

inline void put_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(std::istream& is, int bytes, std::uint64_t& offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated checkpoint", offset);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    ++offset;
  }
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'A', 'G', 'E', 'F', 'L', 'M', 'D', 'L'};

inline void write_checkpoint(std::ostream& os, const ModelState& m) {
  os.write(kCheckpointMagic, 8);
  detail::put_le(os, m.spec.layer_sizes.size(), 4);
  for (auto s : m.spec.layer_sizes) detail::put_le(os, s, 4);
  detail::put_le(os, m.theta.dim(), 8);
  for (double v : m.theta) detail::put_le(os, std::bit_cast<std::uint64_t>(v), 8);
}

inline ModelState read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw FormatError("bad checkpoint magic", 0);
  std::uint64_t offset = 8;
  ModelState m;
  const auto layers = detail::get_le(is, 4, offset);
  if (layers < 2 || layers > 1024) throw FormatError("implausible layer count", offset - 4);
  for (std::uint64_t i = 0; i < layers; ++i) m.spec.layer_sizes.push_back(detail::get_le(is, 4, offset));
  const auto d = detail::get_le(is, 8, offset);
  if (d != m.spec.parameter_count()) throw FormatError("parameter count does not match layer sizes", offset - 8);
  m.theta = GradientVector(d);
  for (std::uint64_t i = 0; i < d; ++i) m.theta[i] = std::bit_cast<double>(detail::get_le(is, 8, offset));
  return m;
}

}  // namespace agefl
