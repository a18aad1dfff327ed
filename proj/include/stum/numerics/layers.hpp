#pragma once

#include <string>
#include <vector>

#include "stum/numerics/rng.hpp"
#include "stum/numerics/tape.hpp"
#include "stum/numerics/tensor.hpp"

namespace stum::num {

enum class LayerKind { conv2d, downsample, norm, leaky_relu, affine };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::downsample: return "downsample";
    case LayerKind::norm: return "norm";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::affine: return "affine";
  }
  return "?";
}

// One layer of a stack. Hyperparameters are validated against the incoming
// shape at construction; invalid combinations never reach training.
struct LayerSpec {
  LayerKind kind;
  // conv2d / downsample
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  // norm
  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.9;
  // leaky_relu
  double slope = 0.1;
  // affine
  int in_dim = 0;
  int out_dim = 0;

  static LayerSpec conv(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  // Downsampling is a stride-2 convolution.
  static LayerSpec down(int in_ch, int out_ch, int kernel = 3, int pad = 1) {
    LayerSpec s = conv(in_ch, out_ch, kernel, 2, pad);
    s.kind = LayerKind::downsample;
    return s;
  }
  static LayerSpec norm_layer(int channels) {
    LayerSpec s;
    s.kind = LayerKind::norm;
    s.channels = channels;
    return s;
  }
  static LayerSpec leaky(double slope = 0.1) {
    LayerSpec s;
    s.kind = LayerKind::leaky_relu;
    s.slope = slope;
    return s;
  }
  static LayerSpec dense(int in_dim, int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::affine;
    s.in_dim = in_dim;
    s.out_dim = out_dim;
    return s;
  }

  bool is_conv_like() const { return kind == LayerKind::conv2d || kind == LayerKind::downsample; }
};

// Walks a spec chain from a per-sample input shape and returns the per-sample
// output shape. Throws on any invalid combination.
std::vector<int> validate_layer_chain(const std::vector<LayerSpec>& specs,
                                      std::vector<int> input_shape);

enum class RunMode {
  train,         // batch statistics, running stats updated
  train_frozen,  // batch statistics, running stats untouched (gradient checks)
  infer,         // running statistics
};

// A sequential network over the five layer kinds. Owns its parameters and
// norm running buffers.
template <typename T>
struct LayerStackT {
  std::vector<LayerSpec> specs;
  std::vector<int> input_shape;           // per-sample
  std::vector<int> output_shape;          // per-sample, derived
  std::vector<ParameterT<T>> params;      // in layer order
  struct NormBuffers {
    TensorT<T> run_mean;
    TensorT<T> run_var;
  };
  std::vector<NormBuffers> norm_buffers;  // one per norm layer

  // Maps layer index -> first parameter index (-1 if the layer has none).
  std::vector<int> layer_param_start;

  static LayerStackT build(std::vector<LayerSpec> layer_specs, std::vector<int> in_shape,
                           Rng init_rng, const std::string& name_prefix) {
    LayerStackT net;
    net.specs = std::move(layer_specs);
    net.input_shape = std::move(in_shape);
    net.output_shape = validate_layer_chain(net.specs, net.input_shape);
    int li = 0;
    for (const auto& spec : net.specs) {
      const std::string base = name_prefix + ".l" + std::to_string(li);
      net.layer_param_start.push_back(spec.kind == LayerKind::leaky_relu
                                          ? -1
                                          : static_cast<int>(net.params.size()));
      switch (spec.kind) {
        case LayerKind::conv2d:
        case LayerKind::downsample: {
          TensorT<T> w({spec.out_ch, spec.in_ch, spec.kernel, spec.kernel});
          kaiming_uniform(w, spec.in_ch * spec.kernel * spec.kernel, init_rng.fork(base + ".w"));
          net.params.emplace_back(base + ".w", std::move(w));
          net.params.emplace_back(base + ".b", TensorT<T>({spec.out_ch}));
          break;
        }
        case LayerKind::norm: {
          TensorT<T> gamma({spec.channels});
          gamma.fill(T(1));
          net.params.emplace_back(base + ".gamma", std::move(gamma));
          net.params.emplace_back(base + ".beta", TensorT<T>({spec.channels}));
          NormBuffers nb;
          nb.run_mean = TensorT<T>({spec.channels});
          nb.run_var = TensorT<T>({spec.channels});
          nb.run_var.fill(T(1));
          net.norm_buffers.push_back(std::move(nb));
          break;
        }
        case LayerKind::leaky_relu:
          break;
        case LayerKind::affine: {
          TensorT<T> w({spec.out_dim, spec.in_dim});
          kaiming_uniform(w, spec.in_dim, init_rng.fork(base + ".w"));
          net.params.emplace_back(base + ".w", std::move(w));
          net.params.emplace_back(base + ".b", TensorT<T>({spec.out_dim}));
          break;
        }
      }
      ++li;
    }
    return net;
  }

  // Forward through the stack. Input must be [dims...] or [N, dims...]
  // matching input_shape per sample.
  typename TapeT<T>::Var forward(TapeT<T>& tape, typename TapeT<T>::Var x, RunMode mode) {
    const bool batched =
        tape.value(x).ndim() == static_cast<int>(input_shape.size()) + 1;
    const int batch = batched ? tape.value(x).shape[0] : 1;
    int pi = 0, ni = 0;
    typename TapeT<T>::Var cur = x;
    for (const auto& spec : specs) {
      switch (spec.kind) {
        case LayerKind::conv2d:
        case LayerKind::downsample: {
          auto w = tape.param(params[pi]);
          auto b = tape.param(params[pi + 1]);
          cur = tape.conv2d(cur, w, b, spec.stride, spec.pad);
          pi += 2;
          break;
        }
        case LayerKind::norm: {
          auto gamma = tape.param(params[pi]);
          auto beta = tape.param(params[pi + 1]);
          auto& nb = norm_buffers[ni];
          const bool training = mode != RunMode::infer;
          const bool update = mode == RunMode::train;
          // Norm always sees a batch axis; promote single samples.
          bool promoted = tape.value(cur).ndim() == 3;
          if (promoted) {
            auto s = tape.value(cur).shape;
            cur = tape.reshape(cur, {1, s[0], s[1], s[2]});
          }
          cur = tape.batchnorm(cur, gamma, beta, nb.run_mean, nb.run_var, training, update,
                               static_cast<T>(spec.momentum), static_cast<T>(spec.eps));
          if (promoted) {
            auto s = tape.value(cur).shape;
            cur = tape.reshape(cur, {s[1], s[2], s[3]});
          }
          pi += 2;
          ++ni;
          break;
        }
        case LayerKind::leaky_relu:
          cur = tape.leaky_relu(cur, static_cast<T>(spec.slope));
          break;
        case LayerKind::affine: {
          auto w = tape.param(params[pi]);
          auto b = tape.param(params[pi + 1]);
          // Flatten per sample; a lone [C,H,W] map is one row, not a batch.
          const size_t flat = tape.value(cur).numel() / batch;
          cur = batched ? tape.reshape(cur, {batch, static_cast<int>(flat)})
                        : tape.reshape(cur, {static_cast<int>(flat)});
          cur = tape.affine(cur, w, b);
          pi += 2;
          break;
        }
      }
    }
    return cur;
  }

  std::vector<ParameterT<T>*> parameters() {
    std::vector<ParameterT<T>*> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(&p);
    return out;
  }

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
  }

  int conv_layer_count() const {
    int n = 0;
    for (const auto& s : specs)
      if (s.is_conv_like()) ++n;
    return n;
  }

  static void kaiming_uniform(TensorT<T>& w, int fan_in, Rng rng) {
    // Fan-in scaling with the leaky-relu gain for slope 0.1.
    const double gain = std::sqrt(2.0 / (1.0 + 0.1 * 0.1));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
};

using LayerStack = LayerStackT<float>;

// Double-precision copy for gradient checking.
inline LayerStackT<double> to_double(const LayerStackT<float>& net) {
  LayerStackT<double> out;
  out.specs = net.specs;
  out.input_shape = net.input_shape;
  out.output_shape = net.output_shape;
  out.layer_param_start = net.layer_param_start;
  for (const auto& p : net.params) {
    out.params.emplace_back(p.name, cast_tensor<double>(p.value));
  }
  for (const auto& nb : net.norm_buffers) {
    LayerStackT<double>::NormBuffers b;
    b.run_mean = cast_tensor<double>(nb.run_mean);
    b.run_var = cast_tensor<double>(nb.run_var);
    out.norm_buffers.push_back(std::move(b));
  }
  return out;
}

}  // namespace stum::num
