#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipsync/params.hpp"
#include "lipsync/rng.hpp"
#include "lipsync/tensor.hpp"

namespace lipsync {

enum class Act { None, Relu, Elu, LeakyRelu, Sigmoid };

enum class LayerKind { Conv, ConvTranspose, Residual };

/// One layer of a convolutional chain. Residual layers are a pair of 3x3
/// same-width convolutions with an identity skip: y = act(x + c2(act(c1(x)))).
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::int64_t in_ch = 0;
  std::int64_t out_ch = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t pad = 1;
  Act act = Act::Elu;
  double leaky_slope = 0.2;
};

LayerSpec conv_spec(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                    std::int64_t stride, std::int64_t pad, Act act);
LayerSpec convt_spec(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                     std::int64_t stride, std::int64_t pad, Act act);
LayerSpec residual_spec(std::int64_t channels, Act act);

/// Saved activations from one ConvChain::forward, consumed by backward.
struct ChainCache {
  struct Layer {
    Tensor x;   // layer input
    Tensor z1;  // pre-activation (first conv for residual layers)
    Tensor h1;  // residual only: act(z1)
    Tensor z2;  // residual only: x + c2(h1), pre-activation of the output
  };
  std::vector<Layer> layers;
};

/// A named sequence of conv/conv-transpose/residual layers with hand-written
/// backward. Parameters live in a ParameterSet under `<prefix>.<index>.<leaf>`
/// so several chains can share one set without name clashes.
class ConvChain {
 public:
  ConvChain() = default;
  ConvChain(std::string prefix, std::vector<LayerSpec> specs);

  /// He-initialized weights, zero biases.
  void init_params(ParameterSet& params, Rng& rng) const;

  Tensor forward(const ParameterSet& params, const Tensor& x, ChainCache* cache) const;

  /// Returns dL/dx. Parameter gradients accumulate into `grads` when non-null
  /// (pass nullptr for frozen networks to skip the weight-gradient GEMMs).
  Tensor backward(const ParameterSet& params, const ChainCache& cache, const Tensor& dout,
                  GradStore* grads) const;

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::int64_t out_channels() const;
  const std::string& prefix() const { return prefix_; }

 private:
  std::string name(std::size_t layer, const char* leaf) const;

  std::string prefix_;
  std::vector<LayerSpec> specs_;
};

/// He-initialized matrix for a linear head; fan_in = rows.
Tensor he_matrix(std::int64_t rows, std::int64_t cols, Rng& rng);

Tensor apply_act(const Tensor& z, Act act, double leaky_slope = 0.2);
Tensor act_backward(const Tensor& z, const Tensor& dy, Act act, double leaky_slope = 0.2);

}  // namespace lipsync
