#include "lipsync/chain.hpp"

#include <cmath>

#include "lipsync/errors.hpp"
#include "lipsync/nn.hpp"

namespace lipsync {

LayerSpec conv_spec(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                    std::int64_t stride, std::int64_t pad, Act act) {
  return LayerSpec{LayerKind::Conv, in_ch, out_ch, kernel, stride, pad, act, 0.2};
}

LayerSpec convt_spec(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                     std::int64_t stride, std::int64_t pad, Act act) {
  return LayerSpec{LayerKind::ConvTranspose, in_ch, out_ch, kernel, stride, pad, act, 0.2};
}

LayerSpec residual_spec(std::int64_t channels, Act act) {
  return LayerSpec{LayerKind::Residual, channels, channels, 3, 1, 1, act, 0.2};
}

Tensor apply_act(const Tensor& z, Act act, double leaky_slope) {
  switch (act) {
    case Act::None: return z;
    case Act::Relu: return nn::relu(z);
    case Act::Elu: return nn::elu(z);
    case Act::LeakyRelu: return nn::leaky_relu(z, leaky_slope);
    case Act::Sigmoid: return nn::sigmoid(z);
  }
  throw ContractViolation("unknown activation");
}

Tensor act_backward(const Tensor& z, const Tensor& dy, Act act, double leaky_slope) {
  switch (act) {
    case Act::None: return dy;
    case Act::Relu: return nn::relu_backward(z, dy);
    case Act::Elu: return nn::elu_backward(z, dy);
    case Act::LeakyRelu: return nn::leaky_relu_backward(z, leaky_slope, dy);
    case Act::Sigmoid: return nn::sigmoid_backward_from_y(nn::sigmoid(z), dy);
  }
  throw ContractViolation("unknown activation");
}

Tensor he_matrix(std::int64_t rows, std::int64_t cols, Rng& rng) {
  Tensor w = Tensor::zeros({rows, cols});
  const double stddev = std::sqrt(2.0 / static_cast<double>(rows));
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = stddev * rng.normal();
  return w;
}

namespace {

Tensor he_conv_weight(const LayerSpec& s, Rng& rng) {
  if (s.kind == LayerKind::ConvTranspose) {
    // Each output position of a stride-s transposed conv receives roughly
    // (k/s)^2 taps, so scale fan-in accordingly.
    Tensor w = Tensor::zeros({s.kernel, s.kernel, s.out_ch, s.in_ch});
    const double fan_in = std::max<double>(
        1.0, static_cast<double>(s.kernel * s.kernel * s.in_ch) /
                 static_cast<double>(s.stride * s.stride));
    const double stddev = std::sqrt(2.0 / fan_in);
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = stddev * rng.normal();
    return w;
  }
  Tensor w = Tensor::zeros({s.kernel, s.kernel, s.in_ch, s.out_ch});
  const double stddev =
      std::sqrt(2.0 / static_cast<double>(s.kernel * s.kernel * s.in_ch));
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = stddev * rng.normal();
  return w;
}

}  // namespace

ConvChain::ConvChain(std::string prefix, std::vector<LayerSpec> specs)
    : prefix_(std::move(prefix)), specs_(std::move(specs)) {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    if (s.in_ch < 1 || s.out_ch < 1 || s.kernel < 1 || s.stride < 1 || s.pad < 0)
      throw ContractViolation("malformed layer spec in chain '" + prefix_ + "'");
    if (s.kind == LayerKind::Residual && s.in_ch != s.out_ch)
      throw ContractViolation("residual layer must keep its channel count");
    if (i > 0 && specs_[i - 1].out_ch != s.in_ch)
      throw ContractViolation("channel mismatch between layers " + std::to_string(i - 1) +
                              " and " + std::to_string(i) + " of chain '" + prefix_ + "'");
  }
}

std::string ConvChain::name(std::size_t layer, const char* leaf) const {
  return prefix_ + "." + std::to_string(layer) + "." + leaf;
}

std::int64_t ConvChain::out_channels() const {
  if (specs_.empty()) throw ContractViolation("empty chain");
  return specs_.back().out_ch;
}

void ConvChain::init_params(ParameterSet& params, Rng& rng) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    if (s.kind == LayerKind::Residual) {
      params.insert(name(i, "w1"), he_conv_weight(s, rng));
      params.insert(name(i, "b1"), Tensor::zeros({s.out_ch}));
      params.insert(name(i, "w2"), he_conv_weight(s, rng));
      params.insert(name(i, "b2"), Tensor::zeros({s.out_ch}));
    } else {
      params.insert(name(i, "w"), he_conv_weight(s, rng));
      params.insert(name(i, "b"), Tensor::zeros({s.out_ch}));
    }
  }
}

Tensor ConvChain::forward(const ParameterSet& params, const Tensor& x, ChainCache* cache) const {
  if (cache) {
    cache->layers.clear();
    cache->layers.resize(specs_.size());
  }
  Tensor cur = x;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    ChainCache::Layer* saved = cache ? &cache->layers[i] : nullptr;
    if (saved) saved->x = cur;
    if (s.kind == LayerKind::Residual) {
      Tensor z1 = nn::conv2d(cur, params.at(name(i, "w1")), params.at(name(i, "b1")), 1, s.pad);
      Tensor h1 = apply_act(z1, s.act, s.leaky_slope);
      Tensor z2 = nn::conv2d(h1, params.at(name(i, "w2")), params.at(name(i, "b2")), 1, s.pad);
      z2.add_scaled(cur, 1.0);
      Tensor y = apply_act(z2, s.act, s.leaky_slope);
      if (saved) {
        saved->z1 = std::move(z1);
        saved->h1 = std::move(h1);
        saved->z2 = std::move(z2);
      }
      cur = std::move(y);
    } else {
      Tensor z1 = s.kind == LayerKind::Conv
                      ? nn::conv2d(cur, params.at(name(i, "w")), params.at(name(i, "b")),
                                   s.stride, s.pad)
                      : nn::conv_transpose2d(cur, params.at(name(i, "w")),
                                             params.at(name(i, "b")), s.stride, s.pad);
      Tensor y = apply_act(z1, s.act, s.leaky_slope);
      if (saved) saved->z1 = std::move(z1);
      cur = std::move(y);
    }
  }
  return cur;
}

Tensor ConvChain::backward(const ParameterSet& params, const ChainCache& cache,
                           const Tensor& dout, GradStore* grads) const {
  if (cache.layers.size() != specs_.size())
    throw ContractViolation("chain cache does not match chain '" + prefix_ + "'");
  Tensor dcur = dout;
  for (std::size_t idx = specs_.size(); idx-- > 0;) {
    const LayerSpec& s = specs_[idx];
    const ChainCache::Layer& saved = cache.layers[idx];
    if (s.kind == LayerKind::Residual) {
      Tensor dz2 = act_backward(saved.z2, dcur, s.act, s.leaky_slope);
      Tensor dh1, dw2, db2;
      nn::conv2d_backward(saved.h1, params.at(name(idx, "w2")), 1, s.pad, dz2, &dh1,
                          grads ? &dw2 : nullptr, grads ? &db2 : nullptr);
      Tensor dz1 = act_backward(saved.z1, dh1, s.act, s.leaky_slope);
      Tensor dx, dw1, db1;
      nn::conv2d_backward(saved.x, params.at(name(idx, "w1")), 1, s.pad, dz1, &dx,
                          grads ? &dw1 : nullptr, grads ? &db1 : nullptr);
      dx.add_scaled(dz2, 1.0);  // identity skip
      if (grads) {
        grads->accumulate(name(idx, "w1"), dw1);
        grads->accumulate(name(idx, "b1"), db1);
        grads->accumulate(name(idx, "w2"), dw2);
        grads->accumulate(name(idx, "b2"), db2);
      }
      dcur = std::move(dx);
    } else {
      Tensor dz1 = act_backward(saved.z1, dcur, s.act, s.leaky_slope);
      Tensor dx, dw, db;
      if (s.kind == LayerKind::Conv) {
        nn::conv2d_backward(saved.x, params.at(name(idx, "w")), s.stride, s.pad, dz1, &dx,
                            grads ? &dw : nullptr, grads ? &db : nullptr);
      } else {
        nn::conv_transpose2d_backward(saved.x, params.at(name(idx, "w")), s.stride, s.pad, dz1,
                                      &dx, grads ? &dw : nullptr, grads ? &db : nullptr);
      }
      if (grads) {
        grads->accumulate(name(idx, "w"), dw);
        grads->accumulate(name(idx, "b"), db);
      }
      dcur = std::move(dx);
    }
  }
  return dcur;
}

}  // namespace lipsync
