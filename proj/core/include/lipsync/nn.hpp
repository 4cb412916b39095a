#pragma once

#include <cstdint>
#include <vector>

#include "lipsync/tensor.hpp"

namespace lipsync {
namespace nn {

/// All image tensors are NHWC. Convolution weights are (kh, kw, in_ch,
/// out_ch); transposed-convolution weights are (kh, kw, out_ch, in_ch) so a
/// transposed convolution is exactly the adjoint of a convolution with the
/// same array. Backward functions take nullptr for gradients the caller does
/// not need.

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
              std::int64_t pad);
void conv2d_backward(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad,
                     const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db);

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
                        std::int64_t pad);
void conv_transpose2d_backward(const Tensor& x, const Tensor& w, std::int64_t stride,
                               std::int64_t pad, const Tensor& dy, Tensor* dx, Tensor* dw,
                               Tensor* db);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// ELU with alpha = 1: smooth (C1) everywhere, which keeps finite-difference
/// gradient checks well-conditioned; used for hidden layers.
Tensor elu(const Tensor& x);
Tensor elu_backward(const Tensor& x, const Tensor& dy);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
/// Backward in terms of the forward output y = sigmoid(x).
Tensor sigmoid_backward_from_y(const Tensor& y, const Tensor& dy);

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // (N,K)x(K,M)+(M)
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                     Tensor* db);

Tensor global_avg_pool(const Tensor& x);  // (N,H,W,C) -> (N,C)
Tensor global_avg_pool_backward(const std::vector<std::int64_t>& x_shape, const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels_backward(const Tensor& dy, std::int64_t a_channels, Tensor* da, Tensor* db);

Tensor tile_embedding(const Tensor& e, std::int64_t h, std::int64_t w);  // (N,C)->(N,h,w,C)
Tensor tile_embedding_backward(const Tensor& dy);                        // sum over h,w

/// Unfolds conv patches: (N,H,W,C) -> (N*OH*OW, kh*kw*C). Exposed for reuse
/// and benchmarking; conv2d and conv_transpose2d are built on it.
Tensor im2col(const Tensor& x, std::int64_t kh, std::int64_t kw, std::int64_t stride,
              std::int64_t pad);
/// Adjoint of im2col: scatter-adds patches back into an (image_shape) tensor.
Tensor col2im(const Tensor& cols, const std::vector<std::int64_t>& image_shape, std::int64_t kh,
              std::int64_t kw, std::int64_t stride, std::int64_t pad);

}  // namespace nn
}  // namespace lipsync
