#include "lipsync/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "lipsync/errors.hpp"

namespace lipsync {
namespace nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad,
                        const char* what) {
  const std::int64_t out = (in + 2 * pad - k) / stride + 1;
  if (in + 2 * pad < k || out < 1)
    throw ShapeError(std::string(what) + ": input extent " + std::to_string(in) +
                     " too small for kernel " + std::to_string(k));
  return out;
}

void require_image(const Tensor& x, const char* what) {
  if (x.rank() != 4) throw ShapeError(std::string(what) + " expects a rank-4 NHWC tensor, got " +
                                      shape_to_string(x.shape()));
}

}  // namespace

Tensor im2col(const Tensor& x, std::int64_t kh, std::int64_t kw, std::int64_t stride,
              std::int64_t pad) {
  require_image(x, "im2col");
  const std::int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::int64_t oh = out_extent(h, kh, stride, pad, "im2col");
  const std::int64_t ow = out_extent(w, kw, stride, pad, "im2col");

  Tensor cols = Tensor::zeros({n * oh * ow, kh * kw * c});
  double* dst = cols.data();
  const double* src = x.data();
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double* row = dst + (((ni * oh) + oy) * ow + ox) * kh * kw * c;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const std::int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::int64_t ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            const double* px = src + ((ni * h + iy) * w + ix) * c;
            double* cell = row + (ky * kw + kx) * c;
            for (std::int64_t ci = 0; ci < c; ++ci) cell[ci] = px[ci];
          }
        }
      }
  return cols;
}

Tensor col2im(const Tensor& cols, const std::vector<std::int64_t>& image_shape, std::int64_t kh,
              std::int64_t kw, std::int64_t stride, std::int64_t pad) {
  if (image_shape.size() != 4) throw ShapeError("col2im needs a rank-4 target shape");
  const std::int64_t n = image_shape[0], h = image_shape[1], w = image_shape[2],
                     c = image_shape[3];
  const std::int64_t oh = out_extent(h, kh, stride, pad, "col2im");
  const std::int64_t ow = out_extent(w, kw, stride, pad, "col2im");
  cols.require_shape({n * oh * ow, kh * kw * c}, "col2im columns");

  Tensor image = Tensor::zeros(image_shape);
  double* dst = image.data();
  const double* src = cols.data();
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const double* row = src + (((ni * oh) + oy) * ow + ox) * kh * kw * c;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const std::int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::int64_t ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            double* px = dst + ((ni * h + iy) * w + ix) * c;
            const double* cell = row + (ky * kw + kx) * c;
            for (std::int64_t ci = 0; ci < c; ++ci) px[ci] += cell[ci];
          }
        }
      }
  return image;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
              std::int64_t pad) {
  require_image(x, "conv2d");
  if (w.rank() != 4) throw ShapeError("conv2d weight must be (kh, kw, in_ch, out_ch)");
  const std::int64_t kh = w.dim(0), kw = w.dim(1), ci = w.dim(2), co = w.dim(3);
  if (x.dim(3) != ci)
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(3)) + " channels, weight expects " +
                     std::to_string(ci));
  b.require_shape({co}, "conv2d bias");

  const std::int64_t n = x.dim(0);
  const std::int64_t oh = out_extent(x.dim(1), kh, stride, pad, "conv2d");
  const std::int64_t ow = out_extent(x.dim(2), kw, stride, pad, "conv2d");

  const Tensor cols = im2col(x, kh, kw, stride, pad);
  Tensor y = Tensor::zeros({n, oh, ow, co});
  ConstMap cols_m(cols.data(), n * oh * ow, kh * kw * ci);
  ConstMap w_m(w.data(), kh * kw * ci, co);
  MutMap y_m(y.data(), n * oh * ow, co);
  y_m.noalias() = cols_m * w_m;
  for (std::int64_t r = 0; r < n * oh * ow; ++r)
    for (std::int64_t c = 0; c < co; ++c) y[r * co + c] += b[c];
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad,
                     const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
  const std::int64_t kh = w.dim(0), kw = w.dim(1), ci = w.dim(2), co = w.dim(3);
  const std::int64_t n = x.dim(0);
  const std::int64_t oh = out_extent(x.dim(1), kh, stride, pad, "conv2d");
  const std::int64_t ow = out_extent(x.dim(2), kw, stride, pad, "conv2d");
  dy.require_shape({n, oh, ow, co}, "conv2d dy");
  const std::int64_t rows = n * oh * ow;

  if (db) {
    *db = Tensor::zeros({co});
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < co; ++c) (*db)[c] += dy[r * co + c];
  }
  if (dw) {
    const Tensor cols = im2col(x, kh, kw, stride, pad);
    *dw = Tensor::zeros({kh, kw, ci, co});
    ConstMap cols_m(cols.data(), rows, kh * kw * ci);
    ConstMap dy_m(dy.data(), rows, co);
    MutMap dw_m(dw->data(), kh * kw * ci, co);
    dw_m.noalias() = cols_m.transpose() * dy_m;
  }
  if (dx) {
    Tensor dcols = Tensor::zeros({rows, kh * kw * ci});
    ConstMap dy_m(dy.data(), rows, co);
    ConstMap w_m(w.data(), kh * kw * ci, co);
    MutMap dcols_m(dcols.data(), rows, kh * kw * ci);
    dcols_m.noalias() = dy_m * w_m.transpose();
    *dx = col2im(dcols, x.shape(), kh, kw, stride, pad);
  }
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
                        std::int64_t pad) {
  require_image(x, "conv_transpose2d");
  if (w.rank() != 4) throw ShapeError("conv_transpose2d weight must be (kh, kw, out_ch, in_ch)");
  const std::int64_t kh = w.dim(0), kw = w.dim(1), co = w.dim(2), ci = w.dim(3);
  if (x.dim(3) != ci)
    throw ShapeError("conv_transpose2d: input has " + std::to_string(x.dim(3)) +
                     " channels, weight expects " + std::to_string(ci));
  b.require_shape({co}, "conv_transpose2d bias");

  const std::int64_t n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::int64_t out_h = (h - 1) * stride + kh - 2 * pad;
  const std::int64_t out_w = (wd - 1) * stride + kw - 2 * pad;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv_transpose2d: empty output extent");

  Tensor cols = Tensor::zeros({n * h * wd, kh * kw * co});
  ConstMap x_m(x.data(), n * h * wd, ci);
  ConstMap w_m(w.data(), kh * kw * co, ci);
  MutMap cols_m(cols.data(), n * h * wd, kh * kw * co);
  cols_m.noalias() = x_m * w_m.transpose();

  Tensor y = col2im(cols, {n, out_h, out_w, co}, kh, kw, stride, pad);
  for (std::int64_t r = 0; r < n * out_h * out_w; ++r)
    for (std::int64_t c = 0; c < co; ++c) y[r * co + c] += b[c];
  return y;
}

void conv_transpose2d_backward(const Tensor& x, const Tensor& w, std::int64_t stride,
                               std::int64_t pad, const Tensor& dy, Tensor* dx, Tensor* dw,
                               Tensor* db) {
  const std::int64_t kh = w.dim(0), kw = w.dim(1), co = w.dim(2), ci = w.dim(3);
  const std::int64_t n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::int64_t out_h = (h - 1) * stride + kh - 2 * pad;
  const std::int64_t out_w = (wd - 1) * stride + kw - 2 * pad;
  dy.require_shape({n, out_h, out_w, co}, "conv_transpose2d dy");

  if (db) {
    *db = Tensor::zeros({co});
    for (std::int64_t r = 0; r < n * out_h * out_w; ++r)
      for (std::int64_t c = 0; c < co; ++c) (*db)[c] += dy[r * co + c];
  }
  if (dx || dw) {
    const Tensor cols_dy = im2col(dy, kh, kw, stride, pad);  // (n*h*wd, kh*kw*co)
    ConstMap cols_m(cols_dy.data(), n * h * wd, kh * kw * co);
    if (dx) {
      *dx = Tensor::zeros({n, h, wd, ci});
      ConstMap w_m(w.data(), kh * kw * co, ci);
      MutMap dx_m(dx->data(), n * h * wd, ci);
      dx_m.noalias() = cols_m * w_m;
    }
    if (dw) {
      *dw = Tensor::zeros({kh, kw, co, ci});
      ConstMap x_m(x.data(), n * h * wd, ci);
      MutMap dw_m(dw->data(), kh * kw * co, ci);
      dw_m.noalias() = cols_m.transpose() * x_m;
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (std::int64_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0) y[i] = 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  dy.require_shape(x.shape(), "relu dy");
  Tensor dx = dy;
  for (std::int64_t i = 0; i < dx.numel(); ++i)
    if (x[i] <= 0.0) dx[i] = 0.0;
  return dx;
}

Tensor elu(const Tensor& x) {
  Tensor y = x;
  for (std::int64_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0) y[i] = std::expm1(y[i]);
  return y;
}

Tensor elu_backward(const Tensor& x, const Tensor& dy) {
  dy.require_shape(x.shape(), "elu dy");
  Tensor dx = dy;
  for (std::int64_t i = 0; i < dx.numel(); ++i)
    if (x[i] < 0.0) dx[i] *= std::exp(x[i]);
  return dx;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (std::int64_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0) y[i] *= slope;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& dy) {
  dy.require_shape(x.shape(), "leaky_relu dy");
  Tensor dx = dy;
  for (std::int64_t i = 0; i < dx.numel(); ++i)
    if (x[i] < 0.0) dx[i] *= slope;
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
  return y;
}

Tensor sigmoid_backward_from_y(const Tensor& y, const Tensor& dy) {
  dy.require_shape(y.shape(), "sigmoid dy");
  Tensor dx = dy;
  for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
  return dx;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2) throw ShapeError("linear expects (N,K) x and (K,M) w");
  const std::int64_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
  if (w.dim(0) != k)
    throw ShapeError("linear: x has inner dim " + std::to_string(k) + ", w expects " +
                     std::to_string(w.dim(0)));
  b.require_shape({m}, "linear bias");

  Tensor y = Tensor::zeros({n, m});
  ConstMap x_m(x.data(), n, k);
  ConstMap w_m(w.data(), k, m);
  MutMap y_m(y.data(), n, m);
  y_m.noalias() = x_m * w_m;
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < m; ++c) y[r * m + c] += b[c];
  return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                     Tensor* db) {
  const std::int64_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
  dy.require_shape({n, m}, "linear dy");
  ConstMap x_m(x.data(), n, k);
  ConstMap w_m(w.data(), k, m);
  ConstMap dy_m(dy.data(), n, m);
  if (dx) {
    *dx = Tensor::zeros({n, k});
    MutMap dx_m(dx->data(), n, k);
    dx_m.noalias() = dy_m * w_m.transpose();
  }
  if (dw) {
    *dw = Tensor::zeros({k, m});
    MutMap dw_m(dw->data(), k, m);
    dw_m.noalias() = x_m.transpose() * dy_m;
  }
  if (db) {
    *db = Tensor::zeros({m});
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t c = 0; c < m; ++c) (*db)[c] += dy[r * m + c];
  }
}

Tensor global_avg_pool(const Tensor& x) {
  require_image(x, "global_avg_pool");
  const std::int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor y = Tensor::zeros({n, c});
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t p = 0; p < h * w; ++p) {
      const double* px = x.data() + (ni * h * w + p) * c;
      for (std::int64_t ci = 0; ci < c; ++ci) y[ni * c + ci] += px[ci];
    }
  }
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= inv;
  return y;
}

Tensor global_avg_pool_backward(const std::vector<std::int64_t>& x_shape, const Tensor& dy) {
  if (x_shape.size() != 4) throw ShapeError("global_avg_pool_backward needs a rank-4 shape");
  const std::int64_t n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3];
  dy.require_shape({n, c}, "global_avg_pool dy");
  Tensor dx = Tensor::zeros(x_shape);
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t p = 0; p < h * w; ++p) {
      double* px = dx.data() + (ni * h * w + p) * c;
      for (std::int64_t ci = 0; ci < c; ++ci) px[ci] = dy[ni * c + ci] * inv;
    }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_image(a, "concat_channels");
  require_image(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw ShapeError("concat_channels: spatial shapes differ: " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  const std::int64_t rows = a.dim(0) * a.dim(1) * a.dim(2);
  const std::int64_t ca = a.dim(3), cb = b.dim(3);
  Tensor y = Tensor::zeros({a.dim(0), a.dim(1), a.dim(2), ca + cb});
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dst = y.data() + r * (ca + cb);
    const double* pa = a.data() + r * ca;
    const double* pb = b.data() + r * cb;
    for (std::int64_t i = 0; i < ca; ++i) dst[i] = pa[i];
    for (std::int64_t i = 0; i < cb; ++i) dst[ca + i] = pb[i];
  }
  return y;
}

void split_channels_backward(const Tensor& dy, std::int64_t a_channels, Tensor* da, Tensor* db) {
  require_image(dy, "split_channels_backward");
  const std::int64_t c = dy.dim(3);
  if (a_channels < 0 || a_channels > c) throw ShapeError("split point outside channel range");
  const std::int64_t rows = dy.dim(0) * dy.dim(1) * dy.dim(2);
  const std::int64_t cb = c - a_channels;
  if (da) *da = Tensor::zeros({dy.dim(0), dy.dim(1), dy.dim(2), a_channels});
  if (db) *db = Tensor::zeros({dy.dim(0), dy.dim(1), dy.dim(2), cb});
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = dy.data() + r * c;
    if (da) {
      double* pa = da->data() + r * a_channels;
      for (std::int64_t i = 0; i < a_channels; ++i) pa[i] = src[i];
    }
    if (db) {
      double* pb = db->data() + r * cb;
      for (std::int64_t i = 0; i < cb; ++i) pb[i] = src[a_channels + i];
    }
  }
}

Tensor tile_embedding(const Tensor& e, std::int64_t h, std::int64_t w) {
  if (e.rank() != 2) throw ShapeError("tile_embedding expects (N, C)");
  const std::int64_t n = e.dim(0), c = e.dim(1);
  Tensor y = Tensor::zeros({n, h, w, c});
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t p = 0; p < h * w; ++p) {
      double* dst = y.data() + (ni * h * w + p) * c;
      const double* src = e.data() + ni * c;
      for (std::int64_t ci = 0; ci < c; ++ci) dst[ci] = src[ci];
    }
  return y;
}

Tensor tile_embedding_backward(const Tensor& dy) {
  require_image(dy, "tile_embedding_backward");
  const std::int64_t n = dy.dim(0), h = dy.dim(1), w = dy.dim(2), c = dy.dim(3);
  Tensor de = Tensor::zeros({n, c});
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t p = 0; p < h * w; ++p) {
      const double* src = dy.data() + (ni * h * w + p) * c;
      for (std::int64_t ci = 0; ci < c; ++ci) de[ni * c + ci] += src[ci];
    }
  return de;
}

}  // namespace nn
}  // namespace lipsync
