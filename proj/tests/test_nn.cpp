#include "lipsync/nn.hpp"

#include <cmath>

#include "doctest.h"
#include "fd_check.hpp"
#include "lipsync/chain.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/rng.hpp"

using namespace lipsync;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Direct six-loop convolution, the oracle for the im2col+GEMM path.
Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
                    std::int64_t pad) {
  const std::int64_t n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::int64_t kh = w.dim(0), kw = w.dim(1), ci = w.dim(2), co = w.dim(3);
  const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y = Tensor::zeros({n, oh, ow, co});
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox)
        for (std::int64_t c = 0; c < co; ++c) {
          double acc = b[c];
          for (std::int64_t ky = 0; ky < kh; ++ky)
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t iy = oy * stride + ky - pad;
              const std::int64_t ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              for (std::int64_t cc = 0; cc < ci; ++cc)
                acc += x.at({ni, iy, ix, cc}) * w.at({ky, kx, cc, c});
            }
          y.at({ni, oy, ox, c}) = acc;
        }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("conv2d matches the naive convolution") {
  Rng rng(1);
  for (auto [stride, pad] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
    Tensor x = random_tensor({2, 6, 5, 3}, rng);
    Tensor w = random_tensor({3, 3, 3, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor fast = nn::conv2d(x, w, b, stride, pad);
    Tensor slow = conv2d_naive(x, w, b, stride, pad);
    REQUIRE(fast.shape() == slow.shape());
    for (std::int64_t i = 0; i < fast.numel(); ++i)
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  Rng rng(2);
  // Same weight buffer: conv reads (kh,kw,ci,co), transpose reads (kh,kw,out,in).
  Tensor w = random_tensor({4, 4, 3, 5}, rng);
  Tensor zero_b_conv = Tensor::zeros({5});
  Tensor zero_b_t = Tensor::zeros({3});
  Tensor x = random_tensor({2, 8, 8, 3}, rng);
  Tensor y = nn::conv2d(x, w, zero_b_conv, 2, 1);
  Tensor u = random_tensor(y.shape(), rng);
  Tensor xt = nn::conv_transpose2d(u, w, zero_b_t, 2, 1);
  REQUIRE(xt.shape() == x.shape());
  CHECK(dot(y, u) == doctest::Approx(dot(x, xt)).epsilon(1e-10));
}

TEST_CASE("conv_transpose2d doubles spatial extent at k4 s2 p1") {
  Rng rng(3);
  Tensor x = random_tensor({1, 4, 6, 2}, rng);
  Tensor w = random_tensor({4, 4, 3, 2}, rng);
  Tensor b = Tensor::zeros({3});
  Tensor y = nn::conv_transpose2d(x, w, b, 2, 1);
  CHECK(y.shape() == std::vector<std::int64_t>{1, 8, 12, 3});
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(4);
  Tensor x = random_tensor({1, 5, 4, 2}, rng);
  Tensor w = random_tensor({3, 3, 2, 3}, rng, 0.5);
  Tensor b = random_tensor({3}, rng, 0.1);
  Tensor proj = random_tensor({1, 3, 2, 3}, rng);  // stride 2, pad 1 output shape

  auto loss = [&] { return dot(nn::conv2d(x, w, b, 2, 1), proj); };
  Tensor dx, dw, db;
  nn::conv2d_backward(x, w, 2, 1, proj, &dx, &dw, &db);

  for (std::int64_t i = 0; i < x.numel(); i += 3) CHECK(fd_check(loss, x[i], dx[i]) < 1e-6);
  for (std::int64_t i = 0; i < w.numel(); i += 5) CHECK(fd_check(loss, w[i], dw[i]) < 1e-6);
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(fd_check(loss, b[i], db[i]) < 1e-6);
}

TEST_CASE("conv_transpose2d backward matches finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({1, 3, 3, 4}, rng);
  Tensor w = random_tensor({4, 4, 2, 4}, rng, 0.5);
  Tensor b = random_tensor({2}, rng, 0.1);
  Tensor proj = random_tensor({1, 6, 6, 2}, rng);

  auto loss = [&] { return dot(nn::conv_transpose2d(x, w, b, 2, 1), proj); };
  Tensor dx, dw, db;
  nn::conv_transpose2d_backward(x, w, 2, 1, proj, &dx, &dw, &db);

  for (std::int64_t i = 0; i < x.numel(); i += 3) CHECK(fd_check(loss, x[i], dx[i]) < 1e-6);
  for (std::int64_t i = 0; i < w.numel(); i += 7) CHECK(fd_check(loss, w[i], dw[i]) < 1e-6);
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(fd_check(loss, b[i], db[i]) < 1e-6);
}

TEST_CASE("linear and pool backward match finite differences") {
  Rng rng(6);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  Tensor b = random_tensor({2}, rng);
  Tensor proj = random_tensor({3, 2}, rng);
  auto loss = [&] { return dot(nn::linear(x, w, b), proj); };
  Tensor dx, dw, db;
  nn::linear_backward(x, w, proj, &dx, &dw, &db);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(fd_check(loss, x[i], dx[i]) < 1e-6);
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(fd_check(loss, w[i], dw[i]) < 1e-6);
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(fd_check(loss, b[i], db[i]) < 1e-6);

  Tensor img = random_tensor({2, 3, 3, 2}, rng);
  Tensor proj2 = random_tensor({2, 2}, rng);
  auto loss2 = [&] { return dot(nn::global_avg_pool(img), proj2); };
  Tensor dimg = nn::global_avg_pool_backward(img.shape(), proj2);
  for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(fd_check(loss2, img[i], dimg[i]) < 1e-6);
}

TEST_CASE("activation backward passes match finite differences") {
  Rng rng(7);
  Tensor x = random_tensor({40}, rng);
  Tensor proj = random_tensor({40}, rng);

  auto check = [&](auto fwd, auto bwd) {
    auto loss = [&] { return dot(fwd(x), proj); };
    Tensor dx = bwd(x, proj);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      if (std::abs(x[i]) < 1e-3) continue;  // skip points at the kink
      CHECK(fd_check(loss, x[i], dx[i]) < 1e-5);
    }
  };
  check([](const Tensor& t) { return nn::relu(t); },
        [](const Tensor& t, const Tensor& dy) { return nn::relu_backward(t, dy); });
  check([](const Tensor& t) { return nn::elu(t); },
        [](const Tensor& t, const Tensor& dy) { return nn::elu_backward(t, dy); });
  check([](const Tensor& t) { return nn::leaky_relu(t, 0.2); },
        [](const Tensor& t, const Tensor& dy) { return nn::leaky_relu_backward(t, 0.2, dy); });
  check([](const Tensor& t) { return nn::sigmoid(t); },
        [](const Tensor& t, const Tensor& dy) {
          return nn::sigmoid_backward_from_y(nn::sigmoid(t), dy);
        });
}

TEST_CASE("concat and tile round-trip their backward passes") {
  Rng rng(8);
  Tensor a = random_tensor({2, 3, 3, 2}, rng);
  Tensor b = random_tensor({2, 3, 3, 4}, rng);
  Tensor y = nn::concat_channels(a, b);
  CHECK(y.shape() == std::vector<std::int64_t>{2, 3, 3, 6});
  CHECK(y.at({1, 2, 0, 1}) == a.at({1, 2, 0, 1}));
  CHECK(y.at({1, 2, 0, 3}) == b.at({1, 2, 0, 1}));
  Tensor da, db;
  nn::split_channels_backward(y, 2, &da, &db);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(da[i] == a[i]);
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(db[i] == b[i]);

  Tensor e = random_tensor({2, 5}, rng);
  Tensor tiled = nn::tile_embedding(e, 3, 4);
  CHECK(tiled.shape() == std::vector<std::int64_t>{2, 3, 4, 5});
  CHECK(tiled.at({1, 2, 3, 4}) == e.at({1, 4}));
  Tensor ones = Tensor::full(tiled.shape(), 1.0);
  Tensor de = nn::tile_embedding_backward(ones);
  for (std::int64_t i = 0; i < de.numel(); ++i) CHECK(de[i] == 12.0);
}

TEST_CASE("shape violations throw ShapeError") {
  Tensor x = Tensor::zeros({1, 4, 4, 3});
  Tensor w = Tensor::zeros({3, 3, 5, 2});  // wrong in_ch
  Tensor b = Tensor::zeros({2});
  CHECK_THROWS_AS(nn::conv2d(x, w, b, 1, 1), ShapeError);
  CHECK_THROWS_AS(nn::linear(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}), b), ShapeError);
  CHECK_THROWS_AS(nn::concat_channels(x, Tensor::zeros({1, 5, 4, 3})), ShapeError);
}

TEST_CASE("chain forward/backward gradient check with residual and transpose layers") {
  Rng rng(9);
  ConvChain chain("t", {
                           conv_spec(2, 4, 3, 2, 1, Act::Elu),
                           residual_spec(4, Act::Elu),
                           convt_spec(4, 3, 4, 2, 1, Act::Elu),
                           conv_spec(3, 2, 3, 1, 1, Act::Sigmoid),
                       });
  ParameterSet params;
  chain.init_params(params, rng);
  Tensor x = random_tensor({2, 6, 6, 2}, rng, 0.5);
  Tensor proj = random_tensor({2, 6, 6, 2}, rng);

  auto loss = [&] {
    ChainCache cache;
    return dot(chain.forward(params, x, &cache), proj);
  };

  ChainCache cache;
  chain.forward(params, x, &cache);
  GradStore grads;
  Tensor dx = chain.backward(params, cache, proj, &grads);

  for (std::int64_t i = 0; i < x.numel(); i += 7) CHECK(fd_check(loss, x[i], dx[i]) < 1e-5);
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    const Tensor& g = grads.at(name);
    for (std::int64_t i = 0; i < p.numel(); i += std::max<std::int64_t>(1, p.numel() / 6))
      CHECK(fd_check(loss, p[i], g[i]) < 1e-5);
  }
}

TEST_CASE("chain rejects inconsistent specs") {
  CHECK_THROWS_AS(ConvChain("bad", {conv_spec(2, 4, 3, 1, 1, Act::Elu),
                                    conv_spec(8, 4, 3, 1, 1, Act::Elu)}),
                  ContractViolation);
  CHECK_THROWS_AS(ConvChain("bad", {LayerSpec{LayerKind::Residual, 2, 3, 3, 1, 1, Act::Elu, 0.2}}),
                  ContractViolation);
}

}  // TEST_SUITE
