#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fd_check.hpp"
#include "lipsync/adam.hpp"
#include "lipsync/checkpoint.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/lip_generator.hpp"
#include "lipsync/rng.hpp"

using namespace lipsync;
namespace fs = std::filesystem;

namespace {

WindowConfig tiny_window() {
  WindowConfig w = WindowConfig::toy();
  w.crop_height = 16;
  w.crop_width = 16;
  w.video_frames = 1;
  w.audio_steps = 3;
  w.mel_channels = 8;
  return w;
}

GeneratorConfig tiny_generator() {
  return GeneratorConfig::for_window(tiny_window(), 4, 2, {4, 8});
}

SyncExpertConfig tiny_expert() {
  return SyncExpertConfig::for_window(tiny_window(), 8, {4, 8});
}

Tensor random_uniform(Rng& rng, const std::vector<std::int64_t>& shape, double lo,
                      double hi) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

struct TinyInputs {
  Tensor reference;
  Tensor prior;
  Tensor audio;
};

TinyInputs tiny_inputs(Rng& rng, std::int64_t m) {
  TinyInputs in;
  in.reference = random_uniform(rng, {m, 16, 16, 3}, 0.0, 1.0);
  Tensor target = random_uniform(rng, {m, 16, 16, 3}, 0.0, 1.0);
  in.prior = mask_lower_half(target);
  in.audio = random_uniform(rng, {m, 3, 8}, -5.0, 0.0);
  return in;
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("reconstruction loss oracles") {
  Tensor a = Tensor::full({2, 4, 4, 3}, 0.5);
  Tensor b = Tensor::zeros({2, 4, 4, 3});
  CHECK(reconstruction_loss(a, a) == 0.0);
  CHECK(reconstruction_loss(a, b) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(reconstruction_loss(b, a) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(reconstruction_loss(a, Tensor::zeros({2, 4, 4, 2})), ShapeError);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_uniform(rng, {3, 5}, -2.0, 2.0);
    Tensor y = random_uniform(rng, {3, 5}, -2.0, 2.0);
    Tensor z = random_uniform(rng, {3, 5}, -2.0, 2.0);
    CHECK(reconstruction_loss(x, z) <=
          reconstruction_loss(x, y) + reconstruction_loss(y, z) + 1e-12);
  }

  // Batch-row permutation leaves the mean unchanged.
  Tensor p1 = random_uniform(rng, {2, 3, 3, 3}, 0.0, 1.0);
  Tensor p2 = random_uniform(rng, {2, 3, 3, 3}, 0.0, 1.0);
  Tensor q1(p1.shape());
  Tensor q2(p2.shape());
  const std::int64_t row = p1.numel() / 2;
  for (int r = 0; r < 2; ++r) {
    for (std::int64_t i = 0; i < row; ++i) {
      q1[((r + 1) % 2) * row + i] = p1[r * row + i];
      q2[((r + 1) % 2) * row + i] = p2[r * row + i];
    }
  }
  CHECK(reconstruction_loss(p1, p2) == doctest::Approx(reconstruction_loss(q1, q2)));

  // Sign gradient against finite differences.
  Tensor g = random_uniform(rng, {6}, -1.0, 1.0);
  Tensor t = random_uniform(rng, {6}, -1.0, 1.0);
  Tensor d = reconstruction_loss_backward(g, t);
  for (std::int64_t i = 0; i < 6; ++i) {
    const auto loss = [&] { return reconstruction_loss(g, t); };
    CHECK(fd_check(loss, g[i], d[i]) < 1e-4);
  }
}

TEST_CASE("fold round trip is exact for all valid shapes") {
  Rng rng(4);
  for (std::int64_t n : {1, 2, 4}) {
    for (std::int64_t tv : {1, 3, 5}) {
      Tensor frames = random_uniform(rng, {n * tv, 16, 12, 3}, 0.0, 1.0);
      Tensor folded = fold_for_expert(frames, tv);
      folded.require_shape({n, 8, 12, 3 * tv}, "folded faces");
      Tensor lower = unfold_from_expert(folded);
      lower.require_shape({n * tv, 8, 12, 3}, "unfolded lower halves");
      for (std::int64_t f = 0; f < n * tv; ++f) {
        for (std::int64_t y = 0; y < 8; ++y) {
          for (std::int64_t x = 0; x < 12; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
              CHECK(lower.at({f, y, x, c}) == frames.at({f, 8 + y, x, c}));
            }
          }
        }
      }
      // Channel order: channel t*3+c holds frame t, color c.
      CHECK(folded.at({0, 3, 5, (tv - 1) * 3 + 2}) == frames.at({tv - 1, 11, 5, 2}));
    }
  }
  CHECK_THROWS_AS(fold_for_expert(Tensor::zeros({5, 16, 16, 3}), 2), ShapeError);
  CHECK_THROWS_AS(fold_for_expert(Tensor::zeros({4, 15, 16, 3}), 2), ShapeError);
  CHECK_THROWS_AS(fold_for_expert(Tensor::zeros({4, 16, 16, 4}), 2), ShapeError);
  CHECK_THROWS_AS(unfold_from_expert(Tensor::zeros({1, 8, 16, 4})), ShapeError);
}

TEST_CASE("fold backward is the exact adjoint") {
  Rng rng(5);
  Tensor frames = random_uniform(rng, {6, 8, 6, 3}, 0.0, 1.0);
  Tensor folded = fold_for_expert(frames, 3);
  Tensor cotangent = random_uniform(rng, folded.shape(), -1.0, 1.0);
  Tensor dframes = fold_for_expert_backward(cotangent, 3, 8);
  double lhs = 0.0;
  for (std::int64_t i = 0; i < folded.numel(); ++i) lhs += folded[i] * cotangent[i];
  double rhs = 0.0;
  for (std::int64_t i = 0; i < frames.numel(); ++i) rhs += frames[i] * dframes[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  // Upper halves receive zero gradient.
  for (std::int64_t f = 0; f < 6; ++f) {
    for (std::int64_t y = 0; y < 4; ++y) {
      for (std::int64_t x = 0; x < 6; ++x) {
        for (std::int64_t c = 0; c < 3; ++c) {
          CHECK(dframes.at({f, y, x, c}) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("generated frames are bounded and frame-independent") {
  const GeneratorConfig cfg = tiny_generator();
  LipGenerator gen(cfg);
  ParameterSet params = gen.init_params(17);
  Rng rng(6);
  TinyInputs in = tiny_inputs(rng, 4);

  Tensor y = gen.generate_frames(params, in.reference, in.prior, in.audio);
  y.require_shape({4, 16, 16, 3}, "generated frames");
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] >= 0.0);
    CHECK(y[i] <= 1.0);
  }

  // Perturbing row 2 of every input changes only output row 2.
  TinyInputs mod = in;
  const std::int64_t fr = 16 * 16 * 3;
  const std::int64_t ar = 3 * 8;
  for (std::int64_t i = 0; i < fr; ++i) {
    mod.reference[2 * fr + i] = 1.0 - mod.reference[2 * fr + i];
    mod.prior[2 * fr + i] = 0.0;
  }
  for (std::int64_t i = 0; i < ar; ++i) mod.audio[2 * ar + i] = -1.0;
  Tensor y2 = gen.generate_frames(params, mod.reference, mod.prior, mod.audio);
  bool row2_changed = false;
  for (std::int64_t r = 0; r < 4; ++r) {
    for (std::int64_t i = 0; i < fr; ++i) {
      if (r == 2) {
        row2_changed = row2_changed || y2[r * fr + i] != y[r * fr + i];
      } else {
        CHECK(y2[r * fr + i] == y[r * fr + i]);
      }
    }
  }
  CHECK(row2_changed);

  CHECK_THROWS_AS(gen.generate_frames(params, in.reference, in.prior,
                                      Tensor::zeros({4, 3, 7})),
                  ShapeError);
  CHECK_THROWS_AS(gen.generate_frames(params, in.reference,
                                      Tensor::zeros({3, 16, 16, 3}), in.audio),
                  ShapeError);
}

TEST_CASE("generator gradients match finite differences") {
  const GeneratorConfig cfg = tiny_generator();
  LipGenerator gen(cfg);
  ParameterSet params = gen.init_params(23);
  Rng rng(7);
  TinyInputs in = tiny_inputs(rng, 2);
  Tensor target = random_uniform(rng, {2, 16, 16, 3}, 0.0, 1.0);

  const auto loss = [&] {
    Tensor y = gen.generate_frames(params, in.reference, in.prior, in.audio);
    return reconstruction_loss(y, target);
  };

  LipGenerator::ForwardCache cache;
  Tensor y = gen.generate_frames(params, in.reference, in.prior, in.audio, &cache);
  Tensor dy = reconstruction_loss_backward(y, target);
  GradStore grads;
  gen.backward(params, cache, dy, &grads);

  // Probe a few random coordinates in every parameter array.
  Rng pick(8);
  for (const auto& name : params.names()) {
    Tensor& arr = params.at(name);
    REQUIRE(grads.contains(name));
    const Tensor& g = grads.at(name);
    for (int probe = 0; probe < 3; ++probe) {
      const std::int64_t i = pick.uniform_int(arr.numel());
      CHECK(fd_check(loss, arr[i], g[i]) < 1e-3);
    }
  }
}

TEST_CASE("sync loss oracles and frozen contract") {
  CHECK(sync_loss_from_probabilities({std::exp(-1.0), std::exp(-1.0)}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sync_loss_from_probabilities({1.0}) < 1e-6);
  CHECK(sync_loss_from_probabilities({1.0}) >= 0.0);
  CHECK(sync_loss_from_probabilities({0.25, 0.5}) ==
        doctest::Approx(0.5 * (-std::log(0.25) - std::log(0.5))).epsilon(1e-12));
  CHECK_THROWS_AS(sync_loss_from_probabilities({}), InputTooShort);

  const SyncExpertConfig ecfg = tiny_expert();
  SyncExpert expert(ecfg);
  ParameterSet eparams = expert.init_params(31);
  Rng rng(9);
  Tensor folded = random_uniform(rng, {2, 8, 16, 3}, 0.0, 1.0);
  Tensor audio = random_uniform(rng, {2, 3, 8}, -5.0, 0.0);

  CHECK_THROWS_AS(expert_sync_loss(expert, eparams, folded, audio), ContractViolation);
  eparams.frozen = true;

  const std::uint64_t before = eparams.checksum();
  Tensor dfolded;
  const double loss = expert_sync_loss(expert, eparams, folded, audio, &dfolded);
  CHECK(loss >= 0.0);
  CHECK(std::isfinite(loss));
  CHECK(eparams.checksum() == before);
  CHECK(dfolded.same_shape(folded));

  // A constant expert (zero weights, all-ones head biases) yields P = 1 on
  // every row, so the loss collapses to the clamp residual.
  ParameterSet constant = expert.init_params(0);
  for (const auto& name : constant.names()) {
    Tensor& t = constant.at(name);
    const bool is_head_bias = name.find(".fc.b") != std::string::npos;
    t.fill(is_head_bias ? 1.0 : 0.0);
  }
  constant.frozen = true;
  CHECK(expert_sync_loss(expert, constant, folded, audio) < 1e-6);

  CHECK_THROWS_AS(
      expert_sync_loss(expert, eparams, folded, Tensor::zeros({3, 3, 8})),
      ShapeError);
}

TEST_CASE("sync loss gradient w.r.t. folded faces matches finite differences") {
  const SyncExpertConfig ecfg = tiny_expert();
  SyncExpert expert(ecfg);
  ParameterSet eparams = expert.init_params(33);
  eparams.frozen = true;
  Rng rng(10);
  Tensor folded = random_uniform(rng, {2, 8, 16, 3}, 0.0, 1.0);
  Tensor audio = random_uniform(rng, {2, 3, 8}, -5.0, 0.0);

  Tensor dfolded;
  expert_sync_loss(expert, eparams, folded, audio, &dfolded);
  const auto loss = [&] { return expert_sync_loss(expert, eparams, folded, audio); };
  Rng pick(11);
  for (int probe = 0; probe < 12; ++probe) {
    const std::int64_t i = pick.uniform_int(folded.numel());
    CHECK(fd_check(loss, folded[i], dfolded[i]) < 1e-3);
  }
}

TEST_CASE("sync loss decreases when overfitting one batch") {
  const GeneratorConfig cfg = tiny_generator();
  const SyncExpertConfig ecfg = tiny_expert();
  LipGenerator gen(cfg);
  SyncExpert expert(ecfg);
  ParameterSet gparams = gen.init_params(41);
  ParameterSet eparams = expert.init_params(43);
  eparams.frozen = true;

  Rng rng(12);
  TinyInputs in = tiny_inputs(rng, 4);
  Adam opt(1e-4, 0.5, 0.999);

  std::vector<double> history;
  for (int step = 0; step < 200; ++step) {
    LipGenerator::ForwardCache cache;
    Tensor y = gen.generate_frames(gparams, in.reference, in.prior, in.audio, &cache);
    Tensor folded = fold_for_expert(y, cfg.video_frames);
    Tensor dfolded;
    const double e_sync =
        expert_sync_loss(expert, eparams, folded, in.audio, &dfolded);
    history.push_back(e_sync);
    Tensor dy = fold_for_expert_backward(dfolded, cfg.video_frames, cfg.crop_height);
    GradStore grads;
    gen.backward(gparams, cache, dy, &grads);
    opt.step(gparams, grads);
  }

  // Smooth with window 20, then require a monotone decrease.
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 20 <= history.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = i; j < i + 20; ++j) sum += history[j];
    smooth.push_back(sum / 20.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) {
    CHECK(smooth[i] <= smooth[i - 1] + 1e-9);
  }
  CHECK(smooth.back() < smooth.front());
}

TEST_CASE("typed generator checkpoints") {
  const fs::path path = fs::temp_directory_path() / "gen_ckpt.lsa";
  const GeneratorConfig cfg = tiny_generator();
  LipGenerator gen(cfg);
  ParameterSet params = gen.init_params(51);
  params.step_count = 9;
  save_generator(params, cfg, path.string());

  const auto [loaded_cfg, loaded] = load_generator(path.string());
  CHECK(loaded_cfg.base_width == cfg.base_width);
  CHECK(loaded_cfg.scales == cfg.scales);
  CHECK(loaded.checksum() == params.checksum());
  CHECK(loaded.step_count == 9);

  CHECK_NOTHROW(require_window_match(loaded_cfg, tiny_window()));
  CHECK_THROWS_AS(require_window_match(loaded_cfg, WindowConfig::toy()), ConfigMismatch);

  save_checkpoint(params, "sync_expert", cfg.to_json(), path.string());
  CHECK_THROWS_AS(load_generator(path.string()), ConfigMismatch);
  fs::remove(path);
}

TEST_CASE("generator config validation") {
  GeneratorConfig cfg = tiny_generator();
  cfg.scales = 4;  // 16 >> 4 = 1: bottleneck collapses
  CHECK_THROWS_AS(cfg.validate(), ConfigMismatch);
  cfg = tiny_generator();
  cfg.crop_width = 18;  // not divisible by 2^scales
  CHECK_THROWS_AS(cfg.validate(), ConfigMismatch);
  cfg = tiny_generator();
  cfg.audio_widths.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigMismatch);

  const std::string json = GeneratorConfig::toy().to_json();
  CHECK(GeneratorConfig::from_json(json).to_json() == json);
  CHECK_THROWS_AS(GeneratorConfig::from_json("{}"), ConfigMismatch);

  CHECK(GeneratorConfig::toy().encoder_widths() ==
        std::vector<std::int64_t>{8, 16, 32, 64});
  CHECK(GeneratorConfig::defaults().encoder_widths() ==
        std::vector<std::int64_t>{32, 64, 128, 256, 256});
}

}  // TEST_SUITE
