#include "lipsync/lip_generator.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "lipsync/checkpoint.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/nn.hpp"

namespace lipsync {

using namespace nn;

namespace {

using nlohmann::json;

void accumulate_into(Tensor& dst, const Tensor& add) {
  if (dst.empty()) {
    dst = add;
  } else {
    dst.add_scaled(add, 1.0);
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (base_width < 2) throw ConfigMismatch("generator base_width must be >= 2");
  if (scales < 1) throw ConfigMismatch("generator needs at least one scale");
  const std::int64_t factor = std::int64_t{1} << scales;
  if (crop_height % factor != 0 || crop_width % factor != 0) {
    throw ConfigMismatch("generator crop must be divisible by 2^scales");
  }
  if (crop_height / factor < 2 || crop_width / factor < 2) {
    throw ConfigMismatch("generator bottleneck would collapse below 2x2");
  }
  if (audio_widths.empty()) {
    throw ConfigMismatch("generator needs at least one audio width");
  }
  for (auto w : audio_widths) {
    if (w < 1) throw ConfigMismatch("generator audio widths must be positive");
  }
  if (video_frames < 1) throw ConfigMismatch("generator video_frames must be >= 1");
  if (audio_steps < 1) throw ConfigMismatch("generator audio_steps must be >= 1");
  if (mel_channels < 1) throw ConfigMismatch("generator mel_channels must be >= 1");
}

std::string GeneratorConfig::to_json() const {
  json j;
  j["crop_height"] = crop_height;
  j["crop_width"] = crop_width;
  j["video_frames"] = video_frames;
  j["audio_steps"] = audio_steps;
  j["mel_channels"] = mel_channels;
  j["base_width"] = base_width;
  j["scales"] = scales;
  j["audio_widths"] = audio_widths;
  j["skip_connections"] = skip_connections;
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigMismatch("generator config is not valid JSON: " + std::string(e.what()));
  }
  GeneratorConfig cfg;
  try {
    cfg.crop_height = j.at("crop_height").get<std::int64_t>();
    cfg.crop_width = j.at("crop_width").get<std::int64_t>();
    cfg.video_frames = j.at("video_frames").get<std::int64_t>();
    cfg.audio_steps = j.at("audio_steps").get<std::int64_t>();
    cfg.mel_channels = j.at("mel_channels").get<std::int64_t>();
    cfg.base_width = j.at("base_width").get<std::int64_t>();
    cfg.scales = j.at("scales").get<std::int64_t>();
    cfg.audio_widths = j.at("audio_widths").get<std::vector<std::int64_t>>();
    cfg.skip_connections = j.at("skip_connections").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigMismatch("generator config is missing fields: " + std::string(e.what()));
  }
  return cfg;
}

GeneratorConfig GeneratorConfig::for_window(const WindowConfig& w,
                                            std::int64_t base_width,
                                            std::int64_t scales,
                                            std::vector<std::int64_t> audio_widths,
                                            bool skip_connections) {
  GeneratorConfig cfg;
  cfg.crop_height = w.crop_height;
  cfg.crop_width = w.crop_width;
  cfg.video_frames = w.video_frames;
  cfg.audio_steps = w.audio_steps;
  cfg.mel_channels = w.mel_channels;
  cfg.base_width = base_width;
  cfg.scales = scales;
  cfg.audio_widths = std::move(audio_widths);
  cfg.skip_connections = skip_connections;
  return cfg;
}

GeneratorConfig GeneratorConfig::defaults() {
  return for_window(WindowConfig::defaults(), 32, 4, {32, 64, 128});
}

GeneratorConfig GeneratorConfig::toy() {
  return for_window(WindowConfig::toy(), 8, 3, {8, 16, 32});
}

std::vector<std::int64_t> GeneratorConfig::encoder_widths() const {
  std::vector<std::int64_t> widths;
  widths.reserve(static_cast<std::size_t>(scales) + 1);
  for (std::int64_t i = 0; i <= scales; ++i) {
    widths.push_back(base_width * std::min<std::int64_t>(std::int64_t{1} << i, 8));
  }
  return widths;
}

void require_window_match(const GeneratorConfig& cfg, const WindowConfig& w) {
  auto fail = [](const std::string& field, std::int64_t have, std::int64_t want) {
    throw ConfigMismatch("generator " + field + "=" + std::to_string(have) +
                         " does not match window config " + field + "=" +
                         std::to_string(want));
  };
  if (cfg.video_frames != w.video_frames) fail("video_frames", cfg.video_frames, w.video_frames);
  if (cfg.crop_height != w.crop_height) fail("crop_height", cfg.crop_height, w.crop_height);
  if (cfg.crop_width != w.crop_width) fail("crop_width", cfg.crop_width, w.crop_width);
  if (cfg.audio_steps != w.audio_steps) fail("audio_steps", cfg.audio_steps, w.audio_steps);
  if (cfg.mel_channels != w.mel_channels) fail("mel_channels", cfg.mel_channels, w.mel_channels);
}

LipGenerator::LipGenerator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto widths = cfg_.encoder_widths();
  const std::size_t scales = static_cast<std::size_t>(cfg_.scales);

  enc_.reserve(scales + 1);
  enc_.emplace_back("gen.enc0",
                    std::vector<LayerSpec>{conv_spec(6, widths[0], 3, 1, 1, Act::Elu)});
  for (std::size_t i = 1; i <= scales; ++i) {
    enc_.emplace_back(
        "gen.enc" + std::to_string(i),
        std::vector<LayerSpec>{conv_spec(widths[i - 1], widths[i], 3, 2, 1, Act::Elu),
                               conv_spec(widths[i], widths[i], 3, 1, 1, Act::Elu)});
  }

  std::vector<LayerSpec> aud_specs;
  aud_specs.push_back(conv_spec(1, cfg_.audio_widths.front(), 3, 2, 1, Act::Elu));
  for (std::size_t j = 1; j < cfg_.audio_widths.size(); ++j) {
    aud_specs.push_back(
        conv_spec(cfg_.audio_widths[j - 1], cfg_.audio_widths[j], 3, 2, 1, Act::Elu));
  }
  aud_ = ConvChain("gen.aud", std::move(aud_specs));

  const std::int64_t deep = widths.back();
  bottleneck_ = ConvChain(
      "gen.bott", std::vector<LayerSpec>{conv_spec(2 * deep, deep, 3, 1, 1, Act::Elu)});

  dec_up_.reserve(scales);
  dec_ref_.reserve(scales);
  for (std::int64_t depth = cfg_.scales; depth >= 1; --depth) {
    const auto d = static_cast<std::size_t>(depth);
    const std::string tag = "gen.dec" + std::to_string(depth);
    dec_up_.emplace_back(
        tag + ".up",
        std::vector<LayerSpec>{convt_spec(widths[d], widths[d - 1], 4, 2, 1, Act::Elu)});
    const std::int64_t ref_in =
        cfg_.skip_connections ? 2 * widths[d - 1] : widths[d - 1];
    dec_ref_.emplace_back(
        tag + ".ref",
        std::vector<LayerSpec>{conv_spec(ref_in, widths[d - 1], 3, 1, 1, Act::Elu)});
  }

  out_ = ConvChain("gen.out", std::vector<LayerSpec>{conv_spec(widths[0], 3, 3, 1, 1,
                                                               Act::Sigmoid)});
}

ParameterSet LipGenerator::init_params(std::uint64_t seed) const {
  ParameterSet params;
  Rng rng(seed);
  for (const auto& chain : enc_) chain.init_params(params, rng);
  aud_.init_params(params, rng);
  params.insert("gen.aud.fc.w",
                he_matrix(aud_.out_channels(), cfg_.encoder_widths().back(), rng));
  params.insert("gen.aud.fc.b", Tensor::zeros({cfg_.encoder_widths().back()}));
  bottleneck_.init_params(params, rng);
  for (std::size_t i = 0; i < dec_up_.size(); ++i) {
    dec_up_[i].init_params(params, rng);
    dec_ref_[i].init_params(params, rng);
  }
  out_.init_params(params, rng);
  return params;
}

Tensor LipGenerator::generate_frames(const ParameterSet& params, const Tensor& reference,
                                     const Tensor& prior, const Tensor& audio,
                                     ForwardCache* cache) const {
  reference.require_shape({-1, cfg_.crop_height, cfg_.crop_width, 3},
                          "generator reference frames");
  prior.require_shape(reference.shape(), "generator pose prior");
  const std::int64_t m = reference.dim(0);
  audio.require_shape({m, cfg_.audio_steps, cfg_.mel_channels}, "generator audio");

  const std::size_t scales = static_cast<std::size_t>(cfg_.scales);
  if (cache != nullptr) {
    cache->enc.assign(scales + 1, ChainCache{});
    cache->dec_up.assign(scales, ChainCache{});
    cache->dec_ref.assign(scales, ChainCache{});
    cache->enc_out.assign(scales + 1, Tensor{});
  }

  Tensor x = concat_channels(reference, prior);
  std::vector<Tensor> enc_out(scales + 1);
  enc_out[0] = enc_[0].forward(params, x, cache ? &cache->enc[0] : nullptr);
  for (std::size_t i = 1; i <= scales; ++i) {
    enc_out[i] = enc_[i].forward(params, enc_out[i - 1], cache ? &cache->enc[i] : nullptr);
  }

  Tensor a4 = audio.reshaped({m, cfg_.audio_steps, cfg_.mel_channels, 1});
  Tensor af = aud_.forward(params, a4, cache ? &cache->aud : nullptr);
  Tensor ap = global_avg_pool(af);
  Tensor az = linear(ap, params.at("gen.aud.fc.w"), params.at("gen.aud.fc.b"));
  Tensor ae = apply_act(az, Act::Elu);
  if (cache != nullptr) {
    cache->aud_out = af;
    cache->aud_pooled = ap;
    cache->aud_z = az;
  }

  const std::int64_t bh = cfg_.crop_height >> cfg_.scales;
  const std::int64_t bw = cfg_.crop_width >> cfg_.scales;
  Tensor tiled = tile_embedding(ae, bh, bw);
  Tensor bott_in = concat_channels(enc_out[scales], tiled);
  Tensor cur = bottleneck_.forward(params, bott_in, cache ? &cache->bottleneck : nullptr);

  for (std::size_t idx = 0; idx < scales; ++idx) {
    const std::size_t depth = scales - idx;
    Tensor up = dec_up_[idx].forward(params, cur, cache ? &cache->dec_up[idx] : nullptr);
    Tensor ref_in =
        cfg_.skip_connections ? concat_channels(up, enc_out[depth - 1]) : std::move(up);
    cur = dec_ref_[idx].forward(params, ref_in, cache ? &cache->dec_ref[idx] : nullptr);
  }

  Tensor y = out_.forward(params, cur, cache ? &cache->out : nullptr);
  if (cache != nullptr) cache->enc_out = std::move(enc_out);
  return y;
}

void LipGenerator::backward(const ParameterSet& params, const ForwardCache& cache,
                            const Tensor& dframes, GradStore* grads) const {
  const std::size_t scales = static_cast<std::size_t>(cfg_.scales);
  const auto widths = cfg_.encoder_widths();

  Tensor dcur = out_.backward(params, cache.out, dframes, grads);

  std::vector<Tensor> denc(scales + 1);
  for (std::size_t rev = 0; rev < scales; ++rev) {
    const std::size_t idx = scales - 1 - rev;  // decoder stage, deepest first
    const std::size_t depth = scales - idx;
    Tensor dref_in = dec_ref_[idx].backward(params, cache.dec_ref[idx], dcur, grads);
    Tensor dup;
    if (cfg_.skip_connections) {
      Tensor dskip;
      split_channels_backward(dref_in, widths[depth - 1], &dup, &dskip);
      accumulate_into(denc[depth - 1], dskip);
    } else {
      dup = std::move(dref_in);
    }
    dcur = dec_up_[idx].backward(params, cache.dec_up[idx], dup, grads);
  }

  Tensor dbott_in = bottleneck_.backward(params, cache.bottleneck, dcur, grads);
  Tensor ddeep;
  Tensor dtiled;
  split_channels_backward(dbott_in, widths.back(), &ddeep, &dtiled);
  accumulate_into(denc[scales], ddeep);

  Tensor dae = tile_embedding_backward(dtiled);
  Tensor daz = act_backward(cache.aud_z, dae, Act::Elu);
  Tensor dap;
  Tensor dwfc;
  Tensor dbfc;
  linear_backward(cache.aud_pooled, params.at("gen.aud.fc.w"), daz, &dap,
                  grads != nullptr ? &dwfc : nullptr,
                  grads != nullptr ? &dbfc : nullptr);
  if (grads != nullptr) {
    grads->accumulate("gen.aud.fc.w", dwfc);
    grads->accumulate("gen.aud.fc.b", dbfc);
  }
  Tensor daf = global_avg_pool_backward(cache.aud_out.shape(), dap);
  aud_.backward(params, cache.aud, daf, grads);

  for (std::size_t i = scales; i >= 1; --i) {
    Tensor dprev = enc_[i].backward(params, cache.enc[i], denc[i], grads);
    accumulate_into(denc[i - 1], dprev);
  }
  enc_[0].backward(params, cache.enc[0], denc[0], grads);
}

double reconstruction_loss(const Tensor& generated, const Tensor& target) {
  if (!generated.same_shape(target)) {
    throw ShapeError("reconstruction_loss shape mismatch: " +
                     shape_to_string(generated.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  if (generated.numel() == 0) throw ShapeError("reconstruction_loss on empty tensors");
  double total = 0.0;
  for (std::int64_t i = 0; i < generated.numel(); ++i) {
    total += std::abs(generated[i] - target[i]);
  }
  return total / static_cast<double>(generated.numel());
}

Tensor reconstruction_loss_backward(const Tensor& generated, const Tensor& target) {
  if (!generated.same_shape(target)) {
    throw ShapeError("reconstruction_loss_backward shape mismatch");
  }
  Tensor d(generated.shape());
  const double inv = 1.0 / static_cast<double>(generated.numel());
  for (std::int64_t i = 0; i < generated.numel(); ++i) {
    const double diff = generated[i] - target[i];
    d[i] = diff > 0.0 ? inv : (diff < 0.0 ? -inv : 0.0);
  }
  return d;
}

Tensor fold_for_expert(const Tensor& frames, std::int64_t tv) {
  if (tv < 1) throw ContractViolation("fold_for_expert needs tv >= 1");
  if (frames.rank() != 4 || frames.dim(3) != 3) {
    throw ShapeError("fold_for_expert expects (M, H, W, 3), got " +
                     shape_to_string(frames.shape()));
  }
  const std::int64_t m = frames.dim(0);
  const std::int64_t h = frames.dim(1);
  const std::int64_t w = frames.dim(2);
  if (m % tv != 0) {
    throw ShapeError("fold_for_expert batch " + std::to_string(m) +
                     " is not divisible by tv=" + std::to_string(tv));
  }
  if (h % 2 != 0) throw ShapeError("fold_for_expert needs an even frame height");
  const std::int64_t n = m / tv;
  const std::int64_t hh = h / 2;
  Tensor out({n, hh, w, 3 * tv});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t t = 0; t < tv; ++t) {
      const double* src = frames.storage().data() + ((b * tv + t) * h + hh) * w * 3;
      double* dst = out.data() + b * hh * w * 3 * tv;
      for (std::int64_t p = 0; p < hh * w; ++p) {
        for (std::int64_t c = 0; c < 3; ++c) {
          dst[p * 3 * tv + t * 3 + c] = src[p * 3 + c];
        }
      }
    }
  }
  return out;
}

Tensor unfold_from_expert(const Tensor& folded) {
  if (folded.rank() != 4 || folded.dim(3) % 3 != 0) {
    throw ShapeError("unfold_from_expert expects (N, H/2, W, 3*Tv), got " +
                     shape_to_string(folded.shape()));
  }
  const std::int64_t n = folded.dim(0);
  const std::int64_t hh = folded.dim(1);
  const std::int64_t w = folded.dim(2);
  const std::int64_t tv = folded.dim(3) / 3;
  Tensor out({n * tv, hh, w, 3});
  for (std::int64_t b = 0; b < n; ++b) {
    const double* src = folded.storage().data() + b * hh * w * 3 * tv;
    for (std::int64_t t = 0; t < tv; ++t) {
      double* dst = out.data() + (b * tv + t) * hh * w * 3;
      for (std::int64_t p = 0; p < hh * w; ++p) {
        for (std::int64_t c = 0; c < 3; ++c) {
          dst[p * 3 + c] = src[p * 3 * tv + t * 3 + c];
        }
      }
    }
  }
  return out;
}

Tensor fold_for_expert_backward(const Tensor& dfolded, std::int64_t tv,
                                std::int64_t height) {
  if (dfolded.rank() != 4 || dfolded.dim(3) != 3 * tv) {
    throw ShapeError("fold_for_expert_backward expects (N, H/2, W, 3*Tv)");
  }
  const std::int64_t n = dfolded.dim(0);
  const std::int64_t hh = dfolded.dim(1);
  const std::int64_t w = dfolded.dim(2);
  if (height != 2 * hh) {
    throw ShapeError("fold_for_expert_backward height mismatch");
  }
  Tensor dframes = Tensor::zeros({n * tv, height, w, 3});
  for (std::int64_t b = 0; b < n; ++b) {
    const double* src = dfolded.storage().data() + b * hh * w * 3 * tv;
    for (std::int64_t t = 0; t < tv; ++t) {
      double* dst = dframes.data() + ((b * tv + t) * height + hh) * w * 3;
      for (std::int64_t p = 0; p < hh * w; ++p) {
        for (std::int64_t c = 0; c < 3; ++c) {
          dst[p * 3 + c] = src[p * 3 * tv + t * 3 + c];
        }
      }
    }
  }
  return dframes;
}

double sync_loss_from_probabilities(const std::vector<double>& probs) {
  if (probs.empty()) throw InputTooShort("sync loss needs at least one probability");
  double total = 0.0;
  for (double p : probs) {
    total += -std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp));
  }
  return total / static_cast<double>(probs.size());
}

double expert_sync_loss(const SyncExpert& expert, const ParameterSet& expert_params,
                        const Tensor& folded_faces, const Tensor& audio_windows,
                        Tensor* dfolded) {
  if (!expert_params.frozen) {
    throw ContractViolation("expert_sync_loss requires a frozen expert");
  }
  if (folded_faces.dim(0) != audio_windows.dim(0)) {
    throw ShapeError("expert_sync_loss needs one audio window per face group");
  }
  const std::int64_t n = folded_faces.dim(0);

  SyncExpert::EncodeCache face_cache;
  Tensor V = expert.encode_face_window(expert_params, folded_faces,
                                       dfolded != nullptr ? &face_cache : nullptr);
  Tensor S = expert.encode_audio_window(expert_params, audio_windows);

  const double eps = expert.config().eps;
  std::vector<double> probs(static_cast<std::size_t>(n));
  const std::int64_t e = V.dim(1);
  Tensor v({e});
  Tensor s({e});
  Tensor dV = dfolded != nullptr ? Tensor::zeros(V.shape()) : Tensor{};
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t k = 0; k < e; ++k) {
      v[k] = V.at({i, k});
      s[k] = S.at({i, k});
    }
    const double p = sync_probability(v, s, eps);
    probs[static_cast<std::size_t>(i)] = p;
    if (dfolded != nullptr && p > kProbClamp && p < 1.0 - kProbClamp) {
      const double dp = -1.0 / (p * static_cast<double>(n));
      Tensor dv;
      sync_probability_backward(v, s, eps, dp, &dv, nullptr);
      for (std::int64_t k = 0; k < e; ++k) dV.at({i, k}) += dv[k];
    }
  }
  if (dfolded != nullptr) {
    *dfolded = expert.face_backward(expert_params, face_cache, dV, nullptr);
  }
  return sync_loss_from_probabilities(probs);
}

void save_generator(const ParameterSet& params, const GeneratorConfig& cfg,
                    const std::string& path) {
  cfg.validate();
  save_checkpoint(params, "generator", cfg.to_json(), path);
}

std::pair<GeneratorConfig, ParameterSet> load_generator(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path, "generator");
  GeneratorConfig cfg = GeneratorConfig::from_json(ckpt.config_json);
  cfg.validate();
  LipGenerator model(cfg);
  const ParameterSet expected = model.init_params(0);
  if (expected.names() != ckpt.params.names()) {
    throw ConfigMismatch("checkpoint '" + path +
                         "' parameter names do not match its config");
  }
  for (const auto& name : expected.names()) {
    if (!expected.at(name).same_shape(ckpt.params.at(name))) {
      throw ConfigMismatch("checkpoint '" + path + "' array '" + name +
                           "' has shape " +
                           shape_to_string(ckpt.params.at(name).shape()) +
                           "; config implies " +
                           shape_to_string(expected.at(name).shape()));
    }
  }
  return {std::move(cfg), std::move(ckpt.params)};
}

}  // namespace lipsync
