#include "lipsync/sync_expert.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>

#include "lipsync/adam.hpp"
#include "lipsync/checkpoint.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/nn.hpp"

namespace lipsync {

using namespace nn;

namespace {

using nlohmann::json;

std::vector<LayerSpec> tower_specs(std::int64_t in_ch,
                                   const std::vector<std::int64_t>& widths,
                                   bool use_residual) {
  std::vector<LayerSpec> specs;
  specs.push_back(conv_spec(in_ch, widths.front(), 3, 2, 1, Act::Elu));
  for (std::size_t i = 1; i < widths.size(); ++i) {
    if (use_residual) specs.push_back(residual_spec(widths[i - 1], Act::Elu));
    specs.push_back(conv_spec(widths[i - 1], widths[i], 3, 2, 1, Act::Elu));
  }
  if (use_residual) specs.push_back(residual_spec(widths.back(), Act::Elu));
  return specs;
}

Tensor take_row(const Tensor& m, std::int64_t row) {
  const std::int64_t cols = m.dim(1);
  Tensor out({cols});
  std::memcpy(out.data(), m.storage().data() + row * cols,
              static_cast<std::size_t>(cols) * sizeof(double));
  return out;
}

void add_row(Tensor* m, std::int64_t row, const Tensor& values) {
  const std::int64_t cols = m->dim(1);
  double* dst = m->data() + row * cols;
  for (std::int64_t i = 0; i < cols; ++i) dst[i] += values[i];
}

}  // namespace

void SyncExpertConfig::validate() const {
  if (embed_dim < 8) throw ConfigMismatch("expert embed_dim must be >= 8");
  if (eps <= 0.0) throw ConfigMismatch("expert eps must be positive");
  if (!color_input) throw ConfigMismatch("expert requires color input");
  if (widths.empty()) throw ConfigMismatch("expert needs at least one stage width");
  for (auto w : widths) {
    if (w < 1) throw ConfigMismatch("expert stage widths must be positive");
  }
  if (video_frames < 1) throw ConfigMismatch("expert video_frames must be >= 1");
  if (crop_height < 2 || crop_height % 2 != 0) {
    throw ConfigMismatch("expert crop_height must be even and positive");
  }
  if (crop_width < 1) throw ConfigMismatch("expert crop_width must be positive");
  if (audio_steps < 1) throw ConfigMismatch("expert audio_steps must be >= 1");
  if (mel_channels < 1) throw ConfigMismatch("expert mel_channels must be >= 1");
}

std::string SyncExpertConfig::to_json() const {
  json j;
  j["embed_dim"] = embed_dim;
  j["video_frames"] = video_frames;
  j["crop_height"] = crop_height;
  j["crop_width"] = crop_width;
  j["audio_steps"] = audio_steps;
  j["mel_channels"] = mel_channels;
  j["widths"] = widths;
  j["eps"] = eps;
  j["use_residual"] = use_residual;
  j["color_input"] = color_input;
  return j.dump();
}

SyncExpertConfig SyncExpertConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigMismatch("expert config is not valid JSON: " + std::string(e.what()));
  }
  SyncExpertConfig cfg;
  try {
    cfg.embed_dim = j.at("embed_dim").get<std::int64_t>();
    cfg.video_frames = j.at("video_frames").get<std::int64_t>();
    cfg.crop_height = j.at("crop_height").get<std::int64_t>();
    cfg.crop_width = j.at("crop_width").get<std::int64_t>();
    cfg.audio_steps = j.at("audio_steps").get<std::int64_t>();
    cfg.mel_channels = j.at("mel_channels").get<std::int64_t>();
    cfg.widths = j.at("widths").get<std::vector<std::int64_t>>();
    cfg.eps = j.at("eps").get<double>();
    cfg.use_residual = j.at("use_residual").get<bool>();
    cfg.color_input = j.at("color_input").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigMismatch("expert config is missing fields: " + std::string(e.what()));
  }
  return cfg;
}

SyncExpertConfig SyncExpertConfig::for_window(const WindowConfig& w,
                                              std::int64_t embed_dim,
                                              std::vector<std::int64_t> widths,
                                              bool use_residual) {
  SyncExpertConfig cfg;
  cfg.embed_dim = embed_dim;
  cfg.video_frames = w.video_frames;
  cfg.crop_height = w.crop_height;
  cfg.crop_width = w.crop_width;
  cfg.audio_steps = w.audio_steps;
  cfg.mel_channels = w.mel_channels;
  cfg.widths = std::move(widths);
  cfg.use_residual = use_residual;
  return cfg;
}

SyncExpertConfig SyncExpertConfig::defaults() {
  return for_window(WindowConfig::defaults(), 512, {32, 64, 128, 256, 512});
}

SyncExpertConfig SyncExpertConfig::toy() {
  return for_window(WindowConfig::toy(), 32, {8, 16, 32});
}

void require_window_match(const SyncExpertConfig& cfg, const WindowConfig& w) {
  auto fail = [](const std::string& field, std::int64_t have, std::int64_t want) {
    throw ConfigMismatch("expert " + field + "=" + std::to_string(have) +
                         " does not match window config " + field + "=" +
                         std::to_string(want));
  };
  if (cfg.video_frames != w.video_frames) fail("video_frames", cfg.video_frames, w.video_frames);
  if (cfg.crop_height != w.crop_height) fail("crop_height", cfg.crop_height, w.crop_height);
  if (cfg.crop_width != w.crop_width) fail("crop_width", cfg.crop_width, w.crop_width);
  if (cfg.audio_steps != w.audio_steps) fail("audio_steps", cfg.audio_steps, w.audio_steps);
  if (cfg.mel_channels != w.mel_channels) fail("mel_channels", cfg.mel_channels, w.mel_channels);
}

SyncExpert::SyncExpert(SyncExpertConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  face_ = ConvChain("face", tower_specs(3 * cfg_.video_frames, cfg_.widths,
                                        cfg_.use_residual));
  audio_ = ConvChain("audio", tower_specs(1, cfg_.widths, cfg_.use_residual));
}

ParameterSet SyncExpert::init_params(std::uint64_t seed) const {
  ParameterSet params;
  Rng rng(seed);
  face_.init_params(params, rng);
  audio_.init_params(params, rng);
  params.insert("face.fc.w", he_matrix(face_.out_channels(), cfg_.embed_dim, rng));
  params.insert("face.fc.b", Tensor::zeros({cfg_.embed_dim}));
  params.insert("audio.fc.w", he_matrix(audio_.out_channels(), cfg_.embed_dim, rng));
  params.insert("audio.fc.b", Tensor::zeros({cfg_.embed_dim}));
  return params;
}

Tensor SyncExpert::encode(const ConvChain& chain, const std::string& head,
                          const ParameterSet& params, const Tensor& x,
                          EncodeCache* cache) const {
  Tensor y = chain.forward(params, x, cache ? &cache->chain : nullptr);
  Tensor pooled = global_avg_pool(y);
  Tensor z = linear(pooled, params.at(head + ".w"), params.at(head + ".b"));
  Tensor embed = relu(z);
  if (cache != nullptr) {
    cache->tower_in = x;
    cache->chain_out = std::move(y);
    cache->pooled = std::move(pooled);
    cache->z = std::move(z);
  }
  return embed;
}

Tensor SyncExpert::backward(const ConvChain& chain, const std::string& head,
                            const ParameterSet& params, const EncodeCache& cache,
                            const Tensor& dembed, GradStore* grads) const {
  Tensor dz = relu_backward(cache.z, dembed);
  Tensor dpooled;
  Tensor dw;
  Tensor db;
  linear_backward(cache.pooled, params.at(head + ".w"), dz, &dpooled,
                  grads != nullptr ? &dw : nullptr,
                  grads != nullptr ? &db : nullptr);
  if (grads != nullptr) {
    grads->accumulate(head + ".w", dw);
    grads->accumulate(head + ".b", db);
  }
  Tensor dy = global_avg_pool_backward(cache.chain_out.shape(), dpooled);
  return chain.backward(params, cache.chain, dy, grads);
}

Tensor SyncExpert::encode_face_window(const ParameterSet& params, const Tensor& window,
                                      EncodeCache* cache) const {
  window.require_shape({-1, cfg_.crop_height / 2, cfg_.crop_width,
                        3 * cfg_.video_frames},
                       "expert face window");
  return encode(face_, "face.fc", params, window, cache);
}

Tensor SyncExpert::encode_audio_window(const ParameterSet& params, const Tensor& audio,
                                       EncodeCache* cache) const {
  audio.require_shape({-1, cfg_.audio_steps, cfg_.mel_channels}, "expert audio window");
  Tensor x = audio.reshaped({audio.dim(0), cfg_.audio_steps, cfg_.mel_channels, 1});
  return encode(audio_, "audio.fc", params, x, cache);
}

Tensor SyncExpert::face_backward(const ParameterSet& params, const EncodeCache& cache,
                                 const Tensor& dembed, GradStore* grads) const {
  return backward(face_, "face.fc", params, cache, dembed, grads);
}

Tensor SyncExpert::audio_backward(const ParameterSet& params, const EncodeCache& cache,
                                  const Tensor& dembed, GradStore* grads) const {
  Tensor dx = backward(audio_, "audio.fc", params, cache, dembed, grads);
  return dx.reshaped({dx.dim(0), cfg_.audio_steps, cfg_.mel_channels});
}

double sync_probability(const Tensor& v, const Tensor& s, double eps) {
  if (v.rank() != 1 || s.rank() != 1 || v.dim(0) != s.dim(0)) {
    throw ShapeError("sync_probability expects equal-length rank-1 embeddings, got " +
                     shape_to_string(v.shape()) + " and " + shape_to_string(s.shape()));
  }
  if (eps <= 0.0) throw ContractViolation("sync_probability eps must be positive");
  double dot = 0.0;
  double nv = 0.0;
  double ns = 0.0;
  for (std::int64_t i = 0; i < v.dim(0); ++i) {
    dot += v[i] * s[i];
    nv += v[i] * v[i];
    ns += s[i] * s[i];
  }
  const double denom = std::max(std::sqrt(nv) * std::sqrt(ns), eps);
  return dot / denom;
}

void sync_probability_backward(const Tensor& v, const Tensor& s, double eps,
                               double dp, Tensor* dv, Tensor* ds) {
  if (v.rank() != 1 || s.rank() != 1 || v.dim(0) != s.dim(0)) {
    throw ShapeError("sync_probability_backward shape mismatch");
  }
  const std::int64_t n = v.dim(0);
  double dot = 0.0;
  double nv2 = 0.0;
  double ns2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    dot += v[i] * s[i];
    nv2 += v[i] * v[i];
    ns2 += s[i] * s[i];
  }
  const double prod = std::sqrt(nv2) * std::sqrt(ns2);
  if (dv != nullptr) *dv = Tensor::zeros({n});
  if (ds != nullptr) *ds = Tensor::zeros({n});
  if (prod > eps) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (dv != nullptr) (*dv)[i] = dp * (s[i] / prod - dot * v[i] / (prod * nv2));
      if (ds != nullptr) (*ds)[i] = dp * (v[i] / prod - dot * s[i] / (prod * ns2));
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      if (dv != nullptr) (*dv)[i] = dp * s[i] / eps;
      if (ds != nullptr) (*ds)[i] = dp * v[i] / eps;
    }
  }
}

double expert_bce_loss(double p, int label) {
  if (label != 0 && label != 1) {
    throw ContractViolation("bce label must be 0 or 1");
  }
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(q) : -std::log1p(-q);
}

double expert_bce_loss_backward(double p, int label) {
  if (label != 0 && label != 1) {
    throw ContractViolation("bce label must be 0 or 1");
  }
  if (p < kProbClamp || p > 1.0 - kProbClamp) return 0.0;
  return label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

void assemble_pair_batch(const std::vector<SyncPair>& pairs, Tensor* faces,
                         Tensor* audio) {
  if (pairs.empty()) throw InputTooShort("no sync pairs to assemble");
  const Tensor& f0 = pairs.front().face_window;
  const Tensor& a0 = pairs.front().audio_window;
  if (f0.rank() != 4 || a0.rank() != 2) {
    throw ShapeError("sync pair tensors have unexpected ranks");
  }
  const std::int64_t n = static_cast<std::int64_t>(pairs.size());
  const std::int64_t tv = f0.dim(0);
  const std::int64_t hh = f0.dim(1);
  const std::int64_t w = f0.dim(2);
  *faces = Tensor::zeros({n, hh, w, 3 * tv});
  *audio = Tensor::zeros({n, a0.dim(0), a0.dim(1)});
  for (std::int64_t i = 0; i < n; ++i) {
    pairs[static_cast<std::size_t>(i)].face_window.require_shape({tv, hh, w, 3},
                                                                 "sync pair face window");
    pairs[static_cast<std::size_t>(i)].audio_window.require_shape(
        {a0.dim(0), a0.dim(1)}, "sync pair audio window");
    const Tensor& fw = pairs[static_cast<std::size_t>(i)].face_window;
    double* out = faces->data() + i * hh * w * 3 * tv;
    for (std::int64_t t = 0; t < tv; ++t) {
      const double* src = fw.storage().data() + t * hh * w * 3;
      for (std::int64_t p = 0; p < hh * w; ++p) {
        for (std::int64_t c = 0; c < 3; ++c) {
          out[p * 3 * tv + t * 3 + c] = src[p * 3 + c];
        }
      }
    }
    const Tensor& aw = pairs[static_cast<std::size_t>(i)].audio_window;
    std::memcpy(audio->data() + i * aw.numel(), aw.storage().data(),
                static_cast<std::size_t>(aw.numel()) * sizeof(double));
  }
}

namespace {

std::vector<double> batch_sync_probabilities(const Tensor& V, const Tensor& S,
                                             double eps) {
  std::vector<double> out(static_cast<std::size_t>(V.dim(0)));
  for (std::int64_t i = 0; i < V.dim(0); ++i) {
    out[static_cast<std::size_t>(i)] =
        sync_probability(take_row(V, i), take_row(S, i), eps);
  }
  return out;
}

}  // namespace

double off_sync_accuracy(const SyncExpert& model, const ParameterSet& params,
                         const std::vector<SyncPair>& pairs, double threshold) {
  if (pairs.empty()) throw InputTooShort("off_sync_accuracy needs at least one pair");
  constexpr std::int64_t kChunk = 256;
  std::int64_t correct = 0;
  for (std::size_t begin = 0; begin < pairs.size(); begin += kChunk) {
    const std::size_t end = std::min(pairs.size(), begin + kChunk);
    std::vector<SyncPair> chunk(pairs.begin() + static_cast<std::ptrdiff_t>(begin),
                                pairs.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor faces;
    Tensor audio;
    assemble_pair_batch(chunk, &faces, &audio);
    Tensor V = model.encode_face_window(params, faces);
    Tensor S = model.encode_audio_window(params, audio);
    const auto probs = batch_sync_probabilities(V, S, model.config().eps);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const int predicted = probs[i] >= threshold ? 1 : 0;
      if (predicted == chunk[i].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

std::vector<SyncPair> make_eval_pairs(const ToyCorpus& corpus, const WindowConfig& wcfg,
                                      std::uint64_t seed, std::int64_t count) {
  if (corpus.tracks.empty() || corpus.tracks.size() != corpus.mels.size()) {
    throw InputTooShort("corpus must hold matching tracks and mels");
  }
  if (count < 2 || count % 2 != 0) {
    throw ContractViolation("eval pair count must be even and >= 2");
  }
  Rng rng(Rng::derive(seed, 0x45564c));  // distinct stream per purpose
  std::vector<SyncPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const bool positive = i % 2 == 0;
    const auto t = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(corpus.tracks.size())));
    pairs.push_back(sample_sync_pair(corpus.tracks[t], corpus.mels[t], wcfg,
                                     rng.next_u64(), positive));
  }
  return pairs;
}

ExpertTrainResult train_expert(const ToyCorpus& corpus, const WindowConfig& wcfg,
                               const SyncExpertConfig& cfg,
                               const ExpertTrainConfig& hyper) {
  wcfg.validate();
  cfg.validate();
  require_window_match(cfg, wcfg);
  if (corpus.tracks.empty() || corpus.tracks.size() != corpus.mels.size()) {
    throw InputTooShort("train_expert needs a corpus with matching tracks and mels");
  }
  if (hyper.batch_size < 2 || hyper.batch_size % 2 != 0) {
    throw ConfigMismatch("expert batch_size must be even and >= 2");
  }
  if (hyper.steps < 0) throw ConfigMismatch("expert steps must be >= 0");

  SyncExpert model(cfg);
  ExpertTrainResult result;
  result.params = model.init_params(hyper.seed);
  Adam opt(hyper.lr);

  std::vector<SyncPair> eval_set;
  const bool wants_eval = hyper.eval_interval > 0;
  if (wants_eval) {
    eval_set = make_eval_pairs(corpus, wcfg, Rng::derive(hyper.seed, 1),
                               hyper.eval_pairs);
  }

  const auto n_tracks = static_cast<std::int64_t>(corpus.tracks.size());
  for (std::int64_t step = 0; step < hyper.steps; ++step) {
    Rng rng(Rng::derive(hyper.seed, 1000 + step));
    std::vector<SyncPair> batch;
    batch.reserve(static_cast<std::size_t>(hyper.batch_size));
    for (std::int64_t i = 0; i < hyper.batch_size; ++i) {
      const bool positive = i < hyper.batch_size / 2;
      const auto t = static_cast<std::size_t>(rng.uniform_int(n_tracks));
      batch.push_back(sample_sync_pair(corpus.tracks[t], corpus.mels[t], wcfg,
                                       rng.next_u64(), positive));
    }

    Tensor faces;
    Tensor audio;
    assemble_pair_batch(batch, &faces, &audio);

    SyncExpert::EncodeCache face_cache;
    SyncExpert::EncodeCache audio_cache;
    Tensor V = model.encode_face_window(result.params, faces, &face_cache);
    Tensor S = model.encode_audio_window(result.params, audio, &audio_cache);

    const auto probs = batch_sync_probabilities(V, S, cfg.eps);
    double loss = 0.0;
    std::int64_t correct = 0;
    Tensor dV = Tensor::zeros(V.shape());
    Tensor dS = Tensor::zeros(S.shape());
    const double inv_n = 1.0 / static_cast<double>(hyper.batch_size);
    for (std::int64_t i = 0; i < hyper.batch_size; ++i) {
      const int label = batch[static_cast<std::size_t>(i)].label;
      const double p = probs[static_cast<std::size_t>(i)];
      loss += expert_bce_loss(p, label) * inv_n;
      if ((p >= 0.5 ? 1 : 0) == label) ++correct;
      const double dp = expert_bce_loss_backward(p, label) * inv_n;
      Tensor dv;
      Tensor ds;
      sync_probability_backward(take_row(V, i), take_row(S, i), cfg.eps, dp, &dv, &ds);
      add_row(&dV, i, dv);
      add_row(&dS, i, ds);
    }

    GradStore grads;
    model.face_backward(result.params, face_cache, dV, &grads);
    model.audio_backward(result.params, audio_cache, dS, &grads);
    opt.step(result.params, grads);

    result.history.push_back(
        {step, loss, static_cast<double>(correct) / static_cast<double>(hyper.batch_size)});
    result.steps_run = step + 1;

    if (wants_eval && (step + 1) % hyper.eval_interval == 0) {
      result.final_eval_accuracy = off_sync_accuracy(model, result.params, eval_set);
      if (hyper.target_accuracy > 0.0 &&
          result.final_eval_accuracy >= hyper.target_accuracy) {
        break;
      }
    }
  }

  if (wants_eval && result.final_eval_accuracy < 0.0) {
    result.final_eval_accuracy = off_sync_accuracy(model, result.params, eval_set);
  }
  return result;
}

void save_sync_expert(const ParameterSet& params, const SyncExpertConfig& cfg,
                      const std::string& path) {
  cfg.validate();
  save_checkpoint(params, "sync_expert", cfg.to_json(), path);
}

std::pair<SyncExpertConfig, ParameterSet> load_sync_expert(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path, "sync_expert");
  SyncExpertConfig cfg = SyncExpertConfig::from_json(ckpt.config_json);
  cfg.validate();
  SyncExpert model(cfg);
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
