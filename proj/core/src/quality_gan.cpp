#include "lipsync/quality_gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "lipsync/adam.hpp"
#include "lipsync/checkpoint.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/nn.hpp"
#include "lipsync/rng.hpp"

namespace lipsync {

using nlohmann::json;
namespace fs = std::filesystem;

void QualityDiscConfig::validate() const {
  if (crop_height < 4 || crop_width < 4)
    throw ConfigMismatch("quality disc crops must be at least 4x4");
  if (widths.empty()) throw ConfigMismatch("quality disc needs at least one stage width");
  for (std::int64_t w : widths)
    if (w < 1) throw ConfigMismatch("quality disc stage widths must be positive");
  if (!(leaky_slope > 0.0) || !(leaky_slope < 1.0))
    throw ConfigMismatch("leaky_slope must lie in (0, 1)");
}

std::string QualityDiscConfig::to_json() const {
  json j;
  j["crop_height"] = crop_height;
  j["crop_width"] = crop_width;
  j["widths"] = widths;
  j["leaky_slope"] = leaky_slope;
  return j.dump();
}

QualityDiscConfig QualityDiscConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigMismatch("quality disc config is not valid JSON: " + std::string(e.what()));
  }
  QualityDiscConfig cfg;
  try {
    cfg.crop_height = j.at("crop_height").get<std::int64_t>();
    cfg.crop_width = j.at("crop_width").get<std::int64_t>();
    cfg.widths = j.at("widths").get<std::vector<std::int64_t>>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
  } catch (const json::exception& e) {
    throw ConfigMismatch("quality disc config is missing fields: " + std::string(e.what()));
  }
  return cfg;
}

QualityDiscConfig QualityDiscConfig::for_window(const WindowConfig& w,
                                                std::vector<std::int64_t> widths) {
  QualityDiscConfig cfg;
  cfg.crop_height = w.crop_height;
  cfg.crop_width = w.crop_width;
  cfg.widths = std::move(widths);
  cfg.validate();
  return cfg;
}

QualityDiscConfig QualityDiscConfig::defaults() { return QualityDiscConfig{}; }

QualityDiscConfig QualityDiscConfig::toy() {
  return for_window(WindowConfig::toy(), {8, 16, 32});
}

void require_window_match(const QualityDiscConfig& cfg, const WindowConfig& w) {
  if (cfg.crop_height != w.crop_height || cfg.crop_width != w.crop_width)
    throw ConfigMismatch("quality disc crop size does not match the window config");
}

namespace {

std::vector<LayerSpec> disc_specs(const QualityDiscConfig& cfg) {
  std::vector<LayerSpec> specs;
  std::int64_t in_ch = 3;
  for (std::int64_t w : cfg.widths) {
    LayerSpec s = conv_spec(in_ch, w, 3, 2, 1, Act::LeakyRelu);
    s.leaky_slope = cfg.leaky_slope;
    specs.push_back(s);
    in_ch = w;
  }
  return specs;
}

}  // namespace

QualityDisc::QualityDisc(QualityDiscConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  chain_ = ConvChain("disc", disc_specs(cfg_));
}

ParameterSet QualityDisc::init_params(std::uint64_t seed) const {
  ParameterSet params;
  Rng rng(seed);
  chain_.init_params(params, rng);
  // Zero head: every image scores sigmoid(0) = 0.5 until the head moves.
  params.insert("disc.fc.w", Tensor::zeros({chain_.out_channels(), 1}));
  params.insert("disc.fc.b", Tensor::zeros({1}));
  return params;
}

Tensor QualityDisc::forward(const ParameterSet& params, const Tensor& images,
                            ForwardCache* cache) const {
  images.require_shape({-1, cfg_.crop_height, cfg_.crop_width, 3}, "quality disc input");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.chain_out = chain_.forward(params, images, &c.chain);
  c.pooled = nn::global_avg_pool(c.chain_out);
  Tensor logits = nn::linear(c.pooled, params.at("disc.fc.w"), params.at("disc.fc.b"));
  const std::int64_t m = images.dim(0);
  Tensor probs({m});
  for (std::int64_t i = 0; i < m; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.data()[i]));
    probs.data()[i] = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  }
  c.probs = probs;
  return probs;
}

Tensor QualityDisc::backward(const ParameterSet& params, const ForwardCache& cache,
                             const Tensor& dprobs, GradStore* grads) const {
  const std::int64_t m = cache.probs.dim(0);
  dprobs.require_shape({m}, "quality disc dprobs");
  Tensor dlogits({m, 1});
  for (std::int64_t i = 0; i < m; ++i) {
    const double p = cache.probs.data()[i];
    const bool clamped = p <= kProbClamp || p >= 1.0 - kProbClamp;
    dlogits.data()[i] = clamped ? 0.0 : dprobs.data()[i] * p * (1.0 - p);
  }
  Tensor dpooled, dw, db;
  nn::linear_backward(cache.pooled, params.at("disc.fc.w"), dlogits, &dpooled,
                      grads ? &dw : nullptr, grads ? &db : nullptr);
  if (grads) {
    grads->accumulate("disc.fc.w", dw);
    grads->accumulate("disc.fc.b", db);
  }
  Tensor dchain = nn::global_avg_pool_backward(cache.chain_out.shape(), dpooled);
  return chain_.backward(params, cache.chain, dchain, grads);
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void require_probs(const Tensor& probs, const char* what) {
  if (probs.rank() != 1) throw ShapeError(std::string(what) + " must be rank 1");
  if (probs.numel() == 0) throw InputTooShort(std::string(what) + " is empty");
}

}  // namespace

double gen_adv_loss(const Tensor& d_probs_on_generated) {
  require_probs(d_probs_on_generated, "generated probabilities");
  double sum = 0.0;
  for (std::int64_t i = 0; i < d_probs_on_generated.numel(); ++i)
    sum += std::log1p(-clamp_prob(d_probs_on_generated.data()[i]));
  return sum / static_cast<double>(d_probs_on_generated.numel());
}

double gen_adv_loss_nonsaturating(const Tensor& d_probs_on_generated) {
  require_probs(d_probs_on_generated, "generated probabilities");
  double sum = 0.0;
  for (std::int64_t i = 0; i < d_probs_on_generated.numel(); ++i)
    sum -= std::log(clamp_prob(d_probs_on_generated.data()[i]));
  return sum / static_cast<double>(d_probs_on_generated.numel());
}

double disc_loss(const Tensor& d_probs_on_real, const Tensor& d_probs_on_generated) {
  require_probs(d_probs_on_real, "real probabilities");
  double real_sum = 0.0;
  for (std::int64_t i = 0; i < d_probs_on_real.numel(); ++i)
    real_sum += std::log(clamp_prob(d_probs_on_real.data()[i]));
  return real_sum / static_cast<double>(d_probs_on_real.numel()) +
         gen_adv_loss(d_probs_on_generated);
}

void TrainConfig::validate() const {
  if (sync_weight < 0.0 || adv_weight < 0.0)
    throw ConfigMismatch("loss weights must be non-negative");
  if (sync_weight + adv_weight >= 1.0)
    throw ConfigMismatch("sync_weight + adv_weight must stay below 1");
  if (batch_size < 1) throw ConfigMismatch("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigMismatch("lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigMismatch("betas must lie in [0, 1)");
  if (steps < 0) throw ConfigMismatch("steps must be >= 0");
  if (disc_updates_per_gen < 1) throw ConfigMismatch("disc_updates_per_gen must be >= 1");
  if (checksum_interval < 0 || checkpoint_interval < 0)
    throw ConfigMismatch("intervals must be >= 0");
}

std::string TrainConfig::to_json() const {
  json j;
  j["sync_weight"] = sync_weight;
  j["adv_weight"] = adv_weight;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["steps"] = steps;
  j["seed"] = seed;
  j["disc_updates_per_gen"] = disc_updates_per_gen;
  j["checksum_interval"] = checksum_interval;
  j["run_dir"] = run_dir;
  j["checkpoint_interval"] = checkpoint_interval;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigMismatch("train config is not valid JSON: " + std::string(e.what()));
  }
  TrainConfig cfg;
  try {
    cfg.sync_weight = j.at("sync_weight").get<double>();
    cfg.adv_weight = j.at("adv_weight").get<double>();
    cfg.batch_size = j.at("batch_size").get<std::int64_t>();
    cfg.lr = j.at("lr").get<double>();
    cfg.beta1 = j.at("beta1").get<double>();
    cfg.beta2 = j.at("beta2").get<double>();
    cfg.steps = j.at("steps").get<std::int64_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.disc_updates_per_gen = j.at("disc_updates_per_gen").get<std::int64_t>();
    cfg.checksum_interval = j.at("checksum_interval").get<std::int64_t>();
    cfg.run_dir = j.at("run_dir").get<std::string>();
    cfg.checkpoint_interval = j.at("checkpoint_interval").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ConfigMismatch("train config is missing fields: " + std::string(e.what()));
  }
  return cfg;
}

double total_generator_loss(double l_recon, double e_sync, double l_gen_term,
                            const TrainConfig& cfg) {
  cfg.validate();
  return (1.0 - cfg.sync_weight - cfg.adv_weight) * l_recon + cfg.sync_weight * e_sync +
         cfg.adv_weight * l_gen_term;
}

namespace {

// dst += scale * src, elementwise.
void axpy(Tensor& dst, double scale, const Tensor& src) {
  for (std::int64_t i = 0; i < dst.numel(); ++i) dst.data()[i] += scale * src.data()[i];
}

// Rows n*tv of a (N*tv, Ta, D) batch: the audio window aligned with each
// group's first frame, which is the window the expert scores the group by.
Tensor group_start_audio(const Tensor& audio, std::int64_t tv) {
  const std::int64_t groups = audio.dim(0) / tv;
  const std::int64_t window = audio.dim(1) * audio.dim(2);
  Tensor out({groups, audio.dim(1), audio.dim(2)});
  for (std::int64_t n = 0; n < groups; ++n)
    std::copy(audio.data() + n * tv * window, audio.data() + (n * tv + 1) * window,
              out.data() + n * window);
  return out;
}

// d(mean -log p)/dp for the non-saturating generator term.
Tensor nonsat_dprobs(const Tensor& probs) {
  const std::int64_t m = probs.numel();
  Tensor d({m});
  for (std::int64_t i = 0; i < m; ++i) {
    const double p = probs.data()[i];
    const bool clamped = p <= kProbClamp || p >= 1.0 - kProbClamp;
    d.data()[i] = clamped ? 0.0 : -1.0 / (p * static_cast<double>(m));
  }
  return d;
}

struct RunWriter {
  explicit RunWriter(const TrainConfig& cfg) : enabled(!cfg.run_dir.empty()) {
    if (!enabled) return;
    dir = fs::path(cfg.run_dir);
    fs::create_directories(dir / "checkpoints");
    metrics.open(dir / "metrics.tsv", std::ios::trunc);
    if (!metrics) throw FormatError("cannot open metrics.tsv under " + cfg.run_dir);
    metrics << "step\tl_recon\te_sync\tl_gen\tl_total\tl_disc\n";
  }

  void write_config(const WindowConfig& w, const SyncExpertConfig& expert_cfg,
                    const GeneratorConfig& gen_cfg, const QualityDiscConfig& disc_cfg,
                    const TrainConfig& cfg) const {
    if (!enabled) return;
    json j;
    j["window"] = json::parse(w.to_json());
    j["expert"] = json::parse(expert_cfg.to_json());
    j["generator"] = json::parse(gen_cfg.to_json());
    j["discriminator"] = json::parse(disc_cfg.to_json());
    j["train"] = json::parse(cfg.to_json());
    std::ofstream out(dir / "config.json", std::ios::trunc);
    if (!out) throw FormatError("cannot open config.json under " + dir.string());
    out << j.dump(2) << "\n";
  }

  void log(const Wav2LipStepLog& row) {
    if (!enabled) return;
    char line[256];
    std::snprintf(line, sizeof(line), "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  static_cast<long long>(row.step), row.l_recon, row.e_sync, row.l_gen,
                  row.l_total, row.l_disc);
    metrics << line;
  }

  std::string checkpoint_path(const std::string& stem) const {
    return (dir / "checkpoints" / (stem + ".ckpt")).string();
  }

  bool enabled = false;
  fs::path dir;
  std::ofstream metrics;
};

}  // namespace

Wav2LipTrainResult train_wav2lip(const ToyCorpus& corpus, const WindowConfig& wcfg,
                                 const SyncExpertConfig& expert_cfg,
                                 const ParameterSet& expert_params,
                                 const GeneratorConfig& gen_cfg,
                                 const QualityDiscConfig& disc_cfg, const TrainConfig& cfg) {
  wcfg.validate();
  expert_cfg.validate();
  gen_cfg.validate();
  disc_cfg.validate();
  cfg.validate();
  require_window_match(expert_cfg, wcfg);
  require_window_match(gen_cfg, wcfg);
  require_window_match(disc_cfg, wcfg);
  if (!expert_params.frozen)
    throw ContractViolation("train_wav2lip needs a frozen sync expert");
  if (cfg.batch_size % wcfg.video_frames != 0)
    throw ConfigMismatch("batch_size must be a multiple of video_frames");

  const std::uint64_t expert_checksum = expert_params.checksum();
  const SyncExpert expert(expert_cfg);
  const LipGenerator gen(gen_cfg);
  const QualityDisc disc(disc_cfg);
  const bool use_sync = cfg.sync_weight > 0.0;
  const bool use_adv = cfg.adv_weight > 0.0;
  const std::int64_t tv = wcfg.video_frames;
  const std::int64_t groups = cfg.batch_size / tv;
  const double recon_weight = 1.0 - cfg.sync_weight - cfg.adv_weight;

  Wav2LipTrainResult out;
  out.generator = gen.init_params(cfg.seed);
  out.discriminator = disc.init_params(Rng::derive(cfg.seed, 2));
  Adam gen_opt(cfg.lr, cfg.beta1, cfg.beta2);
  Adam disc_opt(cfg.lr, cfg.beta1, cfg.beta2);

  RunWriter run(cfg);
  run.write_config(wcfg, expert_cfg, gen_cfg, disc_cfg, cfg);

  const auto audit_expert = [&] {
    if (expert_params.checksum() != expert_checksum)
      throw ContractViolation("frozen expert parameters changed during train_wav2lip");
  };

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    GeneratorBatch batch = build_generator_batch(corpus.tracks, corpus.mels, wcfg,
                                                 Rng::derive(cfg.seed, 1000 + step), groups);

    LipGenerator::ForwardCache gcache;
    Tensor frames = gen.generate_frames(out.generator, batch.reference, batch.pose_prior,
                                        batch.audio, &gcache);

    const double l_recon = reconstruction_loss(frames, batch.target);
    Tensor dframes = reconstruction_loss_backward(frames, batch.target);
    for (std::int64_t i = 0; i < dframes.numel(); ++i) dframes.data()[i] *= recon_weight;

    double e_sync = 0.0;
    if (use_sync) {
      Tensor folded = fold_for_expert(frames, tv);
      Tensor dfolded;
      e_sync = expert_sync_loss(expert, expert_params, folded,
                                group_start_audio(batch.audio, tv), &dfolded);
      axpy(dframes, cfg.sync_weight,
           fold_for_expert_backward(dfolded, tv, wcfg.crop_height));
    }

    double l_gen = 0.0;
    if (use_adv) {
      QualityDisc::ForwardCache dcache;
      Tensor probs = disc.forward(out.discriminator, frames, &dcache);
      l_gen = gen_adv_loss_nonsaturating(probs);
      axpy(dframes, cfg.adv_weight,
           disc.backward(out.discriminator, dcache, nonsat_dprobs(probs), nullptr));
    }

    const double l_total = total_generator_loss(l_recon, e_sync, l_gen, cfg);
    GradStore ggrads;
    gen.backward(out.generator, gcache, dframes, &ggrads);
    gen_opt.step(out.generator, ggrads);

    double l_disc = 0.0;
    if (use_adv) {
      for (std::int64_t k = 0; k < cfg.disc_updates_per_gen; ++k) {
        QualityDisc::ForwardCache real_cache, fake_cache;
        Tensor p_real = disc.forward(out.discriminator, batch.target, &real_cache);
        Tensor p_fake = disc.forward(out.discriminator, frames, &fake_cache);
        if (k == 0) l_disc = disc_loss(p_real, p_fake);
        // Maximizing mean log D(real) + mean log(1 - D(fake)) == descending
        // on its negation.
        Tensor d_real({p_real.numel()});
        for (std::int64_t i = 0; i < p_real.numel(); ++i) {
          const double p = p_real.data()[i];
          const bool clamped = p <= kProbClamp || p >= 1.0 - kProbClamp;
          d_real.data()[i] =
              clamped ? 0.0 : -1.0 / (p * static_cast<double>(p_real.numel()));
        }
        Tensor d_fake({p_fake.numel()});
        for (std::int64_t i = 0; i < p_fake.numel(); ++i) {
          const double p = p_fake.data()[i];
          const bool clamped = p <= kProbClamp || p >= 1.0 - kProbClamp;
          d_fake.data()[i] =
              clamped ? 0.0 : 1.0 / ((1.0 - p) * static_cast<double>(p_fake.numel()));
        }
        GradStore dgrads;
        disc.backward(out.discriminator, real_cache, d_real, &dgrads);
        disc.backward(out.discriminator, fake_cache, d_fake, &dgrads);
        disc_opt.step(out.discriminator, dgrads);
      }
    }

    out.history.push_back({step, l_recon, e_sync, l_gen, l_total, l_disc});
    run.log(out.history.back());
    if (run.enabled && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "generator_step%06lld",
                    static_cast<long long>(step + 1));
      save_generator(out.generator, gen_cfg, run.checkpoint_path(stem));
    }
    if (cfg.checksum_interval > 0 && (step + 1) % cfg.checksum_interval == 0)
      audit_expert();
  }

  audit_expert();
  out.steps_run = cfg.steps;
  if (run.enabled) {
    save_generator(out.generator, gen_cfg, run.checkpoint_path("generator_final"));
    save_quality_disc(out.discriminator, disc_cfg, run.checkpoint_path("disc_final"));
  }
  return out;
}

double disc_accuracy(const QualityDisc& disc, const ParameterSet& disc_params,
                     const Tensor& real_images, const Tensor& generated_images,
                     double threshold) {
  const std::int64_t n_real = real_images.empty() ? 0 : real_images.dim(0);
  const std::int64_t n_fake = generated_images.empty() ? 0 : generated_images.dim(0);
  const std::int64_t total = n_real + n_fake;
  if (total == 0) throw InputTooShort("disc_accuracy needs at least one image");
  const Tensor p_real = n_real ? disc.forward(disc_params, real_images) : Tensor{};
  const Tensor p_fake = n_fake ? disc.forward(disc_params, generated_images) : Tensor{};
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < p_real.numel(); ++i)
    if (p_real.data()[i] > threshold) ++correct;
  for (std::int64_t i = 0; i < p_fake.numel(); ++i)
    if (p_fake.data()[i] <= threshold) ++correct;
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

void write_ppm(const Tensor& frames, std::int64_t row, const fs::path& path) {
  const std::int64_t h = frames.dim(1);
  const std::int64_t w = frames.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "P6\n" << w << " " << h << "\n255\n";
  const double* px = frames.data() + row * h * w * 3;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h * w * 3));
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(px[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

void export_generated_frames(const LipGenerator& gen, const ParameterSet& gen_params,
                             const ToyCorpus& corpus, const WindowConfig& wcfg,
                             std::uint64_t seed, std::int64_t count, const std::string& dir) {
  if (count < 1) throw ContractViolation("export needs count >= 1");
  const std::int64_t tv = wcfg.video_frames;
  const std::int64_t groups = (count + tv - 1) / tv;
  GeneratorBatch batch =
      build_generator_batch(corpus.tracks, corpus.mels, wcfg, seed, groups);
  Tensor frames =
      gen.generate_frames(gen_params, batch.reference, batch.pose_prior, batch.audio);
  fs::create_directories(dir);
  for (std::int64_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "gen_%04lld.ppm", static_cast<long long>(i));
    write_ppm(frames, i, fs::path(dir) / name);
    std::snprintf(name, sizeof(name), "real_%04lld.ppm", static_cast<long long>(i));
    write_ppm(batch.target, i, fs::path(dir) / name);
  }
}

void save_quality_disc(const ParameterSet& params, const QualityDiscConfig& cfg,
                       const std::string& path) {
  cfg.validate();
  save_checkpoint(params, "quality_disc", cfg.to_json(), path);
}

std::pair<QualityDiscConfig, ParameterSet> load_quality_disc(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path, "quality_disc");
  QualityDiscConfig cfg = QualityDiscConfig::from_json(ckpt.config_json);
  cfg.validate();
  QualityDisc model(cfg);
  const ParameterSet expected = model.init_params(0);
  if (expected.names() != ckpt.params.names())
    throw ConfigMismatch("checkpoint '" + path + "' parameter names do not match its config");
  for (const auto& name : expected.names()) {
    if (!expected.at(name).same_shape(ckpt.params.at(name)))
      throw ConfigMismatch("checkpoint '" + path + "' array '" + name + "' has shape " +
                           shape_to_string(ckpt.params.at(name).shape()) +
                           "; config implies " + shape_to_string(expected.at(name).shape()));
  }
  return {std::move(cfg), std::move(ckpt.params)};
}

}  // namespace lipsync
