#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lipsync/chain.hpp"
#include "lipsync/corpus.hpp"
#include "lipsync/lip_generator.hpp"
#include "lipsync/params.hpp"
#include "lipsync/sync_expert.hpp"
#include "lipsync/tensor.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

struct QualityDiscConfig {
  std::int64_t crop_height = 96;
  std::int64_t crop_width = 96;
  /// One stride-2 stage per entry.
  std::vector<std::int64_t> widths = {32, 64, 128, 256};
  double leaky_slope = 0.2;

  void validate() const;
  std::string to_json() const;
  static QualityDiscConfig from_json(const std::string& text);
  static QualityDiscConfig for_window(const WindowConfig& w, std::vector<std::int64_t> widths);
  static QualityDiscConfig defaults();
  static QualityDiscConfig toy();
};

void require_window_match(const QualityDiscConfig& cfg, const WindowConfig& w);

/// Visual-quality discriminator: a stride-2 leaky-ReLU conv tower over full
/// face frames, average-pooled into one realism probability per image. The
/// linear head is zero-initialized, so an untrained discriminator scores
/// every image exactly 0.5; the head then learns before the tower does.
class QualityDisc {
 public:
  explicit QualityDisc(QualityDiscConfig cfg);

  const QualityDiscConfig& config() const { return cfg_; }

  ParameterSet init_params(std::uint64_t seed) const;

  struct ForwardCache {
    ChainCache chain;
    Tensor chain_out;
    Tensor pooled;
    Tensor probs;
  };

  /// images: (M, H, W, 3) in [0,1]. Returns (M,) probabilities clamped to
  /// [kProbClamp, 1 - kProbClamp].
  Tensor forward(const ParameterSet& params, const Tensor& images,
                 ForwardCache* cache = nullptr) const;

  /// dprobs: (M,). Returns dL/d(images); accumulates parameter gradients into
  /// `grads` when non-null (pass nullptr when only the image gradient is
  /// needed, as in the generator's adversarial update).
  Tensor backward(const ParameterSet& params, const ForwardCache& cache,
                  const Tensor& dprobs, GradStore* grads) const;

 private:
  QualityDiscConfig cfg_;
  ConvChain chain_;
};

/// Mean log(1 - D(x)) over generated images: the generator's adversarial
/// objective as classically written. Minimizing this form directly saturates
/// once the discriminator confidently rejects the fakes, so the training
/// loop optimizes gen_adv_loss_nonsaturating instead; this literal form is
/// what the discriminator objective contains and what reference checks pin.
double gen_adv_loss(const Tensor& d_probs_on_generated);

/// Non-saturating generator adversarial loss: mean -log D(x) over generated
/// images. Pushes D(x) toward 1 exactly like the literal form but keeps a
/// usable gradient when the fakes are easy to reject. This is the value
/// logged as l_gen and weighted into the total generator objective.
double gen_adv_loss_nonsaturating(const Tensor& d_probs_on_generated);

/// Mean log D(real) + mean log(1 - D(generated)). The discriminator is
/// trained to maximize this; train_wav2lip minimizes its negation.
double disc_loss(const Tensor& d_probs_on_real, const Tensor& d_probs_on_generated);

/// Hyper-parameters of the full generator + dual-discriminator run.
struct TrainConfig {
  double sync_weight = 0.03;  // weight on the frozen expert's sync loss
  double adv_weight = 0.07;   // weight on the adversarial term
  /// Generated frames per step; must be a multiple of video_frames.
  std::int64_t batch_size = 80;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;
  std::int64_t disc_updates_per_gen = 1;
  /// Audit cadence (steps) for the frozen-expert checksum; 0 = end only.
  std::int64_t checksum_interval = 100;
  /// When non-empty: writes config.json, metrics.tsv and checkpoints here.
  std::string run_dir;
  /// Extra generator checkpoints every this many steps; 0 = final only.
  std::int64_t checkpoint_interval = 0;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

/// (1 - sync_weight - adv_weight) * l_recon + sync_weight * e_sync +
/// adv_weight * l_gen_term, where l_gen_term is the generator's adversarial
/// term in minimization form. Throws ConfigMismatch when the weights are
/// invalid (negative, or summing to >= 1).
double total_generator_loss(double l_recon, double e_sync, double l_gen_term,
                            const TrainConfig& cfg);

struct Wav2LipStepLog {
  std::int64_t step = 0;
  double l_recon = 0.0;
  double e_sync = 0.0;
  double l_gen = 0.0;
  double l_total = 0.0;
  double l_disc = 0.0;
};

struct Wav2LipTrainResult {
  ParameterSet generator;
  ParameterSet discriminator;
  std::vector<Wav2LipStepLog> history;
  std::int64_t steps_run = 0;
};

/// Full training loop: one generator update per step against the frozen sync
/// expert and the current quality discriminator, followed by
/// disc_updates_per_gen discriminator updates on the same batch (real targets
/// vs the freshly generated frames, detached). sync_weight = 0 skips the
/// expert pass entirely; adv_weight = 0 skips the discriminator entirely and
/// returns it untouched. Throws ContractViolation when the expert parameters
/// are not frozen or mutate mid-run. Deterministic for a fixed seed.
Wav2LipTrainResult train_wav2lip(const ToyCorpus& corpus, const WindowConfig& wcfg,
                                 const SyncExpertConfig& expert_cfg,
                                 const ParameterSet& expert_params,
                                 const GeneratorConfig& gen_cfg,
                                 const QualityDiscConfig& disc_cfg, const TrainConfig& cfg);

/// Fraction of correct real-vs-generated decisions at `threshold`. A real
/// image counts when its probability exceeds the threshold, a generated one
/// when it does not, so a constant-0.5 discriminator scores exactly 0.5 on a
/// balanced batch.
double disc_accuracy(const QualityDisc& disc, const ParameterSet& disc_params,
                     const Tensor& real_images, const Tensor& generated_images,
                     double threshold = 0.5);

/// Writes `count` generated frames and their ground-truth targets as binary
/// 8-bit PPMs (gen_NNNN.ppm / real_NNNN.ppm) under dir, so external
/// image-quality tools can score them. Deterministic for a fixed seed.
void export_generated_frames(const LipGenerator& gen, const ParameterSet& gen_params,
                             const ToyCorpus& corpus, const WindowConfig& wcfg,
                             std::uint64_t seed, std::int64_t count, const std::string& dir);

void save_quality_disc(const ParameterSet& params, const QualityDiscConfig& cfg,
                       const std::string& path);
std::pair<QualityDiscConfig, ParameterSet> load_quality_disc(const std::string& path);

}  // namespace lipsync
