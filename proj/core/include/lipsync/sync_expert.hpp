#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lipsync/chain.hpp"
#include "lipsync/corpus.hpp"
#include "lipsync/params.hpp"
#include "lipsync/tensor.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any
/// logarithm. Shared by every loss in the project.
inline constexpr double kProbClamp = 1e-7;

/// Off-sync accuracies (percent) reached by the full-scale reference training
/// runs. Desk-scale runs reproduce only the Tv ordering, not these values.
inline constexpr double kReferenceOffSyncAccTv1 = 79.3;
inline constexpr double kReferenceOffSyncAccTv3 = 87.4;
inline constexpr double kReferenceOffSyncAccTv5 = 91.6;

struct SyncExpertConfig {
  std::int64_t embed_dim = 512;
  std::int64_t video_frames = 5;
  std::int64_t crop_height = 96;
  std::int64_t crop_width = 96;
  std::int64_t audio_steps = 16;
  std::int64_t mel_channels = 80;
  /// Output width of each stride-2 stage; the stage count is widths.size().
  std::vector<std::int64_t> widths = {32, 64, 128, 256, 512};
  double eps = 1e-8;
  bool use_residual = true;
  bool color_input = true;

  void validate() const;
  std::string to_json() const;
  static SyncExpertConfig from_json(const std::string& text);

  /// Copies the window geometry (Tv, crop, Ta, D) from `w`.
  static SyncExpertConfig for_window(const WindowConfig& w, std::int64_t embed_dim,
                                     std::vector<std::int64_t> widths,
                                     bool use_residual = true);
  static SyncExpertConfig defaults();
  static SyncExpertConfig toy();
};

/// Throws ConfigMismatch when the expert geometry disagrees with a window
/// config (e.g. a Tv=5 checkpoint in a Tv=3 runtime).
void require_window_match(const SyncExpertConfig& cfg, const WindowConfig& w);

/// The audio-visual sync discriminator: one tower per modality, each a stack
/// of stride-2 convolutions with residual blocks, global average pooling and
/// a linear head. Embeddings are ReLU-rectified, so they are elementwise
/// non-negative and their cosine similarity lands in [0,1].
class SyncExpert {
 public:
  explicit SyncExpert(SyncExpertConfig cfg);

  const SyncExpertConfig& config() const { return cfg_; }

  ParameterSet init_params(std::uint64_t seed) const;

  struct EncodeCache {
    Tensor tower_in;
    ChainCache chain;
    Tensor chain_out;
    Tensor pooled;
    Tensor z;  // pre-ReLU head output
  };

  /// window: (N, H/2, W, 3*Tv), channel t*3+c holding frame t, color c.
  /// Returns (N, embed_dim).
  Tensor encode_face_window(const ParameterSet& params, const Tensor& window,
                            EncodeCache* cache = nullptr) const;
  /// audio: (N, Ta, D). Returns (N, embed_dim).
  Tensor encode_audio_window(const ParameterSet& params, const Tensor& audio,
                             EncodeCache* cache = nullptr) const;

  /// dembed: (N, embed_dim). Returns the input gradient; parameter gradients
  /// accumulate into `grads` when non-null (pass nullptr when frozen).
  Tensor face_backward(const ParameterSet& params, const EncodeCache& cache,
                       const Tensor& dembed, GradStore* grads) const;
  Tensor audio_backward(const ParameterSet& params, const EncodeCache& cache,
                        const Tensor& dembed, GradStore* grads) const;

 private:
  Tensor encode(const ConvChain& chain, const std::string& head,
                const ParameterSet& params, const Tensor& x,
                EncodeCache* cache) const;
  Tensor backward(const ConvChain& chain, const std::string& head,
                  const ParameterSet& params, const EncodeCache& cache,
                  const Tensor& dembed, GradStore* grads) const;

  SyncExpertConfig cfg_;
  ConvChain face_;
  ConvChain audio_;
};

/// dot(v,s) / max(|v|*|s|, eps) on rank-1 embeddings of equal length.
double sync_probability(const Tensor& v, const Tensor& s, double eps);

/// Chain-rule pullback of sync_probability; dp is dL/dP.
void sync_probability_backward(const Tensor& v, const Tensor& s, double eps,
                               double dp, Tensor* dv, Tensor* ds);

/// Binary cross-entropy with the shared probability clamp.
double expert_bce_loss(double p, int label);
/// dL/dp; zero in the clamped region.
double expert_bce_loss_backward(double p, int label);

struct ExpertTrainConfig {
  std::int64_t batch_size = 64;  // must be even: half in-sync, half off-sync
  double lr = 1e-3;
  std::int64_t steps = 5000;
  std::uint64_t seed = 0;
  /// Evaluate off-sync accuracy on a held-out pair set every eval_interval
  /// steps (0 = never) and stop once it reaches target_accuracy (0 = never).
  std::int64_t eval_interval = 0;
  std::int64_t eval_pairs = 256;
  double target_accuracy = 0.0;
};

struct ExpertTrainStep {
  std::int64_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // train-batch accuracy at threshold 0.5
};

struct ExpertTrainResult {
  ParameterSet params;
  std::vector<ExpertTrainStep> history;
  double final_eval_accuracy = -1.0;  // -1 when no evaluation ran
  std::int64_t steps_run = 0;
};

/// Trains a fresh expert on balanced in-sync/off-sync pairs with Adam.
/// Parameters are initialized from hyper.seed, so a zero-step run returns
/// exactly SyncExpert(cfg).init_params(hyper.seed). Deterministic.
ExpertTrainResult train_expert(const ToyCorpus& corpus, const WindowConfig& wcfg,
                               const SyncExpertConfig& cfg,
                               const ExpertTrainConfig& hyper);

/// Fraction of pairs where (P >= threshold) equals the label.
double off_sync_accuracy(const SyncExpert& model, const ParameterSet& params,
                         const std::vector<SyncPair>& pairs, double threshold = 0.5);

/// Deterministic balanced pair set (even count) for evaluation.
std::vector<SyncPair> make_eval_pairs(const ToyCorpus& corpus, const WindowConfig& wcfg,
                                      std::uint64_t seed, std::int64_t count);

/// Folds sync pairs into encoder batches: faces (N, H/2, W, 3*Tv) with the
/// channel order documented on encode_face_window, audio (N, Ta, D).
void assemble_pair_batch(const std::vector<SyncPair>& pairs, Tensor* faces,
                         Tensor* audio);

void save_sync_expert(const ParameterSet& params, const SyncExpertConfig& cfg,
                      const std::string& path);
/// Validates every array name and shape against the stored config before
/// returning; any difference is a ConfigMismatch.
std::pair<SyncExpertConfig, ParameterSet> load_sync_expert(const std::string& path);

}  // namespace lipsync
