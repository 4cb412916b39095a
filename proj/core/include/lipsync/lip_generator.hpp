#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lipsync/chain.hpp"
#include "lipsync/params.hpp"
#include "lipsync/sync_expert.hpp"
#include "lipsync/tensor.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

struct GeneratorConfig {
  std::int64_t crop_height = 96;
  std::int64_t crop_width = 96;
  std::int64_t video_frames = 5;
  std::int64_t audio_steps = 16;
  std::int64_t mel_channels = 80;
  /// Identity-encoder stem width; stage i uses base_width * min(2^i, 8).
  std::int64_t base_width = 32;
  /// Number of stride-2 encoder stages (the decoder mirrors them).
  std::int64_t scales = 4;
  std::vector<std::int64_t> audio_widths = {32, 64, 128};
  bool skip_connections = true;

  void validate() const;
  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
  static GeneratorConfig for_window(const WindowConfig& w, std::int64_t base_width,
                                    std::int64_t scales,
                                    std::vector<std::int64_t> audio_widths,
                                    bool skip_connections = true);
  static GeneratorConfig defaults();
  static GeneratorConfig toy();

  /// Per-scale encoder widths, length scales+1 (index 0 = full resolution).
  std::vector<std::int64_t> encoder_widths() const;
};

void require_window_match(const GeneratorConfig& cfg, const WindowConfig& w);

/// Encoder-decoder face generator. The identity encoder reads the reference
/// frame concatenated with the pose prior (6 channels); the speech encoder
/// embeds one audio window per frame; the decoder upsamples back to full
/// resolution with optional skip connections and a sigmoid output, so frames
/// land in [0,1]. Every batch row is processed independently: row j of the
/// output depends only on row j of each input.
class LipGenerator {
 public:
  explicit LipGenerator(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }

  ParameterSet init_params(std::uint64_t seed) const;

  struct ForwardCache {
    std::vector<ChainCache> enc;      // stage 0..scales
    ChainCache aud;
    Tensor aud_out;                   // audio chain output, pre-pool
    Tensor aud_pooled;
    Tensor aud_z;                     // pre-ELU audio embedding
    ChainCache bottleneck;
    std::vector<ChainCache> dec_up;   // index 0 = deepest scale
    std::vector<ChainCache> dec_ref;
    ChainCache out;
    std::vector<Tensor> enc_out;      // encoder stage outputs (for skips)
  };

  /// reference/prior: (M, H, W, 3) with M = N*Tv; audio: (M, Ta, D).
  /// Returns (M, H, W, 3) in [0,1].
  Tensor generate_frames(const ParameterSet& params, const Tensor& reference,
                         const Tensor& prior, const Tensor& audio,
                         ForwardCache* cache = nullptr) const;

  /// dframes: (M, H, W, 3). Accumulates parameter gradients into `grads`.
  void backward(const ParameterSet& params, const ForwardCache& cache,
                const Tensor& dframes, GradStore* grads) const;

 private:
  GeneratorConfig cfg_;
  std::vector<ConvChain> enc_;      // enc_[0] stem, enc_[i] downsampling stage i
  ConvChain aud_;
  ConvChain bottleneck_;
  std::vector<ConvChain> dec_up_;   // deepest first
  std::vector<ConvChain> dec_ref_;
  ConvChain out_;
};

/// Mean absolute difference over all elements of two equal-shaped tensors.
double reconstruction_loss(const Tensor& generated, const Tensor& target);
/// dL/d(generated); the target gradient is its negation.
Tensor reconstruction_loss_backward(const Tensor& generated, const Tensor& target);

/// (N*Tv, H, W, 3) -> (N, H/2, W, 3*Tv): lower halves of each group of Tv
/// consecutive frames, temporal order along channels (channel t*3+c holds
/// frame t, color c). Throws ShapeError when the batch is not divisible by Tv
/// or H is odd.
Tensor fold_for_expert(const Tensor& frames, std::int64_t tv);
/// Exact inverse of fold_for_expert onto lower halves: returns (N*Tv, H/2, W, 3).
Tensor unfold_from_expert(const Tensor& folded);
/// Pullback of fold_for_expert: scatters a folded gradient back to full
/// frames of height `height` (upper halves get zero gradient).
Tensor fold_for_expert_backward(const Tensor& dfolded, std::int64_t tv,
                                std::int64_t height);

/// Mean of -log(clamped p) over a batch of probabilities.
double sync_loss_from_probabilities(const std::vector<double>& probs);

/// Scores folded faces (N, H/2, W, 3*Tv) against one audio window per group
/// (N, Ta, D) with a frozen expert and returns the mean -log P_sync. Writes
/// the gradient w.r.t. the folded faces into dfolded when non-null; expert
/// parameters are never touched. Throws ContractViolation when the expert
/// parameters are not frozen.
double expert_sync_loss(const SyncExpert& expert, const ParameterSet& expert_params,
                        const Tensor& folded_faces, const Tensor& audio_windows,
                        Tensor* dfolded = nullptr);

void save_generator(const ParameterSet& params, const GeneratorConfig& cfg,
                    const std::string& path);
std::pair<GeneratorConfig, ParameterSet> load_generator(const std::string& path);

}  // namespace lipsync
