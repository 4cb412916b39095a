#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipsync/corpus.hpp"
#include "lipsync/lip_generator.hpp"
#include "lipsync/mel.hpp"
#include "lipsync/params.hpp"
#include "lipsync/quality_gan.hpp"
#include "lipsync/sync_expert.hpp"
#include "lipsync/tensor.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

/// Sync metrics for one clip. The scorer slides the audio window from
/// -max_offset to +max_offset video frames against every valid window
/// position and records the embedding L2 distance; offset_curve holds the
/// per-offset mean over positions. lse_d (lower = better sync) is the curve
/// minimum; lse_c (higher = stronger sync signal) is its median minus its
/// minimum.
struct LseReport {
  double lse_d = 0.0;
  double lse_c = 0.0;
  /// Index i holds the mean distance at offset i - max_offset.
  std::vector<double> offset_curve;
  std::int64_t n_windows = 0;
  std::int64_t max_offset = 0;
  /// Per-position distances, (n_windows, 2*max_offset + 1); offset_curve is
  /// its column mean. Row r belongs to window position first_position + r.
  Tensor distances;
  std::int64_t first_position = 0;
};

/// Scores a clip against an audio track. The scorer must be a sync expert
/// checkpoint trained separately from the one used inside training runs, so
/// the evaluated model cannot simply have memorized its judge. Positions are
/// restricted to those where every offset in [-max_offset, +max_offset] has
/// full video and mel coverage; needs track length >= Tv + 2*max_offset
/// (throws InputTooShort otherwise).
LseReport lse_metrics(const FaceTrack& track, const MelSpectrogram& mel,
                      const SyncExpertConfig& scorer_cfg, const ParameterSet& scorer,
                      const WindowConfig& wcfg, std::int64_t max_offset = 15);

/// Per-clip reports plus their means, the shape of a results table row.
struct LseSummary {
  std::vector<std::string> clip_ids;
  std::vector<LseReport> clips;
  double mean_lse_d = 0.0;
  double mean_lse_c = 0.0;
};

LseSummary evaluate_corpus_lse(const ToyCorpus& corpus, const SyncExpertConfig& scorer_cfg,
                               const ParameterSet& scorer, const WindowConfig& wcfg,
                               std::int64_t max_offset = 15);

/// TSV: one line per clip (id, lse_d, lse_c, n_windows) and a final `mean`
/// row, LF line endings.
void write_lse_report(const std::string& path, const LseSummary& summary);

/// One dubbing task: lip-sync video_id to speech from audio_source_id,
/// truncated to audio_len seconds. audio_len < video_len always holds, and a
/// clip is never paired with its own audio.
struct BenchmarkPair {
  std::string video_id;
  std::string audio_source_id;
  double video_len = 0.0;  // seconds
  double audio_len = 0.0;  // seconds
  std::uint64_t seed = 0;
};

/// Deterministically samples n_pairs dubbing tasks from a corpus manifest
/// (see save_corpus). Needs at least two corpus entries; throws InputTooShort
/// when no valid pairing exists.
std::vector<BenchmarkPair> build_benchmark(const std::string& corpus_manifest,
                                           std::uint64_t seed, std::int64_t n_pairs);

/// `video_id TAB audio_source_id TAB video_len TAB audio_len TAB seed`,
/// UTF-8, LF line endings. Serialization is byte-deterministic.
std::string benchmark_manifest_text(const std::vector<BenchmarkPair>& pairs);
void write_benchmark_manifest(const std::string& path,
                              const std::vector<BenchmarkPair>& pairs);
std::vector<BenchmarkPair> read_benchmark_manifest(const std::string& path);

/// Re-voices a clip with the inference protocol: every complete window of
/// video_frames frames is regenerated with the current frame as identity
/// reference, its lower half masked as the pose prior, and dub_mel as speech;
/// trailing frames that no complete window covers are copied through.
/// dub_mel may come from a different clip, which is the benchmark setting.
FaceTrack synthesize_dubbed_track(const LipGenerator& gen, const ParameterSet& gen_params,
                                  const FaceTrack& track, const MelSpectrogram& dub_mel,
                                  const WindowConfig& wcfg);

struct FinetuneBudget {
  std::int64_t steps = 0;
  /// Generated frames per step; must be a multiple of video_frames.
  std::int64_t batch_size = 10;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double sync_weight = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Co-trains a generator while fine-tuning the expert on its outputs: each
/// step updates the generator (reconstruction + sync loss against the
/// current expert), then updates the expert on real windows as positives and
/// the generated windows as negatives. This deliberately reproduces the
/// failure mode where a discriminator trained on generated faces loses its
/// grip on real off-sync detection; it exists for the ablation study, not
/// for producing good experts. A zero-step budget returns the input
/// unchanged. The returned expert is not frozen. When co_generator is
/// non-null it receives the co-trained generator parameters.
ParameterSet finetune_expert_in_gan(const SyncExpertConfig& expert_cfg,
                                    const ParameterSet& expert_params,
                                    const GeneratorConfig& gen_cfg, const ToyCorpus& corpus,
                                    const WindowConfig& wcfg, const FinetuneBudget& budget,
                                    ParameterSet* co_generator = nullptr);

struct AblationRow {
  std::int64_t tv = 0;
  bool fine_tuned = false;
  double off_sync_acc = 0.0;
  double lse_d = 0.0;
  double lse_c = 0.0;
};

struct AblationBudgets {
  std::int64_t expert_steps = 1500;
  std::int64_t expert_batch = 16;
  double expert_lr = 1e-3;
  /// Window groups per generator step (frames = groups * video_frames).
  std::int64_t gan_batch_groups = 2;
  std::int64_t gan_steps = 300;
  std::int64_t finetune_steps = 300;
  std::int64_t eval_pairs = 128;
  /// Clips re-voiced per row for the LSE columns.
  std::int64_t lse_clips = 2;
  std::int64_t max_offset = 15;

  void validate() const;
};

/// Derives the window geometry for a window-length variant: audio_steps is
/// rounded to tv video frames' worth of mel steps.
WindowConfig window_for_tv(const WindowConfig& base, std::int64_t tv);

/// The six-variant study: for tv in {1, 3, 5}, trains a sync expert, then a
/// generator against the frozen expert, and a second generator while
/// fine-tuning a copy of the expert on generated faces. Each row reports the
/// expert's off-sync accuracy on held-out real pairs plus mean LSE metrics
/// of clips re-voiced by that row's generator with cross-clip audio, scored
/// by the supplied independent scorer. Returns six rows ordered
/// (tv asc, frozen before fine-tuned). Deterministic in seed.
std::vector<AblationRow> run_ablation(const ToyCorpus& corpus, const WindowConfig& wcfg,
                                      const SyncExpertConfig& scorer_cfg,
                                      const ParameterSet& scorer,
                                      const AblationBudgets& budgets, std::uint64_t seed);

}  // namespace lipsync
