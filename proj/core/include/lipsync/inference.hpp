#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipsync/lip_generator.hpp"
#include "lipsync/media.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

/// Everything the `lipsync` tool needs to run: generator weights plus the
/// windowing geometry they were trained under, in one file, so inference
/// cannot silently combine mismatched pieces.
struct InferenceCheckpoint {
  WindowConfig window;
  GeneratorConfig generator;
  ParameterSet params;
};

void save_inference_checkpoint(const ParameterSet& params, const GeneratorConfig& gen_cfg,
                               const WindowConfig& wcfg, const std::string& path);

/// Validates array names/shapes against the stored generator config and the
/// generator config against the window config; any disagreement is a
/// ConfigMismatch, a corrupt file a FormatError.
InferenceCheckpoint load_inference_checkpoint(const std::string& path);

struct InferenceJob {
  std::string video_path;
  std::string audio_path;
  std::string checkpoint_path;
  std::string output_path;
  Detector detector = FixedBoxDetector{};
  BoxPads pads;
  bool smooth = true;
  /// Audio longer than video: loop the video instead of truncating it.
  bool loop_video = false;
  /// External transcoder command; empty restricts inputs/outputs to .lsa.
  std::string transcoder;
};

struct InferenceResult {
  std::int64_t frames_written = 0;
  std::int64_t frames_generated = 0;
  std::int64_t frames_skipped = 0;  // no face found; passed through
  std::vector<std::string> warnings;
};

/// Re-voices the source video with the target audio:
///   - the output video track is truncated to the audio duration (or the
///     video loops under loop_video when the audio is longer);
///   - every complete window of frames whose audio slice fits inside the
///     extracted mel is regenerated: the face crop is resized to the model
///     resolution, fed as its own identity reference with the lower half
///     masked as the pose prior, and the result is resized back and pasted
///     into the exact crop rectangle — no pixel outside it changes;
///   - trailing frames without full audio coverage, and frames where no
///     face was found, pass through untouched (the latter add warnings);
///   - the audio samples are written back verbatim, never recoded.
///
/// Media that is not .lsa is converted through the external transcoder
/// (`<transcoder> to-lsa IN OUT` / `<transcoder> from-lsa IN OUT`); without
/// a configured transcoder such paths are a MediaError. Checkpoint problems
/// throw FormatError/ConfigMismatch, undecodable media MediaError, and an
/// fps or sample-rate disagreement with the checkpoint ConfigMismatch.
InferenceResult lipsync_video(const InferenceJob& job);

}  // namespace lipsync
