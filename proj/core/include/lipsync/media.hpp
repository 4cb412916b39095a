#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "lipsync/corpus.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/mel.hpp"
#include "lipsync/tensor.hpp"

namespace lipsync {

/// Mono 16-bit PCM. The inference pipeline never resamples or re-encodes
/// audio: whatever samples come in are written back out verbatim, which is
/// what makes the audio-passthrough guarantee bit-exact.
struct AudioBlob {
  std::int64_t sample_rate = 0;
  std::vector<std::int16_t> samples;
};

/// A decoded clip in the raw interchange format. Frames are (N, H, W, 3)
/// RGB in [0, 1]; either stream may be empty (audio-only or video-only
/// files are valid).
struct MediaClip {
  Tensor frames;
  double fps = 0.0;
  AudioBlob audio;
};

// The `.lsa` interchange file, the only on-disk media layout the core reads
// or writes. Container formats (mp4, wav, ...) are converted to and from it
// by an external transcoder subprocess; see the `lipsync` tool. Layout,
// little-endian, in order:
//   magic "LSA1"
//   u64 n_frames, u64 height, u64 width, f64 fps
//   f32 pixels: n_frames * height * width * 3, frame-major, RGB interleaved
//   u64 sample_rate, u64 n_samples
//   i16 samples
// Anything missing, truncated, or mis-tagged throws MediaError.
MediaClip read_lsa(const std::string& path);
void write_lsa(const std::string& path, const MediaClip& clip);

/// Samples scaled to [-1, 1) doubles for mel extraction.
std::vector<double> waveform_f64(const AudioBlob& audio);

/// Bilinear resample with half-pixel-centered sampling, so resizing to the
/// same size is the identity. src is (H, W, 3).
Tensor resize_bilinear(const Tensor& src, std::int64_t out_h, std::int64_t out_w);

/// One face rectangle per frame, in source-frame pixels. confidence 0 marks
/// a frame where no face was found; such frames pass through inference
/// untouched.
struct FaceBox {
  std::int64_t frame_index = 0;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double confidence = 0.0;
};

/// The same user-supplied box for every frame.
struct FixedBoxDetector {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Adapter around an external detector executable. The command is run as
/// `<command> <frames.lsa>` and must print one `frame_index x y w h conf`
/// line per detected face (UTF-8, LF). Frames with no line are treated as
/// not found; malformed lines are a FormatError.
struct ExecDetector {
  std::string command;
};

using Detector = std::variant<FixedBoxDetector, ExecDetector>;

/// One box per frame, in frame order. Fixed-box mode clamps the box to the
/// frame bounds; the exec adapter writes `frames` to a temporary .lsa file,
/// invokes the command, and parses its stdout. A detector failure (nonzero
/// exit) is a MediaError.
std::vector<FaceBox> localize_faces(const Tensor& frames, double fps,
                                    const Detector& detector);

/// Clamped moving average of width `width` over x, y, w, h. Frames with
/// confidence 0 neither contribute to nor receive smoothing. Constant boxes
/// are unchanged.
std::vector<FaceBox> smooth_boxes(const std::vector<FaceBox>& boxes,
                                  std::int64_t width = 5);

/// Per-side padding in source pixels, applied to detected boxes before
/// cropping. Bottom defaults to 10 because tight detectors clip chins.
struct BoxPads {
  double top = 0.0;
  double bottom = 10.0;
  double left = 0.0;
  double right = 0.0;
};

/// Integer crop rectangle, clamped to the frame.
struct CropRect {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;  // exclusive
  std::int64_t y1 = 0;  // exclusive

  std::int64_t width() const { return x1 - x0; }
  std::int64_t height() const { return y1 - y0; }
};

/// Pads the box, rounds to pixels and clamps to the frame; the result is
/// always at least one pixel in each dimension.
CropRect padded_rect(const FaceBox& box, const BoxPads& pads, std::int64_t frame_h,
                     std::int64_t frame_w);

}  // namespace lipsync
