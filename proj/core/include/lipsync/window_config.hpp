#pragma once

#include <cstdint>
#include <string>

namespace lipsync {

/// Shared windowing geometry for the whole pipeline: how many face frames a
/// training window covers, how many mel steps span the same stretch of audio,
/// and the crop/mel dimensions.
///
/// The audio window must cover the video window: audio_steps * mel_hop /
/// sample_rate has to match video_frames / fps to within one hop duration.
struct WindowConfig {
  std::int64_t video_frames = 5;   // frames per training window
  std::int64_t audio_steps = 16;   // mel steps per training window
  std::int64_t mel_channels = 80;  // mel filterbank size
  std::int64_t crop_height = 96;   // face crop height, divisible by 16
  std::int64_t crop_width = 96;    // face crop width, divisible by 16
  double fps = 25.0;
  std::int64_t sample_rate = 16000;
  std::int64_t mel_hop = 200;   // samples between mel steps
  std::int64_t mel_win = 800;   // analysis window in samples

  /// Throws ConfigMismatch when any field combination is invalid.
  void validate() const;

  /// Mel steps advanced per video frame (sample_rate / (fps * mel_hop)).
  double steps_per_frame() const {
    return static_cast<double>(sample_rate) / (fps * static_cast<double>(mel_hop));
  }

  /// First mel step of the audio window aligned with a video frame. Computed
  /// from the absolute frame index so there is no cumulative drift.
  std::int64_t mel_start_for_frame(std::int64_t frame_index) const;

  /// Full-scale defaults (96x96 crops, 80 mel channels).
  static WindowConfig defaults() { return WindowConfig{}; }

  /// Desk-scale configuration used by the toy corpus and the test suite.
  static WindowConfig toy();

  std::string to_json() const;
  /// Parses and validates; anything missing or malformed is a ConfigMismatch.
  static WindowConfig from_json(const std::string& text);
};

}  // namespace lipsync
