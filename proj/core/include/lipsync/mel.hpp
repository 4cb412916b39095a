#pragma once

#include <cstdint>
#include <vector>

#include "lipsync/tensor.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

/// Log-mel spectrogram of a whole track: values is (total_steps, D).
struct MelSpectrogram {
  Tensor values;
  std::int64_t sample_rate = 0;
  std::int64_t mel_hop = 0;

  std::int64_t steps() const { return values.empty() ? 0 : values.dim(0); }
  std::int64_t channels() const { return values.empty() ? 0 : values.dim(1); }
};

/// Natural-log floor applied to mel energies; silence maps to exactly this.
inline constexpr double kMelLogFloor = -5.0;

/// STFT + mel filterbank front-end.
///
/// Construction (documented because tests derive expected band indices from
/// it): periodic Hann window of mel_win samples, FFT of the same size, power
/// spectrum, then D triangular filters with peaks equally spaced on the HTK
/// mel scale (2595 * log10(1 + f/700)) between 0 Hz and sample_rate/2. Output
/// is ln(energy) floored at kMelLogFloor.
///
/// Step count is 1 + floor((len - mel_win) / mel_hop); every step sees a full
/// window, no padding.
MelSpectrogram extract_mel(const std::vector<double>& waveform, std::int64_t sample_rate,
                           const WindowConfig& cfg);

/// Center frequency in Hz of mel channel `d` under the construction above.
double mel_band_center_hz(std::int64_t d, const WindowConfig& cfg);

/// The (audio_steps, D) slice aligned with a video frame. Throws OutOfRange
/// when the window does not fit inside the spectrogram.
Tensor slice_audio_window(const MelSpectrogram& mel, std::int64_t frame_index,
                          const WindowConfig& cfg);

}  // namespace lipsync
