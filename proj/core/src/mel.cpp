#include "lipsync/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

#include "lipsync/errors.hpp"

namespace lipsync {
namespace {

// FFTW's planner is not reentrant; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters with peaks equally spaced on the mel scale between
// 0 Hz and Nyquist. Returned as a dense (D, bins) weight matrix.
std::vector<double> build_filterbank(const WindowConfig& cfg, std::int64_t bins) {
  const std::int64_t d_count = cfg.mel_channels;
  const double mel_hi = hz_to_mel(static_cast<double>(cfg.sample_rate) / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(d_count) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(d_count + 1));

  std::vector<double> weights(static_cast<std::size_t>(d_count * bins), 0.0);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.mel_win);
  for (std::int64_t d = 0; d < d_count; ++d) {
    const double lo = edges[static_cast<std::size_t>(d)];
    const double mid = edges[static_cast<std::size_t>(d) + 1];
    const double hi = edges[static_cast<std::size_t>(d) + 2];
    for (std::int64_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > lo && f < hi) {
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
      weights[static_cast<std::size_t>(d * bins + k)] = w;
    }
  }
  return weights;
}

}  // namespace

double mel_band_center_hz(std::int64_t d, const WindowConfig& cfg) {
  if (d < 0 || d >= cfg.mel_channels) throw OutOfRange("mel band index out of range");
  const double mel_hi = hz_to_mel(static_cast<double>(cfg.sample_rate) / 2.0);
  return mel_to_hz(mel_hi * static_cast<double>(d + 1) / static_cast<double>(cfg.mel_channels + 1));
}

MelSpectrogram extract_mel(const std::vector<double>& waveform, std::int64_t sample_rate,
                           const WindowConfig& cfg) {
  cfg.validate();
  if (sample_rate != cfg.sample_rate)
    throw ConfigMismatch("waveform sample rate " + std::to_string(sample_rate) +
                         " does not match configured " + std::to_string(cfg.sample_rate));
  const std::int64_t len = static_cast<std::int64_t>(waveform.size());
  if (len < cfg.mel_win)
    throw InputTooShort("waveform of " + std::to_string(len) + " samples is shorter than one " +
                        std::to_string(cfg.mel_win) + "-sample analysis window");

  const std::int64_t n = cfg.mel_win;
  const std::int64_t bins = n / 2 + 1;
  const std::int64_t steps = 1 + (len - n) / cfg.mel_hop;

  std::vector<double> window(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    window[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));

  const std::vector<double> filters = build_filterbank(cfg, bins);

  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }

  MelSpectrogram mel;
  mel.values = Tensor::zeros({steps, cfg.mel_channels});
  mel.sample_rate = sample_rate;
  mel.mel_hop = cfg.mel_hop;

  std::vector<double> power(static_cast<std::size_t>(bins));
  for (std::int64_t s = 0; s < steps; ++s) {
    const std::int64_t off = s * cfg.mel_hop;
    for (std::int64_t i = 0; i < n; ++i)
      in[i] = waveform[static_cast<std::size_t>(off + i)] * window[static_cast<std::size_t>(i)];
    fftw_execute(plan);
    for (std::int64_t k = 0; k < bins; ++k)
      power[static_cast<std::size_t>(k)] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    for (std::int64_t d = 0; d < cfg.mel_channels; ++d) {
      double energy = 0.0;
      const double* w = filters.data() + d * bins;
      for (std::int64_t k = 0; k < bins; ++k) energy += w[k] * power[static_cast<std::size_t>(k)];
      mel.values.at({s, d}) =
          energy > 0.0 ? std::max(std::log(energy), kMelLogFloor) : kMelLogFloor;
    }
  }

  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return mel;
}

Tensor slice_audio_window(const MelSpectrogram& mel, std::int64_t frame_index,
                          const WindowConfig& cfg) {
  if (mel.sample_rate != cfg.sample_rate || mel.mel_hop != cfg.mel_hop)
    throw ConfigMismatch("mel spectrogram provenance does not match the window config");
  if (mel.channels() != cfg.mel_channels)
    throw ConfigMismatch("mel spectrogram has " + std::to_string(mel.channels()) +
                         " channels, config expects " + std::to_string(cfg.mel_channels));
  const std::int64_t start = cfg.mel_start_for_frame(frame_index);
  if (frame_index < 0 || start < 0 || start + cfg.audio_steps > mel.steps())
    throw OutOfRange("audio window for frame " + std::to_string(frame_index) +
                     " (mel steps " + std::to_string(start) + ".." +
                     std::to_string(start + cfg.audio_steps) + ") is outside the track of " +
                     std::to_string(mel.steps()) + " steps");

  Tensor out = Tensor::zeros({cfg.audio_steps, cfg.mel_channels});
  const double* src = mel.values.data() + start * cfg.mel_channels;
  std::copy(src, src + cfg.audio_steps * cfg.mel_channels, out.data());
  return out;
}

}  // namespace lipsync
