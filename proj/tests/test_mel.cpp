#include "lipsync/mel.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "lipsync/errors.hpp"
#include "lipsync/window_config.hpp"

using namespace lipsync;

namespace {

std::vector<double> sine(double hz, double seconds, std::int64_t sr) {
  std::vector<double> wav(static_cast<std::size_t>(seconds * static_cast<double>(sr)));
  for (std::size_t i = 0; i < wav.size(); ++i)
    wav[i] = std::sin(2.0 * M_PI * hz * static_cast<double>(i) / static_cast<double>(sr));
  return wav;
}

// Independent expectation for the center frequency of band d: D+2 points
// equally spaced on the 2595*log10(1+f/700) scale between 0 and Nyquist,
// band d peaking at point d+1.
double expected_center_hz(std::int64_t d, const WindowConfig& cfg) {
  const double mel_hi =
      2595.0 * std::log10(1.0 + static_cast<double>(cfg.sample_rate) / 2.0 / 700.0);
  const double m = mel_hi * static_cast<double>(d + 1) / static_cast<double>(cfg.mel_channels + 1);
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

}  // namespace

TEST_SUITE("mel") {

TEST_CASE("one second at the default config gives 77 steps") {
  WindowConfig cfg;
  auto mel = extract_mel(std::vector<double>(16000, 0.0), 16000, cfg);
  CHECK(mel.steps() == 77);  // 1 + (16000 - 800) / 200
  CHECK(mel.channels() == 80);
}

TEST_CASE("silence hits the log floor everywhere") {
  WindowConfig cfg;
  auto mel = extract_mel(std::vector<double>(8000, 0.0), 16000, cfg);
  for (std::int64_t i = 0; i < mel.values.numel(); ++i) CHECK(mel.values[i] == kMelLogFloor);
}

TEST_CASE("pure sine at a band center wins that band at every step") {
  WindowConfig cfg;
  for (std::int64_t d : {std::int64_t(20), std::int64_t(40), std::int64_t(60)}) {
    const double hz = expected_center_hz(d, cfg);
    CHECK(mel_band_center_hz(d, cfg) == doctest::Approx(hz).epsilon(1e-12));
    auto mel = extract_mel(sine(hz, 0.5, 16000), 16000, cfg);
    for (std::int64_t s = 0; s < mel.steps(); ++s) {
      std::int64_t argmax = 0;
      for (std::int64_t k = 1; k < mel.channels(); ++k)
        if (mel.values.at({s, k}) > mel.values.at({s, argmax})) argmax = k;
      REQUIRE(argmax == d);
    }
  }
}

TEST_CASE("no NaN or Inf on noisy input") {
  WindowConfig cfg;
  std::vector<double> wav(6400);
  for (std::size_t i = 0; i < wav.size(); ++i)
    wav[i] = std::sin(0.01 * static_cast<double>(i)) * 1e-8;
  auto mel = extract_mel(wav, 16000, cfg);
  for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
    CHECK(std::isfinite(mel.values[i]));
    CHECK(mel.values[i] >= kMelLogFloor);
  }
}

TEST_CASE("too-short waveform and rate mismatch are rejected") {
  WindowConfig cfg;
  CHECK_THROWS_AS(extract_mel(std::vector<double>(100, 0.0), 16000, cfg), InputTooShort);
  CHECK_THROWS_AS(extract_mel(std::vector<double>(16000, 0.0), 22050, cfg), ConfigMismatch);
}

TEST_CASE("slice starts at step 0 for frame 0 and step 16 for frame 5") {
  WindowConfig cfg;
  auto mel = extract_mel(std::vector<double>(16000, 0.0), 16000, cfg);
  // Tag each step so the slice origin is observable.
  for (std::int64_t s = 0; s < mel.steps(); ++s)
    for (std::int64_t d = 0; d < mel.channels(); ++d)
      mel.values.at({s, d}) = static_cast<double>(s);

  Tensor w0 = slice_audio_window(mel, 0, cfg);
  CHECK(w0.shape() == std::vector<std::int64_t>{16, 80});
  CHECK(w0.at({0, 0}) == 0.0);

  Tensor w5 = slice_audio_window(mel, 5, cfg);
  CHECK(w5.at({0, 0}) == 16.0);  // 5/25 s * 16000/200 steps/s
  CHECK(w5.at({15, 0}) == 31.0);
}

TEST_CASE("slice beyond the track end throws") {
  WindowConfig cfg;
  auto mel = extract_mel(std::vector<double>(16000, 0.0), 16000, cfg);
  CHECK_THROWS_AS(slice_audio_window(mel, 100, cfg), OutOfRange);
  CHECK_THROWS_AS(slice_audio_window(mel, -1, cfg), OutOfRange);
}

TEST_CASE("consecutive slice starts advance without drift") {
  WindowConfig cfg;
  const double spf = cfg.steps_per_frame();
  CHECK(spf == doctest::Approx(3.2));
  std::int64_t prev = cfg.mel_start_for_frame(0);
  for (std::int64_t i = 1; i < 1000; ++i) {
    const std::int64_t start = cfg.mel_start_for_frame(i);
    CHECK(start >= prev);
    CHECK(std::abs(static_cast<double>(start) - static_cast<double>(i) * spf) < 1.0);
    prev = start;
  }
  CHECK(cfg.mel_start_for_frame(1000) == 3200);
}

}  // TEST_SUITE
