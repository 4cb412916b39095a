#include "lipsync/window_config.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <string>

#include "lipsync/errors.hpp"

namespace lipsync {

void WindowConfig::validate() const {
  if (video_frames < 1) throw ConfigMismatch("video_frames must be >= 1");
  if (mel_channels < 1) throw ConfigMismatch("mel_channels must be >= 1");
  if (audio_steps < 1) throw ConfigMismatch("audio_steps must be >= 1");
  if (crop_height < 16 || crop_height % 16 != 0)
    throw ConfigMismatch("crop_height must be a positive multiple of 16, got " +
                         std::to_string(crop_height));
  if (crop_width < 16 || crop_width % 16 != 0)
    throw ConfigMismatch("crop_width must be a positive multiple of 16, got " +
                         std::to_string(crop_width));
  if (fps <= 0.0) throw ConfigMismatch("fps must be positive");
  if (sample_rate < 1 || mel_hop < 1 || mel_win < 1)
    throw ConfigMismatch("sample_rate, mel_hop and mel_win must be positive");
  if (mel_win < mel_hop) throw ConfigMismatch("mel_win must be >= mel_hop");

  const double audio_span = static_cast<double>(audio_steps) * mel_hop / sample_rate;
  const double video_span = static_cast<double>(video_frames) / fps;
  const double hop_duration = static_cast<double>(mel_hop) / sample_rate;
  if (std::abs(audio_span - video_span) > hop_duration + 1e-12)
    throw ConfigMismatch("audio window (" + std::to_string(audio_span) +
                         " s) does not span the video window (" + std::to_string(video_span) +
                         " s) within one hop");
}

std::int64_t WindowConfig::mel_start_for_frame(std::int64_t frame_index) const {
  return std::llround(static_cast<double>(frame_index) * steps_per_frame());
}

WindowConfig WindowConfig::toy() {
  WindowConfig cfg;
  cfg.crop_height = 32;
  cfg.crop_width = 32;
  cfg.mel_channels = 32;
  return cfg;
}

std::string WindowConfig::to_json() const {
  nlohmann::json j;
  j["video_frames"] = video_frames;
  j["audio_steps"] = audio_steps;
  j["mel_channels"] = mel_channels;
  j["crop_height"] = crop_height;
  j["crop_width"] = crop_width;
  j["fps"] = fps;
  j["sample_rate"] = sample_rate;
  j["mel_hop"] = mel_hop;
  j["mel_win"] = mel_win;
  return j.dump();
}

WindowConfig WindowConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigMismatch(std::string("window config is not valid JSON: ") + e.what());
  }
  WindowConfig cfg;
  try {
    cfg.video_frames = j.at("video_frames").get<std::int64_t>();
    cfg.audio_steps = j.at("audio_steps").get<std::int64_t>();
    cfg.mel_channels = j.at("mel_channels").get<std::int64_t>();
    cfg.crop_height = j.at("crop_height").get<std::int64_t>();
    cfg.crop_width = j.at("crop_width").get<std::int64_t>();
    cfg.fps = j.at("fps").get<double>();
    cfg.sample_rate = j.at("sample_rate").get<std::int64_t>();
    cfg.mel_hop = j.at("mel_hop").get<std::int64_t>();
    cfg.mel_win = j.at("mel_win").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigMismatch(std::string("window config is missing fields: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace lipsync
