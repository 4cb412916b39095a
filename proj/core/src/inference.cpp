#include "lipsync/inference.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "lipsync/checkpoint.hpp"
#include "lipsync/errors.hpp"

namespace lipsync {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_lsa_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".lsa") == 0;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

fs::path fresh_temp_dir() {
  static std::atomic<std::uint64_t> counter{0};
  fs::path dir = fs::temp_directory_path() /
                 ("lipsync_media_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  return dir;
}

void run_transcoder(const std::string& transcoder, const std::string& verb,
                    const std::string& in, const std::string& out) {
  const std::string cmd =
      transcoder + " " + verb + " " + shell_quote(in) + " " + shell_quote(out);
  const int rc = std::system(cmd.c_str());
  if (rc != 0)
    throw MediaError("transcoder '" + transcoder + " " + verb + "' failed (exit " +
                     std::to_string(rc) + ") on '" + in + "'");
}

/// Reads any supported media path into the raw format, converting through
/// the transcoder when needed.
MediaClip read_media(const std::string& path, const std::string& transcoder,
                     const fs::path& scratch) {
  if (is_lsa_path(path)) return read_lsa(path);
  if (transcoder.empty())
    throw MediaError("'" + path + "' is not .lsa and no transcoder is configured");
  const std::string tmp = (scratch / "decoded.lsa").string();
  run_transcoder(transcoder, "to-lsa", path, tmp);
  return read_lsa(tmp);
}

struct FrameGroups {
  std::int64_t n_out = 0;       // output frame count
  std::int64_t generated = 0;   // frames inside complete covered windows
};

FrameGroups plan_frames(std::int64_t video_frames, double fps, std::int64_t audio_samples,
                        std::int64_t sample_rate, std::int64_t mel_steps,
                        const WindowConfig& wcfg, bool loop_video) {
  const double audio_seconds =
      static_cast<double>(audio_samples) / static_cast<double>(sample_rate);
  const double audio_frames = audio_seconds * fps;
  FrameGroups plan;
  if (loop_video) {
    plan.n_out = static_cast<std::int64_t>(std::ceil(audio_frames - 1e-9));
  } else {
    plan.n_out =
        std::min(video_frames, static_cast<std::int64_t>(std::floor(audio_frames + 1e-9)));
  }
  if (plan.n_out < 1)
    throw InputTooShort("audio covers no video frames at " + std::to_string(fps) + " fps");

  const std::int64_t tv = wcfg.video_frames;
  std::int64_t groups = 0;
  while ((groups + 1) * tv <= plan.n_out &&
         wcfg.mel_start_for_frame((groups + 1) * tv - 1) + wcfg.audio_steps <= mel_steps)
    ++groups;
  if (groups == 0)
    throw InputTooShort("audio does not cover a single discrimination window");
  plan.generated = groups * tv;
  return plan;
}

}  // namespace

void save_inference_checkpoint(const ParameterSet& params, const GeneratorConfig& gen_cfg,
                               const WindowConfig& wcfg, const std::string& path) {
  gen_cfg.validate();
  wcfg.validate();
  require_window_match(gen_cfg, wcfg);
  json j;
  j["window"] = json::parse(wcfg.to_json());
  j["generator"] = json::parse(gen_cfg.to_json());
  save_checkpoint(params, "lipsync_inference", j.dump(), path);
}

InferenceCheckpoint load_inference_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path, "lipsync_inference");
  json j;
  try {
    j = json::parse(ckpt.config_json);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path + "' has corrupt config: " + e.what());
  }
  if (!j.contains("window") || !j.contains("generator"))
    throw ConfigMismatch("checkpoint '" + path + "' lacks window/generator configs");

  InferenceCheckpoint out;
  out.window = WindowConfig::from_json(j["window"].dump());
  out.generator = GeneratorConfig::from_json(j["generator"].dump());
  out.generator.validate();
  require_window_match(out.generator, out.window);

  const ParameterSet expected = LipGenerator(out.generator).init_params(0);
  if (expected.names() != ckpt.params.names())
    throw ConfigMismatch("checkpoint '" + path + "' parameter names do not match its config");
  for (const auto& name : expected.names()) {
    if (!expected.at(name).same_shape(ckpt.params.at(name)))
      throw ConfigMismatch("checkpoint '" + path + "' array '" + name +
                           "' does not match its config");
  }
  out.params = std::move(ckpt.params);
  return out;
}

InferenceResult lipsync_video(const InferenceJob& job) {
  InferenceCheckpoint ckpt = load_inference_checkpoint(job.checkpoint_path);
  const WindowConfig& wcfg = ckpt.window;

  const fs::path scratch = fresh_temp_dir();
  InferenceResult result;
  try {
    MediaClip video = read_media(job.video_path, job.transcoder, scratch);
    if (video.frames.numel() == 0)
      throw MediaError("'" + job.video_path + "' has no video stream");
    MediaClip audio_clip = read_media(job.audio_path, job.transcoder, scratch);
    if (audio_clip.audio.samples.empty())
      throw MediaError("'" + job.audio_path + "' has no audio stream");

    if (std::abs(video.fps - wcfg.fps) > 1e-9)
      throw ConfigMismatch("video fps " + std::to_string(video.fps) +
                           " does not match the checkpoint's " + std::to_string(wcfg.fps));
    if (audio_clip.audio.sample_rate != wcfg.sample_rate)
      throw ConfigMismatch("audio sample rate does not match the checkpoint");

    const MelSpectrogram mel =
        extract_mel(waveform_f64(audio_clip.audio), wcfg.sample_rate, wcfg);

    const std::int64_t n_src = video.frames.dim(0);
    const std::int64_t frame_h = video.frames.dim(1);
    const std::int64_t frame_w = video.frames.dim(2);
    const FrameGroups plan =
        plan_frames(n_src, video.fps, static_cast<std::int64_t>(audio_clip.audio.samples.size()),
                    wcfg.sample_rate, mel.steps(), wcfg, job.loop_video);

    Tensor out_frames({plan.n_out, frame_h, frame_w, 3});
    const std::int64_t frame_elems = frame_h * frame_w * 3;
    for (std::int64_t f = 0; f < plan.n_out; ++f)
      std::copy(video.frames.data() + (f % n_src) * frame_elems,
                video.frames.data() + (f % n_src + 1) * frame_elems,
                out_frames.data() + f * frame_elems);

    std::vector<FaceBox> boxes = localize_faces(out_frames, video.fps, job.detector);
    if (job.smooth) boxes = smooth_boxes(boxes);

    const LipGenerator gen(ckpt.generator);
    const std::int64_t ch = wcfg.crop_height, cw = wcfg.crop_width;
    const std::int64_t crop_elems = ch * cw * 3;
    // Frames are generated in bounded batches to keep memory flat.
    const std::int64_t kChunk = 80;
    std::vector<std::int64_t> pending;
    std::vector<CropRect> rects(static_cast<std::size_t>(plan.generated));

    auto flush = [&]() {
      if (pending.empty()) return;
      const std::int64_t m = static_cast<std::int64_t>(pending.size());
      Tensor reference({m, ch, cw, 3});
      Tensor audio_batch({m, wcfg.audio_steps, wcfg.mel_channels});
      for (std::int64_t r = 0; r < m; ++r) {
        const std::int64_t f = pending[static_cast<std::size_t>(r)];
        const CropRect& rect = rects[static_cast<std::size_t>(f)];
        Tensor crop({rect.height(), rect.width(), 3});
        for (std::int64_t y = 0; y < rect.height(); ++y)
          for (std::int64_t x = 0; x < rect.width(); ++x)
            for (std::int64_t c = 0; c < 3; ++c)
              crop.at({y, x, c}) = out_frames.at({f, rect.y0 + y, rect.x0 + x, c});
        Tensor resized = resize_bilinear(crop, ch, cw);
        std::copy(resized.data(), resized.data() + crop_elems,
                  reference.data() + r * crop_elems);
        Tensor window = slice_audio_window(mel, f, wcfg);
        std::copy(window.data(), window.data() + window.numel(),
                  audio_batch.data() + r * window.numel());
      }
      Tensor prior = mask_lower_half(reference);
      Tensor generated = gen.generate_frames(ckpt.params, reference, prior, audio_batch);
      for (std::int64_t r = 0; r < m; ++r) {
        const std::int64_t f = pending[static_cast<std::size_t>(r)];
        const CropRect& rect = rects[static_cast<std::size_t>(f)];
        Tensor face({ch, cw, 3});
        std::copy(generated.data() + r * crop_elems, generated.data() + (r + 1) * crop_elems,
                  face.data());
        Tensor restored = resize_bilinear(face, rect.height(), rect.width());
        for (std::int64_t y = 0; y < rect.height(); ++y)
          for (std::int64_t x = 0; x < rect.width(); ++x)
            for (std::int64_t c = 0; c < 3; ++c)
              out_frames.at({f, rect.y0 + y, rect.x0 + x, c}) = restored.at({y, x, c});
      }
      result.frames_generated += m;
      pending.clear();
    };

    for (std::int64_t f = 0; f < plan.generated; ++f) {
      const FaceBox& box = boxes[static_cast<std::size_t>(f)];
      if (box.confidence <= 0.0) {
        ++result.frames_skipped;
        result.warnings.push_back("frame " + std::to_string(f) +
                                  ": no face found; passed through");
        continue;
      }
      rects[static_cast<std::size_t>(f)] = padded_rect(box, job.pads, frame_h, frame_w);
      pending.push_back(f);
      if (static_cast<std::int64_t>(pending.size()) == kChunk) flush();
    }
    flush();

    MediaClip out;
    out.frames = std::move(out_frames);
    out.fps = video.fps;
    out.audio = std::move(audio_clip.audio);
    if (is_lsa_path(job.output_path)) {
      write_lsa(job.output_path, out);
    } else {
      if (job.transcoder.empty())
        throw MediaError("'" + job.output_path +
                         "' is not .lsa and no transcoder is configured");
      const std::string tmp = (scratch / "encoded.lsa").string();
      write_lsa(tmp, out);
      run_transcoder(job.transcoder, "from-lsa", tmp, job.output_path);
    }
    result.frames_written = plan.n_out;
  } catch (...) {
    fs::remove_all(scratch);
    throw;
  }
  fs::remove_all(scratch);
  return result;
}

}  // namespace lipsync
