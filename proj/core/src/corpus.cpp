#include "lipsync/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lipsync/container.hpp"
#include "lipsync/errors.hpp"

namespace lipsync {
namespace {

namespace fs = std::filesystem;

// Largest frame index whose audio window still fits in the mel array, capped
// so a full video window starting there fits in the track as well.
std::int64_t max_window_start(const FaceTrack& track, const MelSpectrogram& mel,
                              const WindowConfig& cfg) {
  std::int64_t hi = track.num_frames() - cfg.video_frames;
  while (hi >= 0 && cfg.mel_start_for_frame(hi) + cfg.audio_steps > mel.steps()) --hi;
  return hi;
}

struct Color {
  double r, g, b;
};

void paint_ellipse(Tensor& frames, std::int64_t frame, double cr, double cc, double ry,
                   double rx, Color col) {
  const std::int64_t h = frames.dim(1);
  const std::int64_t w = frames.dim(2);
  const double soft = std::max(rx, ry);  // ~1px anti-aliased rim
  const std::int64_t r0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cr - ry - 2));
  const std::int64_t r1 = std::min<std::int64_t>(h - 1, static_cast<std::int64_t>(cr + ry + 2));
  const std::int64_t c0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cc - rx - 2));
  const std::int64_t c1 = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(cc + rx + 2));
  for (std::int64_t r = r0; r <= r1; ++r) {
    for (std::int64_t c = c0; c <= c1; ++c) {
      const double dr = (static_cast<double>(r) - cr) / ry;
      const double dc = (static_cast<double>(c) - cc) / rx;
      const double d = std::sqrt(dr * dr + dc * dc);
      const double cov = std::clamp((1.0 - d) * soft, 0.0, 1.0);
      if (cov <= 0.0) continue;
      double* px = frames.data() + ((frame * h + r) * w + c) * 3;
      px[0] = px[0] * (1.0 - cov) + col.r * cov;
      px[1] = px[1] * (1.0 - cov) + col.g * cov;
      px[2] = px[2] * (1.0 - cov) + col.b * cov;
    }
  }
}

std::vector<double> band_limited_envelope(Rng& rng, std::int64_t frames) {
  std::vector<double> raw(static_cast<std::size_t>(frames));
  for (auto& v : raw) v = rng.uniform();

  const double sigma = 1.5;
  const int radius = 4;
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= ksum;

  std::vector<double> env(static_cast<std::size_t>(frames));
  for (std::int64_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      std::int64_t j = t + i;
      if (j < 0) j = -j;                            // reflect at the edges
      if (j >= frames) j = 2 * (frames - 1) - j;
      acc += kernel[static_cast<std::size_t>(i + radius)] * raw[static_cast<std::size_t>(j)];
    }
    env[static_cast<std::size_t>(t)] = acc;
  }

  const auto [lo_it, hi_it] = std::minmax_element(env.begin(), env.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) return std::vector<double>(static_cast<std::size_t>(frames), 0.5);
  for (auto& v : env) v = (v - lo) / (hi - lo);
  return env;
}

}  // namespace

Tensor mask_lower_half(const Tensor& frames) {
  if (frames.rank() < 3 || frames.dim(frames.rank() - 1) != 3)
    throw ShapeError("mask_lower_half expects (..., H, W, 3), got " +
                     shape_to_string(frames.shape()));
  const std::int64_t h = frames.dim(frames.rank() - 3);
  const std::int64_t w = frames.dim(frames.rank() - 2);
  if (h % 2 != 0) throw ConfigMismatch("mask_lower_half needs an even height, got " +
                                       std::to_string(h));
  Tensor out = frames;
  const std::int64_t frame_elems = h * w * 3;
  const std::int64_t count = frames.numel() / frame_elems;
  for (std::int64_t f = 0; f < count; ++f) {
    double* lower = out.data() + f * frame_elems + (h / 2) * w * 3;
    std::fill(lower, lower + (h / 2) * w * 3, 0.0);
  }
  return out;
}

SyncPair sample_sync_pair(const FaceTrack& track, const MelSpectrogram& mel,
                          const WindowConfig& cfg, std::uint64_t rng_seed, bool positive) {
  cfg.validate();
  const std::int64_t tv = cfg.video_frames;
  const std::int64_t h = cfg.crop_height;
  const std::int64_t w = cfg.crop_width;
  track.frames.require_shape({track.num_frames(), h, w, 3}, "track frames");

  const std::int64_t max_start = max_window_start(track, mel, cfg);
  if (max_start < 0)
    throw InputTooShort("track '" + track.source_id + "' cannot supply a full window");
  if (!positive && max_start < tv)
    throw InputTooShort("track '" + track.source_id +
                        "' is too short for two disjoint windows");

  Rng rng(rng_seed);
  const std::int64_t v = rng.uniform_int(max_start + 1);
  std::int64_t a = v;
  if (!positive) {
    const std::int64_t left = v - tv >= 0 ? v - tv + 1 : 0;
    const std::int64_t right = max_start - (v + tv) >= 0 ? max_start - v - tv + 1 : 0;
    std::int64_t k = rng.uniform_int(left + right);
    a = k < left ? k : v + tv + (k - left);
  }

  SyncPair pair;
  pair.label = positive ? 1 : 0;
  pair.video_index = v;
  pair.audio_index = a;
  pair.audio_window = slice_audio_window(mel, a, cfg);
  pair.face_window = Tensor::zeros({tv, h / 2, w, 3});
  for (std::int64_t j = 0; j < tv; ++j) {
    const double* src = track.frames.data() + (((v + j) * h) + h / 2) * w * 3;
    std::copy(src, src + (h / 2) * w * 3, pair.face_window.data() + j * (h / 2) * w * 3);
  }
  return pair;
}

GeneratorBatch build_generator_batch(const std::vector<FaceTrack>& tracks,
                                     const std::vector<MelSpectrogram>& mels,
                                     const WindowConfig& cfg, std::uint64_t rng_seed,
                                     std::int64_t batch_size) {
  cfg.validate();
  if (tracks.empty() || tracks.size() != mels.size())
    throw InputTooShort("need a non-empty, equally sized track/mel list");
  if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");

  const std::int64_t tv = cfg.video_frames;
  const std::int64_t h = cfg.crop_height;
  const std::int64_t w = cfg.crop_width;
  const std::int64_t lead = batch_size * tv;

  GeneratorBatch batch;
  batch.reference = Tensor::zeros({lead, h, w, 3});
  batch.pose_prior = Tensor::zeros({lead, h, w, 3});
  batch.target = Tensor::zeros({lead, h, w, 3});
  batch.audio = Tensor::zeros({lead, cfg.audio_steps, cfg.mel_channels});

  Rng rng(rng_seed);
  const std::int64_t frame_elems = h * w * 3;
  for (std::int64_t n = 0; n < batch_size; ++n) {
    const std::size_t ti = rng.uniform_int(static_cast<std::int64_t>(tracks.size()));
    const FaceTrack& track = tracks[ti];
    const MelSpectrogram& mel = mels[ti];
    track.frames.require_shape({track.num_frames(), h, w, 3}, "track frames");

    // Audio must fit for the last frame of the target window.
    std::int64_t max_t0 = track.num_frames() - tv;
    while (max_t0 >= 0 &&
           cfg.mel_start_for_frame(max_t0 + tv - 1) + cfg.audio_steps > mel.steps())
      --max_t0;
    if (max_t0 < 0)
      throw InputTooShort("track '" + track.source_id + "' cannot supply a target window");
    const std::int64_t t0 = rng.uniform_int(max_t0 + 1);

    const std::int64_t max_r0 = track.num_frames() - tv;
    std::int64_t r0;
    if (max_r0 >= 1) {
      // Uniform over all starts except t0 so identity never leaks the target.
      std::int64_t k = rng.uniform_int(max_r0);
      r0 = k >= std::min(t0, max_r0) ? k + 1 : k;
      if (r0 > max_r0) r0 = max_r0;  // t0 beyond max_r0 cannot happen, guard anyway
    } else {
      r0 = 0;
    }

    for (std::int64_t j = 0; j < tv; ++j) {
      const std::int64_t row = n * tv + j;
      std::copy(track.frames.data() + (r0 + j) * frame_elems,
                track.frames.data() + (r0 + j + 1) * frame_elems,
                batch.reference.data() + row * frame_elems);
      std::copy(track.frames.data() + (t0 + j) * frame_elems,
                track.frames.data() + (t0 + j + 1) * frame_elems,
                batch.target.data() + row * frame_elems);
      Tensor window = slice_audio_window(mel, t0 + j, cfg);
      std::copy(window.data(), window.data() + window.numel(),
                batch.audio.data() + row * window.numel());
    }
  }
  batch.pose_prior = mask_lower_half(batch.target);
  return batch;
}

ToyCorpus synth_toy_corpus(const WindowConfig& cfg, std::int64_t n_tracks, std::uint64_t seed,
                           std::int64_t num_frames) {
  cfg.validate();
  if (n_tracks < 2) throw ContractViolation("synth_toy_corpus needs n_tracks >= 2");
  if (num_frames < 2 * cfg.video_frames)
    throw ContractViolation("num_frames must allow two disjoint windows");

  const std::int64_t h = cfg.crop_height;
  const std::int64_t w = cfg.crop_width;
  const double spf = cfg.steps_per_frame();

  ToyCorpus corpus;
  for (std::int64_t i = 0; i < n_tracks; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));

    const Color bg{0.12 + 0.2 * rng.uniform(), 0.12 + 0.2 * rng.uniform(),
                   0.12 + 0.2 * rng.uniform()};
    const Color skin{0.65 + 0.2 * rng.uniform(), 0.5 + 0.18 * rng.uniform(),
                     0.4 + 0.15 * rng.uniform()};
    const Color eye{0.05, 0.05, 0.1};
    const Color mouth{0.35, 0.05, 0.06};
    const double eye_dy = 0.02 * rng.uniform();  // small per-identity variation

    const std::vector<double> env = band_limited_envelope(rng, num_frames);

    FaceTrack track;
    track.fps = cfg.fps;
    track.source_id = "toy_" + std::to_string(i);
    track.frames = Tensor::zeros({num_frames, h, w, 3});
    for (std::int64_t t = 0; t < num_frames; ++t) {
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
          double* px = track.frames.data() + ((t * h + r) * w + c) * 3;
          const double shade = 1.0 - 0.2 * static_cast<double>(r) / static_cast<double>(h);
          px[0] = bg.r * shade;
          px[1] = bg.g * shade;
          px[2] = bg.b * shade;
        }
      const double hd = static_cast<double>(h);
      const double wd = static_cast<double>(w);
      paint_ellipse(track.frames, t, 0.46 * hd, 0.5 * wd, 0.38 * hd, 0.34 * wd, skin);
      paint_ellipse(track.frames, t, (0.32 + eye_dy) * hd, 0.36 * wd, 0.05 * hd, 0.05 * wd, eye);
      paint_ellipse(track.frames, t, (0.32 + eye_dy) * hd, 0.64 * wd, 0.05 * hd, 0.05 * wd, eye);
      const double open = env[static_cast<std::size_t>(t)];
      paint_ellipse(track.frames, t, 0.72 * hd, 0.5 * wd, (0.02 + 0.12 * open) * hd, 0.16 * wd,
                    mouth);
    }
    for (std::int64_t k = 0; k < track.frames.numel(); ++k)
      track.frames[k] = std::clamp(track.frames[k], 0.0, 1.0);

    // Mel rises linearly with the mouth envelope under a per-track band
    // profile, so audio energy and mouth opening share the same time course.
    const std::int64_t steps =
        static_cast<std::int64_t>(std::ceil(static_cast<double>(num_frames - 1) * spf)) +
        cfg.audio_steps + 2;
    const double center = (0.3 + 0.4 * rng.uniform()) * static_cast<double>(cfg.mel_channels);
    const double width = 0.15 * static_cast<double>(cfg.mel_channels);

    MelSpectrogram mel;
    mel.sample_rate = cfg.sample_rate;
    mel.mel_hop = cfg.mel_hop;
    mel.values = Tensor::zeros({steps, cfg.mel_channels});
    for (std::int64_t s = 0; s < steps; ++s) {
      const double p = static_cast<double>(s) / spf;
      double e;
      if (p >= static_cast<double>(num_frames - 1)) {
        e = env[static_cast<std::size_t>(num_frames - 1)];
      } else {
        const std::int64_t t0 = static_cast<std::int64_t>(p);
        const double frac = p - static_cast<double>(t0);
        e = env[static_cast<std::size_t>(t0)] * (1.0 - frac) +
            env[static_cast<std::size_t>(t0 + 1)] * frac;
      }
      for (std::int64_t d = 0; d < cfg.mel_channels; ++d) {
        const double z = (static_cast<double>(d) - center) / width;
        mel.values.at({s, d}) = kMelLogFloor + 4.5 * std::exp(-0.5 * z * z) * e;
      }
    }

    corpus.tracks.push_back(std::move(track));
    corpus.mels.push_back(std::move(mel));
  }
  return corpus;
}

void save_face_track(const FaceTrack& track, const std::string& path) {
  ArrayContainer c;
  c.put("frames", track.frames, DType::f32);
  c.put("fps", Tensor::scalar(track.fps));
  c.put_string("source_id", track.source_id);
  c.save(path);
}

FaceTrack load_face_track(const std::string& path) {
  ArrayContainer c = ArrayContainer::load(path);
  FaceTrack track;
  track.frames = c.get("frames");
  if (track.frames.rank() != 4 || track.frames.dim(3) != 3)
    throw FormatError("face track '" + path + "' has frames of shape " +
                      shape_to_string(track.frames.shape()) + ", expected (N, H, W, 3)");
  track.fps = c.get("fps")[0];
  track.source_id = c.get_string("source_id");
  return track;
}

void save_mel(const MelSpectrogram& mel, const std::string& path) {
  ArrayContainer c;
  c.put("mel", mel.values);
  c.put("sample_rate", Tensor::scalar(static_cast<double>(mel.sample_rate)), DType::i64);
  c.put("mel_hop", Tensor::scalar(static_cast<double>(mel.mel_hop)), DType::i64);
  c.save(path);
}

MelSpectrogram load_mel(const std::string& path) {
  ArrayContainer c = ArrayContainer::load(path);
  MelSpectrogram mel;
  mel.values = c.get("mel");
  if (mel.values.rank() != 2)
    throw FormatError("mel file '" + path + "' has values of shape " +
                      shape_to_string(mel.values.shape()) + ", expected (steps, D)");
  mel.sample_rate = static_cast<std::int64_t>(c.get("sample_rate")[0]);
  mel.mel_hop = static_cast<std::int64_t>(c.get("mel_hop")[0]);
  return mel;
}

void write_corpus_manifest(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  for (const auto& r : records) f << r.track_id << '\t' << r.frames_path << '\t'
                                  << r.audio_path << '\n';
  if (!f) throw FormatError("short write to '" + path + "'");
}

std::vector<CorpusRecord> read_corpus_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    CorpusRecord r;
    if (!std::getline(ss, r.track_id, '\t') || !std::getline(ss, r.frames_path, '\t') ||
        !std::getline(ss, r.audio_path, '\t') || r.track_id.empty() || r.frames_path.empty() ||
        r.audio_path.empty())
      throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) +
                        " is not `track_id<TAB>frames_path<TAB>audio_path`");
    records.push_back(std::move(r));
  }
  return records;
}

std::string save_corpus(const ToyCorpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<CorpusRecord> records;
  for (std::size_t i = 0; i < corpus.tracks.size(); ++i) {
    char frames_name[32], mel_name[32];
    std::snprintf(frames_name, sizeof(frames_name), "track_%03zu.lsa", i);
    std::snprintf(mel_name, sizeof(mel_name), "mel_%03zu.lsa", i);
    save_face_track(corpus.tracks[i], (fs::path(dir) / frames_name).string());
    save_mel(corpus.mels[i], (fs::path(dir) / mel_name).string());
    records.push_back({corpus.tracks[i].source_id, frames_name, mel_name});
  }
  const std::string manifest = (fs::path(dir) / "manifest.tsv").string();
  write_corpus_manifest(manifest, records);
  return manifest;
}

ToyCorpus load_corpus(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  ToyCorpus corpus;
  for (const auto& r : read_corpus_manifest(manifest_path)) {
    FaceTrack track = load_face_track((base / r.frames_path).string());
    track.source_id = r.track_id;
    corpus.tracks.push_back(std::move(track));
    corpus.mels.push_back(load_mel((base / r.audio_path).string()));
  }
  return corpus;
}

}  // namespace lipsync
