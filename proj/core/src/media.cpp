#include "lipsync/media.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lipsync {

namespace {

namespace fs = std::filesystem;

constexpr char kMagic[4] = {'L', 'S', 'A', '1'};

template <typename T>
void write_raw(std::ofstream& out, const T* values, std::size_t count) {
  out.write(reinterpret_cast<const char*>(values),
            static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T>
void read_raw(std::ifstream& in, T* values, std::size_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T))
    throw MediaError("'" + path + "' is truncated");
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

}  // namespace

MediaClip read_lsa(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MediaError("cannot open media file '" + path + "'");
  char magic[4];
  read_raw(in, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw MediaError("'" + path + "' is not an LSA1 media file");

  std::uint64_t n = 0, h = 0, w = 0;
  double fps = 0.0;
  read_raw(in, &n, 1, path);
  read_raw(in, &h, 1, path);
  read_raw(in, &w, 1, path);
  read_raw(in, &fps, 1, path);
  if (n > 0 && (h == 0 || w == 0))
    throw MediaError("'" + path + "' declares frames with a zero dimension");
  const std::uint64_t max_pixels = 1ull << 31;
  if (n * h * w * 3 > max_pixels)
    throw MediaError("'" + path + "' is implausibly large");

  MediaClip clip;
  clip.fps = fps;
  clip.frames = Tensor({static_cast<std::int64_t>(n), static_cast<std::int64_t>(h),
                        static_cast<std::int64_t>(w), 3});
  std::vector<float> pixels(static_cast<std::size_t>(n * h * w * 3));
  read_raw(in, pixels.data(), pixels.size(), path);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    clip.frames[static_cast<std::int64_t>(i)] = static_cast<double>(pixels[i]);

  std::uint64_t rate = 0, n_samples = 0;
  read_raw(in, &rate, 1, path);
  read_raw(in, &n_samples, 1, path);
  if (n_samples > (1ull << 31)) throw MediaError("'" + path + "' is implausibly large");
  clip.audio.sample_rate = static_cast<std::int64_t>(rate);
  clip.audio.samples.resize(static_cast<std::size_t>(n_samples));
  read_raw(in, clip.audio.samples.data(), clip.audio.samples.size(), path);
  return clip;
}

void write_lsa(const std::string& path, const MediaClip& clip) {
  if (clip.frames.numel() > 0 && clip.frames.rank() != 4)
    throw ShapeError("clip frames must be (N, H, W, 3)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MediaError("cannot open '" + path + "' for writing");
  write_raw(out, kMagic, 4);

  const bool has_video = clip.frames.numel() > 0;
  const std::uint64_t n = has_video ? static_cast<std::uint64_t>(clip.frames.dim(0)) : 0;
  const std::uint64_t h = has_video ? static_cast<std::uint64_t>(clip.frames.dim(1)) : 0;
  const std::uint64_t w = has_video ? static_cast<std::uint64_t>(clip.frames.dim(2)) : 0;
  write_raw(out, &n, 1);
  write_raw(out, &h, 1);
  write_raw(out, &w, 1);
  write_raw(out, &clip.fps, 1);
  std::vector<float> pixels(static_cast<std::size_t>(clip.frames.numel()));
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<float>(clip.frames[static_cast<std::int64_t>(i)]);
  write_raw(out, pixels.data(), pixels.size());

  const std::uint64_t rate = static_cast<std::uint64_t>(clip.audio.sample_rate);
  const std::uint64_t n_samples = clip.audio.samples.size();
  write_raw(out, &rate, 1);
  write_raw(out, &n_samples, 1);
  write_raw(out, clip.audio.samples.data(), clip.audio.samples.size());
  if (!out) throw MediaError("failed writing '" + path + "'");
}

std::vector<double> waveform_f64(const AudioBlob& audio) {
  std::vector<double> wave(audio.samples.size());
  for (std::size_t i = 0; i < wave.size(); ++i)
    wave[i] = static_cast<double>(audio.samples[i]) / 32768.0;
  return wave;
}

Tensor resize_bilinear(const Tensor& src, std::int64_t out_h, std::int64_t out_w) {
  if (src.rank() != 3 || src.dim(2) != 3) throw ShapeError("resize expects (H, W, 3)");
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
  const std::int64_t in_h = src.dim(0), in_w = src.dim(1);
  Tensor dst({out_h, out_w, 3});
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
  for (std::int64_t oy = 0; oy < out_h; ++oy) {
    const double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    const std::int64_t y0 = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::floor(fy)), 0, in_h - 1);
    const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, in_h - 1);
    const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
    for (std::int64_t ox = 0; ox < out_w; ++ox) {
      const double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      const std::int64_t x0 = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::floor(fx)), 0, in_w - 1);
      const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, in_w - 1);
      const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
      for (std::int64_t c = 0; c < 3; ++c) {
        const double top = src.at({y0, x0, c}) * (1.0 - wx) + src.at({y0, x1, c}) * wx;
        const double bot = src.at({y1, x0, c}) * (1.0 - wx) + src.at({y1, x1, c}) * wx;
        dst.at({oy, ox, c}) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

namespace {

FaceBox clamp_box(FaceBox box, std::int64_t frame_h, std::int64_t frame_w) {
  const double fw = static_cast<double>(frame_w), fh = static_cast<double>(frame_h);
  const double x1 = std::clamp(box.x + box.w, 0.0, fw);
  const double y1 = std::clamp(box.y + box.h, 0.0, fh);
  box.x = std::clamp(box.x, 0.0, fw);
  box.y = std::clamp(box.y, 0.0, fh);
  box.w = x1 - box.x;
  box.h = y1 - box.y;
  return box;
}

std::vector<FaceBox> run_exec_detector(const Tensor& frames, double fps,
                                       const ExecDetector& detector) {
  static std::atomic<std::uint64_t> invocation{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("lipsync_detect_" + std::to_string(::getpid()) + "_" +
                        std::to_string(invocation.fetch_add(1)));
  fs::create_directories(dir);
  const std::string lsa_path = (dir / "frames.lsa").string();
  const std::string out_path = (dir / "boxes.txt").string();
  MediaClip clip;
  clip.frames = frames;
  clip.fps = fps;
  write_lsa(lsa_path, clip);

  const std::string cmd =
      detector.command + " " + shell_quote(lsa_path) + " > " + shell_quote(out_path);
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    fs::remove_all(dir);
    throw MediaError("face detector '" + detector.command + "' failed (exit " +
                     std::to_string(rc) + ")");
  }

  const std::int64_t n = frames.dim(0);
  std::vector<FaceBox> boxes(static_cast<std::size_t>(n));
  for (std::int64_t f = 0; f < n; ++f) boxes[static_cast<std::size_t>(f)].frame_index = f;

  std::ifstream in(out_path);
  if (!in) {
    fs::remove_all(dir);
    throw MediaError("face detector produced no output file");
  }
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    FaceBox box;
    if (!(row >> box.frame_index >> box.x >> box.y >> box.w >> box.h >> box.confidence)) {
      fs::remove_all(dir);
      throw FormatError("detector output line " + std::to_string(lineno) +
                        " is malformed: '" + line + "'");
    }
    if (box.frame_index < 0 || box.frame_index >= n) {
      fs::remove_all(dir);
      throw FormatError("detector output line " + std::to_string(lineno) +
                        " has frame_index out of range");
    }
    if (box.confidence > 0.0 && (box.w <= 0.0 || box.h <= 0.0)) {
      fs::remove_all(dir);
      throw FormatError("detector output line " + std::to_string(lineno) +
                        " has a non-positive box");
    }
    boxes[static_cast<std::size_t>(box.frame_index)] = box;
  }
  fs::remove_all(dir);

  for (FaceBox& box : boxes)
    if (box.confidence > 0.0) box = clamp_box(box, frames.dim(1), frames.dim(2));
  return boxes;
}

}  // namespace

std::vector<FaceBox> localize_faces(const Tensor& frames, double fps,
                                    const Detector& detector) {
  if (frames.rank() != 4 || frames.dim(3) != 3)
    throw ShapeError("localize_faces expects (N, H, W, 3) frames");
  if (frames.dim(0) == 0) return {};

  if (const FixedBoxDetector* fixed = std::get_if<FixedBoxDetector>(&detector)) {
    if (fixed->w <= 0.0 || fixed->h <= 0.0)
      throw ConfigMismatch("fixed-box detector needs a positive box");
    std::vector<FaceBox> boxes(static_cast<std::size_t>(frames.dim(0)));
    for (std::int64_t f = 0; f < frames.dim(0); ++f) {
      FaceBox& box = boxes[static_cast<std::size_t>(f)];
      box.frame_index = f;
      box.x = fixed->x;
      box.y = fixed->y;
      box.w = fixed->w;
      box.h = fixed->h;
      box.confidence = 1.0;
      box = clamp_box(box, frames.dim(1), frames.dim(2));
      if (box.w <= 0.0 || box.h <= 0.0)
        throw ConfigMismatch("fixed box lies outside the frame");
    }
    return boxes;
  }
  return run_exec_detector(frames, fps, std::get<ExecDetector>(detector));
}

std::vector<FaceBox> smooth_boxes(const std::vector<FaceBox>& boxes, std::int64_t width) {
  if (width < 1) throw ConfigMismatch("smoothing width must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(boxes.size());
  std::vector<FaceBox> out = boxes;
  const std::int64_t half = width / 2;
  for (std::int64_t i = 0; i < n; ++i) {
    if (boxes[static_cast<std::size_t>(i)].confidence <= 0.0) continue;
    double sx = 0.0, sy = 0.0, sw = 0.0, sh = 0.0;
    std::int64_t count = 0;
    for (std::int64_t j = std::max<std::int64_t>(0, i - half);
         j <= std::min(n - 1, i + half); ++j) {
      const FaceBox& b = boxes[static_cast<std::size_t>(j)];
      if (b.confidence <= 0.0) continue;
      sx += b.x;
      sy += b.y;
      sw += b.w;
      sh += b.h;
      ++count;
    }
    FaceBox& o = out[static_cast<std::size_t>(i)];
    o.x = sx / static_cast<double>(count);
    o.y = sy / static_cast<double>(count);
    o.w = sw / static_cast<double>(count);
    o.h = sh / static_cast<double>(count);
  }
  return out;
}

CropRect padded_rect(const FaceBox& box, const BoxPads& pads, std::int64_t frame_h,
                     std::int64_t frame_w) {
  CropRect rect;
  rect.x0 = std::clamp<std::int64_t>(std::llround(box.x - pads.left), 0, frame_w - 1);
  rect.y0 = std::clamp<std::int64_t>(std::llround(box.y - pads.top), 0, frame_h - 1);
  rect.x1 = std::clamp<std::int64_t>(std::llround(box.x + box.w + pads.right), rect.x0 + 1,
                                     frame_w);
  rect.y1 = std::clamp<std::int64_t>(std::llround(box.y + box.h + pads.bottom), rect.y0 + 1,
                                     frame_h);
  return rect;
}

}  // namespace lipsync
