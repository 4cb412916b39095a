#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lipsync/corpus.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/inference.hpp"
#include "lipsync/rng.hpp"

using namespace lipsync;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const char* stem) {
  fs::path dir = fs::temp_directory_path() / stem;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_script(const std::string& path, const std::string& body) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "#!/bin/sh\n" << body;
  }
  fs::permissions(path, fs::perms::owner_all | fs::perms::group_read |
                            fs::perms::others_read);
}

Tensor random_frames(std::int64_t n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, h, w, 3});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

AudioBlob tone(std::int64_t n_samples, std::int64_t rate) {
  AudioBlob audio;
  audio.sample_rate = rate;
  audio.samples.resize(static_cast<std::size_t>(n_samples));
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(rate);
    audio.samples[static_cast<std::size_t>(i)] = static_cast<std::int16_t>(
        std::llround(9000.0 * std::sin(2.0 * 3.14159265358979 * 220.0 * t) +
                     3000.0 * std::sin(2.0 * 3.14159265358979 * 37.0 * t)));
  }
  return audio;
}

/// A 48x48 video whose central 32x32 is a toy face track; the border is a
/// flat 0.25 so paste-back locality is easy to check.
MediaClip framed_clip(std::int64_t n_frames, double fps, std::int64_t audio_samples) {
  static ToyCorpus corpus = synth_toy_corpus(WindowConfig::toy(), 2, 21, 60);
  MediaClip clip;
  clip.fps = fps;
  clip.frames = Tensor({n_frames, 48, 48, 3});
  for (std::int64_t i = 0; i < clip.frames.numel(); ++i) clip.frames[i] = 0.25;
  for (std::int64_t f = 0; f < n_frames; ++f)
    for (std::int64_t y = 0; y < 32; ++y)
      for (std::int64_t x = 0; x < 32; ++x)
        for (std::int64_t c = 0; c < 3; ++c)
          clip.frames.at({f, 8 + y, 8 + x, c}) =
              corpus.tracks[0].frames.at({f % 60, y, x, c});
  clip.audio = tone(audio_samples, 16000);
  return clip;
}

std::string make_checkpoint(const std::string& dir) {
  const GeneratorConfig gcfg = GeneratorConfig::toy();
  ParameterSet params = LipGenerator(gcfg).init_params(3);
  const std::string path = dir + "/inference.ckpt";
  save_inference_checkpoint(params, gcfg, WindowConfig::toy(), path);
  return path;
}

}  // namespace

TEST_SUITE("media") {

TEST_CASE("lsa files round trip") {
  const std::string dir = temp_dir("lipsync_lsa");
  MediaClip clip;
  clip.fps = 25.0;
  clip.frames = random_frames(3, 8, 6, 11);
  clip.audio = tone(1000, 16000);

  const std::string path = dir + "/clip.lsa";
  write_lsa(path, clip);
  MediaClip back = read_lsa(path);

  CHECK(back.fps == 25.0);
  REQUIRE(back.frames.shape() == clip.frames.shape());
  // Pixels are stored as f32, so the round trip lands on the f32 grid.
  for (std::int64_t i = 0; i < clip.frames.numel(); ++i)
    CHECK(back.frames[i] == static_cast<double>(static_cast<float>(clip.frames[i])));
  REQUIRE(back.audio.samples.size() == clip.audio.samples.size());
  CHECK(back.audio.sample_rate == clip.audio.sample_rate);
  for (std::size_t i = 0; i < clip.audio.samples.size(); ++i)
    REQUIRE(back.audio.samples[i] == clip.audio.samples[i]);

  // A second write of the same content is byte-identical.
  const std::string path2 = dir + "/clip2.lsa";
  write_lsa(path2, back);
  write_lsa(path, back);
  CHECK(slurp(path) == slurp(path2));

  // Video-only and audio-only clips are valid.
  MediaClip video_only;
  video_only.fps = 30.0;
  video_only.frames = random_frames(2, 8, 8, 5);
  write_lsa(dir + "/v.lsa", video_only);
  CHECK(read_lsa(dir + "/v.lsa").audio.samples.empty());
  MediaClip audio_only;
  audio_only.audio = tone(500, 8000);
  write_lsa(dir + "/a.lsa", audio_only);
  CHECK(read_lsa(dir + "/a.lsa").frames.numel() == 0);
  CHECK(read_lsa(dir + "/a.lsa").audio.samples.size() == 500);

  fs::remove_all(dir);
}

TEST_CASE("lsa rejects missing, mis-tagged and truncated files") {
  const std::string dir = temp_dir("lipsync_lsa_bad");
  CHECK_THROWS_AS(read_lsa(dir + "/nope.lsa"), MediaError);

  {
    std::ofstream out(dir + "/magic.lsa", std::ios::binary);
    out << "XXXX0000000000000000";
  }
  CHECK_THROWS_AS(read_lsa(dir + "/magic.lsa"), MediaError);

  MediaClip clip;
  clip.fps = 25.0;
  clip.frames = random_frames(2, 8, 8, 1);
  clip.audio = tone(100, 16000);
  write_lsa(dir + "/ok.lsa", clip);
  const std::string bytes = slurp(dir + "/ok.lsa");
  {
    std::ofstream out(dir + "/cut.lsa", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(read_lsa(dir + "/cut.lsa"), MediaError);
  fs::remove_all(dir);
}

TEST_CASE("bilinear resize") {
  Tensor src = random_frames(1, 8, 6, 9);
  Tensor plane({8, 6, 3});
  std::copy(src.data(), src.data() + plane.numel(), plane.data());

  // Same size is the identity.
  Tensor same = resize_bilinear(plane, 8, 6);
  for (std::int64_t i = 0; i < plane.numel(); ++i) REQUIRE(same[i] == plane[i]);

  // Hand-checked 2x upscale sample: output (1,1) sits at source (0.25, 0.25).
  Tensor tiny({2, 2, 3});
  const double s00 = 0.1, s01 = 0.5, s10 = 0.9, s11 = 0.3;
  for (std::int64_t c = 0; c < 3; ++c) {
    tiny.at({0, 0, c}) = s00;
    tiny.at({0, 1, c}) = s01;
    tiny.at({1, 0, c}) = s10;
    tiny.at({1, 1, c}) = s11;
  }
  Tensor up = resize_bilinear(tiny, 4, 4);
  const double expect = 0.5625 * s00 + 0.1875 * s01 + 0.1875 * s10 + 0.0625 * s11;
  CHECK(up.at({1, 1, 0}) == doctest::Approx(expect).epsilon(1e-12));
  // Corners replicate edges.
  CHECK(up.at({0, 0, 0}) == s00);
  CHECK(up.at({3, 3, 0}) == s11);

  CHECK_THROWS_AS(resize_bilinear(tiny, 0, 4), ShapeError);
  CHECK_THROWS_AS(resize_bilinear(src, 4, 4), ShapeError);
}

TEST_CASE("box smoothing") {
  std::vector<FaceBox> constant(7);
  for (std::size_t i = 0; i < constant.size(); ++i) {
    constant[i] = {static_cast<std::int64_t>(i), 4.0, 5.0, 10.0, 12.0, 1.0};
  }
  std::vector<FaceBox> smoothed = smooth_boxes(constant);
  for (std::size_t i = 0; i < constant.size(); ++i) {
    CHECK(smoothed[i].x == 4.0);
    CHECK(smoothed[i].y == 5.0);
    CHECK(smoothed[i].w == 10.0);
    CHECK(smoothed[i].h == 12.0);
  }

  // Alternating 10/20: each interior 5-tap window holds three of one value
  // and two of the other, so the means are 14 and 16.
  std::vector<FaceBox> alternating(8);
  for (std::size_t i = 0; i < alternating.size(); ++i)
    alternating[i] = {static_cast<std::int64_t>(i), i % 2 == 0 ? 10.0 : 20.0, 0.0,
                      5.0, 5.0, 1.0};
  std::vector<FaceBox> out = smooth_boxes(alternating);
  for (std::size_t i = 2; i + 2 < out.size(); ++i)
    CHECK(out[i].x == (i % 2 == 0 ? 14.0 : 16.0));
  CHECK(out[0].x == doctest::Approx(40.0 / 3.0).epsilon(1e-12));

  // Skipped frames neither contribute nor change.
  std::vector<FaceBox> gappy = alternating;
  gappy[3].confidence = 0.0;
  gappy[3].x = 999.0;
  std::vector<FaceBox> gout = smooth_boxes(gappy);
  CHECK(gout[3].x == 999.0);
  CHECK(gout[2].x == doctest::Approx((10.0 + 20.0 + 10.0 + 10.0) / 4.0).epsilon(1e-12));

  CHECK_THROWS_AS(smooth_boxes(constant, 0), ConfigMismatch);
}

TEST_CASE("fixed-box localization") {
  Tensor frames = random_frames(4, 32, 32, 2);
  std::vector<FaceBox> boxes =
      localize_faces(frames, 25.0, FixedBoxDetector{8.0, 10.0, 12.0, 14.0});
  REQUIRE(boxes.size() == 4);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    CHECK(boxes[i].frame_index == static_cast<std::int64_t>(i));
    CHECK(boxes[i].x == 8.0);
    CHECK(boxes[i].y == 10.0);
    CHECK(boxes[i].w == 12.0);
    CHECK(boxes[i].h == 14.0);
    CHECK(boxes[i].confidence == 1.0);
  }

  // Boxes are clamped to the frame.
  std::vector<FaceBox> edge =
      localize_faces(frames, 25.0, FixedBoxDetector{28.0, -2.0, 10.0, 10.0});
  CHECK(edge[0].x == 28.0);
  CHECK(edge[0].w == 4.0);
  CHECK(edge[0].y == 0.0);
  CHECK(edge[0].h == 8.0);

  CHECK_THROWS_AS(localize_faces(frames, 25.0, FixedBoxDetector{0.0, 0.0, 0.0, 10.0}),
                  ConfigMismatch);
  CHECK_THROWS_AS(localize_faces(frames, 25.0, FixedBoxDetector{40.0, 0.0, 10.0, 10.0}),
                  ConfigMismatch);
}

TEST_CASE("exec detector adapter") {
  const std::string dir = temp_dir("lipsync_detect_stub");
  Tensor frames = random_frames(4, 32, 32, 2);

  write_script(dir + "/ok.sh",
               "echo '0 4 4 16 16 0.9'\n"
               "echo '2 6 6 18 18 0.8'\n"
               "echo '3 2 2 40 40 0.7'\n");
  std::vector<FaceBox> boxes = localize_faces(frames, 25.0, ExecDetector{dir + "/ok.sh"});
  REQUIRE(boxes.size() == 4);
  CHECK(boxes[0].confidence == 0.9);
  CHECK(boxes[0].x == 4.0);
  CHECK(boxes[1].confidence == 0.0);  // no line for frame 1
  CHECK(boxes[2].w == 18.0);
  CHECK(boxes[3].w == 30.0);  // clamped to the 32px frame from x=2
  CHECK(boxes[3].h == 30.0);

  write_script(dir + "/garbled.sh", "echo 'not a box'\n");
  CHECK_THROWS_AS(localize_faces(frames, 25.0, ExecDetector{dir + "/garbled.sh"}),
                  FormatError);
  write_script(dir + "/out_of_range.sh", "echo '9 1 1 4 4 0.5'\n");
  CHECK_THROWS_AS(localize_faces(frames, 25.0, ExecDetector{dir + "/out_of_range.sh"}),
                  FormatError);
  write_script(dir + "/fails.sh", "exit 1\n");
  CHECK_THROWS_AS(localize_faces(frames, 25.0, ExecDetector{dir + "/fails.sh"}),
                  MediaError);
  fs::remove_all(dir);
}

TEST_CASE("padded crop rectangles") {
  const FaceBox box{0, 10.0, 10.0, 10.0, 10.0, 1.0};
  CropRect rect = padded_rect(box, BoxPads{2.0, 3.0, 1.0, 4.0}, 32, 32);
  CHECK(rect.x0 == 9);
  CHECK(rect.y0 == 8);
  CHECK(rect.x1 == 24);
  CHECK(rect.y1 == 23);

  // Pads clamp at the frame edge.
  CropRect clamped = padded_rect(box, BoxPads{50.0, 50.0, 50.0, 50.0}, 32, 32);
  CHECK(clamped.x0 == 0);
  CHECK(clamped.y0 == 0);
  CHECK(clamped.x1 == 32);
  CHECK(clamped.y1 == 32);

  const FaceBox sliver{0, 31.6, 31.6, 0.2, 0.2, 1.0};
  CropRect tiny = padded_rect(sliver, BoxPads{0.0, 0.0, 0.0, 0.0}, 32, 32);
  CHECK(tiny.width() >= 1);
  CHECK(tiny.height() >= 1);
  CHECK(tiny.x1 <= 32);
  CHECK(tiny.y1 <= 32);
}

TEST_CASE("inference checkpoints") {
  const std::string dir = temp_dir("lipsync_infer_ckpt");
  const GeneratorConfig gcfg = GeneratorConfig::toy();
  const WindowConfig wcfg = WindowConfig::toy();
  ParameterSet params = LipGenerator(gcfg).init_params(3);

  const std::string path = dir + "/model.ckpt";
  save_inference_checkpoint(params, gcfg, wcfg, path);
  InferenceCheckpoint back = load_inference_checkpoint(path);
  CHECK(back.params.checksum() == params.checksum());
  CHECK(back.window.video_frames == wcfg.video_frames);
  CHECK(back.window.fps == wcfg.fps);
  CHECK(back.generator.crop_height == gcfg.crop_height);

  // The window and generator must agree at save time.
  WindowConfig tv3 = wcfg;
  tv3.video_frames = 3;
  tv3.audio_steps = 10;
  CHECK_THROWS_AS(save_inference_checkpoint(params, gcfg, tv3, dir + "/bad.ckpt"),
                  ConfigMismatch);

  // A generator-kind checkpoint is not an inference checkpoint.
  save_generator(params, gcfg, dir + "/gen.ckpt");
  CHECK_THROWS_AS(load_inference_checkpoint(dir + "/gen.ckpt"), ConfigMismatch);

  const std::string bytes = slurp(path);
  {
    std::ofstream out(dir + "/cut.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
  }
  CHECK_THROWS_AS(load_inference_checkpoint(dir + "/cut.ckpt"), FormatError);
  CHECK_THROWS_AS(load_inference_checkpoint(dir + "/missing.ckpt"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("lipsync_video end to end on native media") {
  const std::string dir = temp_dir("lipsync_e2e");
  const std::string ckpt = make_checkpoint(dir);

  // 40 frames at 25 fps with audio spanning exactly the same 1.6 s plus the
  // mel analysis tail, so every frame has a complete audio window.
  MediaClip source = framed_clip(40, 25.0, 28800);
  write_lsa(dir + "/in.lsa", source);
  {
    MediaClip audio_only;
    audio_only.audio = source.audio;
    write_lsa(dir + "/audio.lsa", audio_only);
  }

  InferenceJob job;
  job.video_path = dir + "/in.lsa";
  job.audio_path = dir + "/audio.lsa";
  job.checkpoint_path = ckpt;
  job.output_path = dir + "/out.lsa";
  job.detector = FixedBoxDetector{8.0, 8.0, 32.0, 32.0};
  job.pads = BoxPads{0.0, 0.0, 0.0, 0.0};

  InferenceResult result = lipsync_video(job);
  CHECK(result.frames_written == 40);
  CHECK(result.frames_generated == 40);
  CHECK(result.frames_skipped == 0);
  CHECK(result.warnings.empty());

  MediaClip out = read_lsa(dir + "/out.lsa");
  MediaClip in = read_lsa(dir + "/in.lsa");
  CHECK(out.fps == 25.0);
  REQUIRE(out.frames.dim(0) == 40);
  CHECK(out.frames.dim(1) == 48);
  CHECK(out.frames.dim(2) == 48);

  // Audio passes through bit-exactly.
  REQUIRE(out.audio.samples.size() == source.audio.samples.size());
  for (std::size_t i = 0; i < out.audio.samples.size(); ++i)
    REQUIRE(out.audio.samples[i] == source.audio.samples[i]);

  // Paste-back locality: every pixel outside the face rectangle untouched.
  std::int64_t changed_inside = 0;
  for (std::int64_t f = 0; f < 40; ++f)
    for (std::int64_t y = 0; y < 48; ++y)
      for (std::int64_t x = 0; x < 48; ++x)
        for (std::int64_t c = 0; c < 3; ++c) {
          const bool inside = y >= 8 && y < 40 && x >= 8 && x < 40;
          const double a = out.frames.at({f, y, x, c});
          const double b = in.frames.at({f, y, x, c});
          if (!inside)
            REQUIRE(a == b);
          else if (a != b)
            ++changed_inside;
        }
  CHECK(changed_inside > 0);

  // Bitwise determinism of the whole artifact.
  job.output_path = dir + "/out2.lsa";
  lipsync_video(job);
  CHECK(slurp(dir + "/out.lsa") == slurp(dir + "/out2.lsa"));

  fs::remove_all(dir);
}

TEST_CASE("length policy, skips and input validation") {
  const std::string dir = temp_dir("lipsync_e2e_policy");
  const std::string ckpt = make_checkpoint(dir);

  MediaClip source = framed_clip(40, 25.0, 28800);
  write_lsa(dir + "/in.lsa", source);

  InferenceJob job;
  job.video_path = dir + "/in.lsa";
  job.checkpoint_path = ckpt;
  job.detector = FixedBoxDetector{8.0, 8.0, 32.0, 32.0};
  job.pads = BoxPads{0.0, 0.0, 0.0, 0.0};

  // Audio covering only 0.8375 s: 20 output frames, windows up to frame 14.
  {
    MediaClip short_audio;
    short_audio.audio = tone(13400, 16000);
    write_lsa(dir + "/short.lsa", short_audio);
  }
  job.audio_path = dir + "/short.lsa";
  job.output_path = dir + "/trunc.lsa";
  InferenceResult truncated = lipsync_video(job);
  CHECK(truncated.frames_written == 20);
  CHECK(truncated.frames_generated == 15);
  MediaClip trunc = read_lsa(dir + "/trunc.lsa");
  CHECK(trunc.frames.dim(0) == 20);
  // The uncovered tail passes through.
  MediaClip in = read_lsa(dir + "/in.lsa");
  for (std::int64_t f = 15; f < 20; ++f)
    for (std::int64_t y = 0; y < 48; ++y)
      for (std::int64_t x = 0; x < 48; ++x)
        for (std::int64_t c = 0; c < 3; ++c)
          REQUIRE(trunc.frames.at({f, y, x, c}) == in.frames.at({f, y, x, c}));

  // 1.8 s of audio against the same video with looping: 45 output frames,
  // the loop tail drawn from the clip head.
  {
    MediaClip long_audio;
    long_audio.audio = tone(28800, 16000);
    write_lsa(dir + "/long.lsa", long_audio);
  }
  job.audio_path = dir + "/long.lsa";
  job.output_path = dir + "/loop.lsa";
  job.loop_video = true;
  InferenceResult looped = lipsync_video(job);
  CHECK(looped.frames_written == 45);
  MediaClip loop = read_lsa(dir + "/loop.lsa");
  REQUIRE(loop.frames.dim(0) == 45);
  // Border pixels of looped frame 42 match source frame 2.
  for (std::int64_t x = 0; x < 48; ++x)
    REQUIRE(loop.frames.at({42, 2, x, 0}) == in.frames.at({2, 2, x, 0}));
  job.loop_video = false;

  // Skipped frames: an external detector that misses frames 2 and 3.
  {
    std::string body;
    for (int f = 0; f < 20; ++f)
      if (f != 2 && f != 3)
        body += "echo '" + std::to_string(f) + " 8 8 32 32 0.9'\n";
    write_script(dir + "/spotty.sh", body);
  }
  job.audio_path = dir + "/short.lsa";
  job.output_path = dir + "/skips.lsa";
  job.detector = ExecDetector{dir + "/spotty.sh"};
  InferenceResult skipped = lipsync_video(job);
  CHECK(skipped.frames_written == 20);
  CHECK(skipped.frames_generated == 13);
  CHECK(skipped.frames_skipped == 2);
  REQUIRE(skipped.warnings.size() == 2);
  MediaClip skips = read_lsa(dir + "/skips.lsa");
  for (std::int64_t f = 2; f <= 3; ++f)
    for (std::int64_t y = 8; y < 40; ++y)
      for (std::int64_t x = 8; x < 40; ++x)
        REQUIRE(skips.frames.at({f, y, x, 0}) == in.frames.at({f, y, x, 0}));
  job.detector = FixedBoxDetector{8.0, 8.0, 32.0, 32.0};

  // fps and sample-rate disagreements with the checkpoint.
  {
    MediaClip wrong_fps = framed_clip(12, 30.0, 12000);
    write_lsa(dir + "/fps30.lsa", wrong_fps);
  }
  job.video_path = dir + "/fps30.lsa";
  job.audio_path = dir + "/long.lsa";
  job.output_path = dir + "/never.lsa";
  CHECK_THROWS_AS(lipsync_video(job), ConfigMismatch);
  job.video_path = dir + "/in.lsa";
  {
    MediaClip wrong_rate;
    wrong_rate.audio = tone(20000, 8000);
    write_lsa(dir + "/rate8k.lsa", wrong_rate);
  }
  job.audio_path = dir + "/rate8k.lsa";
  CHECK_THROWS_AS(lipsync_video(job), ConfigMismatch);

  // Streams must exist.
  job.audio_path = dir + "/in.lsa";
  {
    MediaClip no_audio;
    no_audio.fps = 25.0;
    no_audio.frames = random_frames(2, 8, 8, 3);
    write_lsa(dir + "/mute.lsa", no_audio);
  }
  job.audio_path = dir + "/mute.lsa";
  CHECK_THROWS_AS(lipsync_video(job), MediaError);
  job.audio_path = dir + "/long.lsa";
  job.video_path = dir + "/mute.lsa";  // has video; use a frame-less file instead
  {
    MediaClip no_video;
    no_video.audio = tone(4000, 16000);
    write_lsa(dir + "/frameless.lsa", no_video);
  }
  job.video_path = dir + "/frameless.lsa";
  CHECK_THROWS_AS(lipsync_video(job), MediaError);

  // Audio too short for a single window.
  job.video_path = dir + "/in.lsa";
  {
    MediaClip blip;
    blip.audio = tone(900, 16000);
    write_lsa(dir + "/blip.lsa", blip);
  }
  job.audio_path = dir + "/blip.lsa";
  CHECK_THROWS_AS(lipsync_video(job), InputTooShort);

  fs::remove_all(dir);
}

TEST_CASE("transcoder adapter") {
  const std::string dir = temp_dir("lipsync_transcode");
  const std::string ckpt = make_checkpoint(dir);
  MediaClip source = framed_clip(10, 25.0, 8600);
  // The stub "transcoder" just copies bytes: the payload is already .lsa.
  write_lsa(dir + "/in.vid", source);
  {
    MediaClip audio_only;
    audio_only.audio = source.audio;
    write_lsa(dir + "/audio.snd", audio_only);
  }
  write_script(dir + "/stub.sh", "cp \"$2\" \"$3\"\n");

  InferenceJob job;
  job.video_path = dir + "/in.vid";
  job.audio_path = dir + "/audio.snd";
  job.checkpoint_path = ckpt;
  job.output_path = dir + "/out.vid";
  job.detector = FixedBoxDetector{8.0, 8.0, 32.0, 32.0};
  job.pads = BoxPads{0.0, 0.0, 0.0, 0.0};

  // Non-.lsa paths require a transcoder.
  CHECK_THROWS_AS(lipsync_video(job), MediaError);

  job.transcoder = dir + "/stub.sh";
  InferenceResult result = lipsync_video(job);
  CHECK(result.frames_written == 10);
  MediaClip out = read_lsa(dir + "/out.vid");  // stub wrote raw lsa bytes
  CHECK(out.frames.dim(0) == 10);
  for (std::size_t i = 0; i < out.audio.samples.size(); ++i)
    REQUIRE(out.audio.samples[i] == source.audio.samples[i]);

  write_script(dir + "/broken.sh", "exit 3\n");
  job.transcoder = dir + "/broken.sh";
  CHECK_THROWS_AS(lipsync_video(job), MediaError);
  fs::remove_all(dir);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("lipsync tool exit codes and artifacts") {
  const char* bin = std::getenv("LIPSYNC_BIN");
  if (bin == nullptr) {
    MESSAGE("LIPSYNC_BIN not set; run through ctest to exercise the CLI");
    return;
  }
  const std::string tool = bin;
  const std::string dir = temp_dir("lipsync_cli");
  const std::string ckpt = make_checkpoint(dir);
  MediaClip source = framed_clip(20, 25.0, 15000);
  write_lsa(dir + "/in.lsa", source);
  {
    MediaClip audio_only;
    audio_only.audio = source.audio;
    write_lsa(dir + "/audio.lsa", audio_only);
  }

  auto run = [&](const std::string& args) {
    const int rc = std::system((tool + " " + args + " >/dev/null 2>&1").c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
  };

  CHECK(run("--help") == 0);
  CHECK(run("") == 2);  // missing required options

  const std::string base = "--video " + dir + "/in.lsa --audio " + dir +
                           "/audio.lsa --checkpoint " + ckpt + " --out " + dir +
                           "/out.lsa";
  // Fixed detector without --box is a config error.
  CHECK(run(base) == 2);
  CHECK(run(base + " --box 8,8,32,32 --pads 0,0,0,0") == 0);
  CHECK(fs::exists(dir + "/out.lsa"));
  CHECK(read_lsa(dir + "/out.lsa").frames.dim(0) == 20);

  CHECK(run(base + " --box nonsense") == 2);
  CHECK(run(base + " --box 8,8,32,32 --detector martian") == 2);

  // Checkpoint problems exit 4.
  CHECK(run("--video " + dir + "/in.lsa --audio " + dir + "/audio.lsa --checkpoint " +
            dir + "/absent.ckpt --out " + dir + "/x.lsa --box 8,8,32,32") == 4);

  // Media problems exit 3.
  {
    std::ofstream bad(dir + "/bad.lsa", std::ios::binary);
    bad << "???? not media";
  }
  CHECK(run("--video " + dir + "/bad.lsa --audio " + dir + "/audio.lsa --checkpoint " +
            ckpt + " --out " + dir + "/x.lsa --box 8,8,32,32") == 3);

  fs::remove_all(dir);
}

}  // TEST_SUITE
