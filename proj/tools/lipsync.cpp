#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/inference.hpp"

using namespace lipsync;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMedia = 3;
constexpr int kExitCheckpoint = 4;

bool parse_quad(const std::string& text, double* a, double* b, double* c, double* d) {
  return std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf", a, b, c, d) == 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Lip-syncs a source video to a target audio track.\n"
      "Exit codes: 0 success, 2 config error, 3 media error, 4 checkpoint error."};

  InferenceJob job;
  std::string detector_spec = "fixed";
  std::string box_spec, pads_spec;
  bool no_smooth = false;

  app.add_option("--video", job.video_path, "Source video (.lsa or any transcodable file)")
      ->required();
  app.add_option("--audio", job.audio_path, "Target audio")->required();
  app.add_option("--checkpoint", job.checkpoint_path, "Inference checkpoint")->required();
  app.add_option("--out", job.output_path, "Output path")->required();
  app.add_option("--detector", detector_spec,
                 "'fixed' (requires --box) or 'exec:PATH' for an external detector");
  app.add_option("--box", box_spec, "Fixed face box as X,Y,W,H in pixels");
  app.add_option("--pads", pads_spec, "Box padding as T,B,L,R pixels (default 0,10,0,0)");
  app.add_flag("--no-smooth", no_smooth, "Disable temporal box smoothing");
  app.add_flag("--loop-video", job.loop_video, "Loop the video when the audio is longer");
  app.add_option("--transcoder", job.transcoder,
                 "External transcoder command (default $LIPSYNC_TRANSCODER)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  job.smooth = !no_smooth;
  if (job.transcoder.empty()) {
    if (const char* env = std::getenv("LIPSYNC_TRANSCODER")) job.transcoder = env;
  }

  if (detector_spec == "fixed") {
    if (box_spec.empty()) {
      std::fprintf(stderr, "lipsync: the fixed detector requires --box X,Y,W,H\n");
      return kExitConfig;
    }
    FixedBoxDetector fixed;
    if (!parse_quad(box_spec, &fixed.x, &fixed.y, &fixed.w, &fixed.h)) {
      std::fprintf(stderr, "lipsync: cannot parse --box '%s'\n", box_spec.c_str());
      return kExitConfig;
    }
    job.detector = fixed;
  } else if (detector_spec.rfind("exec:", 0) == 0) {
    job.detector = ExecDetector{detector_spec.substr(5)};
  } else {
    std::fprintf(stderr, "lipsync: unknown detector '%s'\n", detector_spec.c_str());
    return kExitConfig;
  }
  if (!pads_spec.empty() &&
      !parse_quad(pads_spec, &job.pads.top, &job.pads.bottom, &job.pads.left,
                  &job.pads.right)) {
    std::fprintf(stderr, "lipsync: cannot parse --pads '%s'\n", pads_spec.c_str());
    return kExitConfig;
  }

  try {
    load_inference_checkpoint(job.checkpoint_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "lipsync: checkpoint: %s\n", e.what());
    return kExitCheckpoint;
  }

  try {
    InferenceResult result = lipsync_video(job);
    for (const std::string& w : result.warnings)
      std::fprintf(stderr, "lipsync: warning: %s\n", w.c_str());
    std::printf("wrote %s: %lld frames (%lld generated, %lld passed through)\n",
                job.output_path.c_str(), static_cast<long long>(result.frames_written),
                static_cast<long long>(result.frames_generated),
                static_cast<long long>(result.frames_skipped));
    return 0;
  } catch (const MediaError& e) {
    std::fprintf(stderr, "lipsync: media: %s\n", e.what());
    return kExitMedia;
  } catch (const InputTooShort& e) {
    std::fprintf(stderr, "lipsync: media: %s\n", e.what());
    return kExitMedia;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "lipsync: media: %s\n", e.what());
    return kExitMedia;
  } catch (const Error& e) {
    std::fprintf(stderr, "lipsync: %s\n", e.what());
    return kExitConfig;
  }
}
