#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipsync/mel.hpp"
#include "lipsync/rng.hpp"
#include "lipsync/tensor.hpp"
#include "lipsync/window_config.hpp"

namespace lipsync {

/// A tracked, cropped face sequence. frames is (num_frames, H, W, 3) with
/// values in [0,1].
struct FaceTrack {
  Tensor frames;
  double fps = 25.0;
  std::string source_id;

  std::int64_t num_frames() const { return frames.empty() ? 0 : frames.dim(0); }
};

/// One training example for the sync discriminator: lower-half face crops
/// plus an audio window that either matches them in time or does not.
struct SyncPair {
  Tensor face_window;   // (Tv, H/2, W, 3)
  Tensor audio_window;  // (Ta, D)
  int label = 0;        // 1 = in-sync, 0 = off-sync
  std::int64_t video_index = 0;
  std::int64_t audio_index = 0;
};

/// One generator batch with the window dimension stacked into the batch
/// dimension: every array leads with N*Tv.
struct GeneratorBatch {
  Tensor reference;   // (N*Tv, H, W, 3) identity frames from another window
  Tensor pose_prior;  // (N*Tv, H, W, 3) target frames, lower half zeroed
  Tensor target;      // (N*Tv, H, W, 3) ground truth
  Tensor audio;       // (N*Tv, Ta, D) per-frame aligned audio windows
};

/// Zeroes rows [H/2, H) of every (..., H, W, 3) frame; upper half is copied
/// bit for bit. Idempotent. Throws ConfigMismatch for odd H.
Tensor mask_lower_half(const Tensor& frames);

/// Deterministically samples an in-sync (positive) or off-sync pair. Off-sync
/// means the audio window starts at least Tv frames away from the video
/// window, so the two never overlap. Throws InputTooShort when the track
/// cannot supply the requested pair.
SyncPair sample_sync_pair(const FaceTrack& track, const MelSpectrogram& mel,
                          const WindowConfig& cfg, std::uint64_t rng_seed, bool positive);

/// Samples N contiguous Tv-frame target windows (with their per-frame audio)
/// plus reference windows from the same tracks. The reference window start is
/// drawn uniformly and differs from the target start whenever the track is
/// long enough to allow it.
GeneratorBatch build_generator_batch(const std::vector<FaceTrack>& tracks,
                                     const std::vector<MelSpectrogram>& mels,
                                     const WindowConfig& cfg, std::uint64_t rng_seed,
                                     std::int64_t batch_size);

struct ToyCorpus {
  std::vector<FaceTrack> tracks;
  std::vector<MelSpectrogram> mels;
};

/// Procedural desk-scale corpus. Each track renders a static cartoon face
/// whose mouth opening follows a band-limited random envelope, and the mel
/// array embeds the same envelope under a per-track spectral profile, so real
/// audio-lip correspondence exists by construction.
ToyCorpus synth_toy_corpus(const WindowConfig& cfg, std::int64_t n_tracks, std::uint64_t seed,
                           std::int64_t num_frames = 120);

void save_face_track(const FaceTrack& track, const std::string& path);
FaceTrack load_face_track(const std::string& path);
void save_mel(const MelSpectrogram& mel, const std::string& path);
MelSpectrogram load_mel(const std::string& path);

/// One corpus manifest line: `track_id <TAB> frames_path <TAB> audio_path`.
struct CorpusRecord {
  std::string track_id;
  std::string frames_path;
  std::string audio_path;
};

void write_corpus_manifest(const std::string& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_corpus_manifest(const std::string& path);

/// Writes tracks, mels and a manifest.tsv under dir; returns the manifest path.
std::string save_corpus(const ToyCorpus& corpus, const std::string& dir);
ToyCorpus load_corpus(const std::string& manifest_path);

}  // namespace lipsync
