#include "lipsync/lse_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "lipsync/adam.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/rng.hpp"

namespace lipsync {

namespace {

constexpr std::int64_t kEncodeChunk = 128;

// Lower halves of tv consecutive frames starting at `start`, folded into the
// expert's channel layout (channel t*3 + c holds frame start+t, color c).
void fold_window_into(const Tensor& frames, std::int64_t start, std::int64_t tv,
                      Tensor& dst, std::int64_t row) {
  const std::int64_t h = frames.dim(1);
  const std::int64_t w = frames.dim(2);
  const std::int64_t half = h / 2;
  for (std::int64_t t = 0; t < tv; ++t) {
    const double* src = frames.data() + ((start + t) * h + half) * w * 3;
    double* out = dst.data() + row * half * w * 3 * tv;
    for (std::int64_t p = 0; p < half * w; ++p)
      for (std::int64_t c = 0; c < 3; ++c) out[p * 3 * tv + t * 3 + c] = src[p * 3 + c];
  }
}

template <typename Encode>
Tensor encode_chunked(const Tensor& batch, Encode encode) {
  const std::int64_t n = batch.dim(0);
  const std::int64_t row = batch.numel() / n;
  Tensor out;
  for (std::int64_t begin = 0; begin < n; begin += kEncodeChunk) {
    const std::int64_t count = std::min(kEncodeChunk, n - begin);
    std::vector<std::int64_t> shape = batch.shape();
    shape[0] = count;
    Tensor chunk(shape);
    std::copy(batch.data() + begin * row, batch.data() + (begin + count) * row,
              chunk.data());
    Tensor z = encode(chunk);
    if (out.empty()) out = Tensor({n, z.dim(1)});
    std::copy(z.data(), z.data() + z.numel(), out.data() + begin * z.dim(1));
  }
  return out;
}

// A wrong-architecture checkpoint can still run end to end (the conv chain
// is self-consistent), so shapes are checked against the config explicitly.
void require_scorer_shape(const SyncExpertConfig& scorer_cfg, const ParameterSet& scorer) {
  const ParameterSet expected = SyncExpert(scorer_cfg).init_params(0);
  if (scorer.arrays.size() != expected.arrays.size())
    throw ShapeError("scorer parameters do not match the scorer config");
  for (const auto& [name, tensor] : expected.arrays) {
    if (!scorer.contains(name) || scorer.at(name).shape() != tensor.shape())
      throw ShapeError("scorer parameter '" + name + "' missing or mis-shaped");
  }
}

}  // namespace

LseReport lse_metrics(const FaceTrack& track, const MelSpectrogram& mel,
                      const SyncExpertConfig& scorer_cfg, const ParameterSet& scorer,
                      const WindowConfig& wcfg, std::int64_t max_offset) {
  wcfg.validate();
  scorer_cfg.validate();
  require_scorer_shape(scorer_cfg, scorer);
  require_window_match(scorer_cfg, wcfg);
  if (max_offset < 1) throw ConfigMismatch("max_offset must be >= 1");

  const std::int64_t tv = wcfg.video_frames;
  const std::int64_t n_frames = track.num_frames();
  if (n_frames < tv + 2 * max_offset)
    throw InputTooShort("clip '" + track.source_id + "' is too short for lse_metrics");
  track.frames.require_shape({n_frames, wcfg.crop_height, wcfg.crop_width, 3},
                             "track frames");

  // Largest start frame whose audio window still fits in the mel array.
  std::int64_t audio_max = n_frames - tv;
  while (audio_max >= 0 &&
         wcfg.mel_start_for_frame(audio_max) + wcfg.audio_steps > mel.steps())
    --audio_max;

  const std::int64_t p_lo = max_offset;
  const std::int64_t p_hi = std::min(n_frames - tv, audio_max - max_offset);
  if (p_hi < p_lo)
    throw InputTooShort("clip '" + track.source_id +
                        "' has no window position with full offset coverage");
  const std::int64_t n_windows = p_hi - p_lo + 1;
  const std::int64_t n_offsets = 2 * max_offset + 1;
  const std::int64_t n_audio = n_windows + 2 * max_offset;

  Tensor faces(
      {n_windows, wcfg.crop_height / 2, wcfg.crop_width, 3 * tv});
  for (std::int64_t r = 0; r < n_windows; ++r)
    fold_window_into(track.frames, p_lo + r, tv, faces, r);
  Tensor audio({n_audio, wcfg.audio_steps, wcfg.mel_channels});
  for (std::int64_t a = 0; a < n_audio; ++a) {
    Tensor window = slice_audio_window(mel, p_lo - max_offset + a, wcfg);
    std::copy(window.data(), window.data() + window.numel(),
              audio.data() + a * window.numel());
  }

  const SyncExpert model(scorer_cfg);
  const Tensor v = encode_chunked(
      faces, [&](const Tensor& chunk) { return model.encode_face_window(scorer, chunk); });
  const Tensor s = encode_chunked(
      audio, [&](const Tensor& chunk) { return model.encode_audio_window(scorer, chunk); });
  const std::int64_t embed = v.dim(1);

  LseReport report;
  report.max_offset = max_offset;
  report.n_windows = n_windows;
  report.first_position = p_lo;
  report.distances = Tensor({n_windows, n_offsets});
  for (std::int64_t r = 0; r < n_windows; ++r) {
    const double* vr = v.data() + r * embed;
    for (std::int64_t i = 0; i < n_offsets; ++i) {
      const double* si = s.data() + (r + i) * embed;
      double sq = 0.0;
      for (std::int64_t k = 0; k < embed; ++k) {
        const double d = vr[k] - si[k];
        sq += d * d;
      }
      report.distances.at({r, i}) = std::sqrt(sq);
    }
  }

  report.offset_curve.resize(static_cast<std::size_t>(n_offsets));
  for (std::int64_t i = 0; i < n_offsets; ++i) {
    double sum = 0.0;
    for (std::int64_t r = 0; r < n_windows; ++r) sum += report.distances.at({r, i});
    report.offset_curve[static_cast<std::size_t>(i)] =
        sum / static_cast<double>(n_windows);
  }

  std::vector<double> sorted = report.offset_curve;
  std::sort(sorted.begin(), sorted.end());
  const double minimum = sorted.front();
  const double median = sorted[sorted.size() / 2];  // odd count: exact middle
  report.lse_d = minimum;
  report.lse_c = median - minimum;
  return report;
}

LseSummary evaluate_corpus_lse(const ToyCorpus& corpus, const SyncExpertConfig& scorer_cfg,
                               const ParameterSet& scorer, const WindowConfig& wcfg,
                               std::int64_t max_offset) {
  if (corpus.tracks.empty() || corpus.tracks.size() != corpus.mels.size())
    throw InputTooShort("need a non-empty, equally sized track/mel list");
  LseSummary summary;
  for (std::size_t i = 0; i < corpus.tracks.size(); ++i) {
    summary.clip_ids.push_back(corpus.tracks[i].source_id);
    summary.clips.push_back(lse_metrics(corpus.tracks[i], corpus.mels[i], scorer_cfg,
                                        scorer, wcfg, max_offset));
    summary.mean_lse_d += summary.clips.back().lse_d;
    summary.mean_lse_c += summary.clips.back().lse_c;
  }
  summary.mean_lse_d /= static_cast<double>(summary.clips.size());
  summary.mean_lse_c /= static_cast<double>(summary.clips.size());
  return summary;
}

void write_lse_report(const std::string& path, const LseSummary& summary) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "clip\tlse_d\tlse_c\tn_windows\n";
  char line[256];
  std::int64_t total_windows = 0;
  for (std::size_t i = 0; i < summary.clips.size(); ++i) {
    const LseReport& r = summary.clips[i];
    std::snprintf(line, sizeof(line), "%s\t%.17g\t%.17g\t%lld\n",
                  summary.clip_ids[i].c_str(), r.lse_d, r.lse_c,
                  static_cast<long long>(r.n_windows));
    out << line;
    total_windows += r.n_windows;
  }
  std::snprintf(line, sizeof(line), "mean\t%.17g\t%.17g\t%lld\n", summary.mean_lse_d,
                summary.mean_lse_c, static_cast<long long>(total_windows));
  out << line;
}

std::vector<BenchmarkPair> build_benchmark(const std::string& corpus_manifest,
                                           std::uint64_t seed, std::int64_t n_pairs) {
  if (n_pairs < 1) throw ContractViolation("n_pairs must be >= 1");
  const ToyCorpus corpus = load_corpus(corpus_manifest);
  const std::size_t n = corpus.tracks.size();
  if (n < 2) throw InputTooShort("benchmark needs at least two corpus entries");

  std::vector<double> video_len(n), audio_len(n);
  for (std::size_t i = 0; i < n; ++i) {
    video_len[i] =
        static_cast<double>(corpus.tracks[i].num_frames()) / corpus.tracks[i].fps;
    audio_len[i] = static_cast<double>(corpus.mels[i].steps()) *
                   static_cast<double>(corpus.mels[i].mel_hop) /
                   static_cast<double>(corpus.mels[i].sample_rate);
  }

  Rng rng(seed);
  std::vector<BenchmarkPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n_pairs));
  for (std::int64_t k = 0; k < n_pairs; ++k) {
    BenchmarkPair pair;
    bool found = false;
    for (int attempt = 0; attempt < 128 && !found; ++attempt) {
      const std::size_t vi = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(n)));
      std::size_t ai = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(n - 1)));
      if (ai >= vi) ++ai;
      // Dub with a fraction of the video's length, capped by the speech
      // actually available from the source.
      const double want = video_len[vi] * rng.uniform(0.5, 0.95);
      const double len = std::min(want, audio_len[ai]);
      if (len <= 0.0 || len >= video_len[vi]) continue;
      pair.video_id = corpus.tracks[vi].source_id;
      pair.audio_source_id = corpus.tracks[ai].source_id;
      pair.video_len = video_len[vi];
      pair.audio_len = len;
      pair.seed = rng.next_u64();
      found = true;
    }
    if (!found) throw InputTooShort("no valid benchmark pairing exists in this corpus");
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::string benchmark_manifest_text(const std::vector<BenchmarkPair>& pairs) {
  std::string text;
  char line[512];
  for (const BenchmarkPair& p : pairs) {
    std::snprintf(line, sizeof(line), "%s\t%s\t%.17g\t%.17g\t%llu\n", p.video_id.c_str(),
                  p.audio_source_id.c_str(), p.video_len, p.audio_len,
                  static_cast<unsigned long long>(p.seed));
    text += line;
  }
  return text;
}

void write_benchmark_manifest(const std::string& path,
                              const std::vector<BenchmarkPair>& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << benchmark_manifest_text(pairs);
}

std::vector<BenchmarkPair> read_benchmark_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open benchmark manifest '" + path + "'");
  std::vector<BenchmarkPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    BenchmarkPair p;
    std::string video_len, audio_len, pair_seed;
    if (!std::getline(fields, p.video_id, '\t') ||
        !std::getline(fields, p.audio_source_id, '\t') ||
        !std::getline(fields, video_len, '\t') || !std::getline(fields, audio_len, '\t') ||
        !std::getline(fields, pair_seed))
      throw FormatError("benchmark manifest '" + path + "' line " +
                        std::to_string(line_no) + " is malformed");
    try {
      p.video_len = std::stod(video_len);
      p.audio_len = std::stod(audio_len);
      p.seed = std::stoull(pair_seed);
    } catch (const std::exception&) {
      throw FormatError("benchmark manifest '" + path + "' line " +
                        std::to_string(line_no) + " has non-numeric fields");
    }
    if (!(p.audio_len < p.video_len) || p.video_id == p.audio_source_id)
      throw FormatError("benchmark manifest '" + path + "' line " +
                        std::to_string(line_no) + " violates pair invariants");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

FaceTrack synthesize_dubbed_track(const LipGenerator& gen, const ParameterSet& gen_params,
                                  const FaceTrack& track, const MelSpectrogram& dub_mel,
                                  const WindowConfig& wcfg) {
  wcfg.validate();
  require_window_match(gen.config(), wcfg);
  const std::int64_t tv = wcfg.video_frames;
  const std::int64_t n_frames = track.num_frames();
  if (n_frames < tv) throw InputTooShort("clip is shorter than one window");
  track.frames.require_shape({n_frames, wcfg.crop_height, wcfg.crop_width, 3},
                             "track frames");

  // Complete windows whose audio fits in the dub mel.
  std::int64_t n_groups = 0;
  while ((n_groups + 1) * tv <= n_frames &&
         wcfg.mel_start_for_frame((n_groups + 1) * tv - 1) + wcfg.audio_steps <=
             dub_mel.steps())
    ++n_groups;
  if (n_groups == 0) throw InputTooShort("dub audio does not cover a single window");

  const std::int64_t m = n_groups * tv;
  Tensor reference({m, wcfg.crop_height, wcfg.crop_width, 3});
  const std::int64_t frame_elems = wcfg.crop_height * wcfg.crop_width * 3;
  std::copy(track.frames.data(), track.frames.data() + m * frame_elems, reference.data());
  Tensor prior = mask_lower_half(reference);
  Tensor audio({m, wcfg.audio_steps, wcfg.mel_channels});
  for (std::int64_t f = 0; f < m; ++f) {
    Tensor window = slice_audio_window(dub_mel, f, wcfg);
    std::copy(window.data(), window.data() + window.numel(),
              audio.data() + f * window.numel());
  }

  Tensor generated = gen.generate_frames(gen_params, reference, prior, audio);

  FaceTrack out;
  out.fps = track.fps;
  out.source_id = track.source_id;
  out.frames = track.frames;
  std::copy(generated.data(), generated.data() + m * frame_elems, out.frames.data());
  return out;
}

void FinetuneBudget::validate() const {
  if (steps < 0) throw ConfigMismatch("finetune steps must be >= 0");
  if (batch_size < 1) throw ConfigMismatch("finetune batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigMismatch("finetune lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigMismatch("betas must lie in [0, 1)");
  if (sync_weight < 0.0 || sync_weight >= 1.0)
    throw ConfigMismatch("sync_weight must lie in [0, 1)");
}

ParameterSet finetune_expert_in_gan(const SyncExpertConfig& expert_cfg,
                                    const ParameterSet& expert_params,
                                    const GeneratorConfig& gen_cfg, const ToyCorpus& corpus,
                                    const WindowConfig& wcfg, const FinetuneBudget& budget,
                                    ParameterSet* co_generator) {
  wcfg.validate();
  expert_cfg.validate();
  gen_cfg.validate();
  budget.validate();
  require_window_match(expert_cfg, wcfg);
  require_window_match(gen_cfg, wcfg);
  const std::int64_t tv = wcfg.video_frames;
  if (budget.batch_size % tv != 0)
    throw ConfigMismatch("finetune batch_size must be a multiple of video_frames");
  const std::int64_t groups = budget.batch_size / tv;

  ParameterSet expert = expert_params;
  expert.frozen = false;
  const SyncExpert emodel(expert_cfg);
  const LipGenerator gmodel(gen_cfg);
  ParameterSet gen = gmodel.init_params(budget.seed);
  if (budget.steps == 0) {
    if (co_generator) *co_generator = std::move(gen);
    return expert;
  }

  Adam gen_opt(budget.lr, budget.beta1, budget.beta2);
  Adam exp_opt(budget.lr, budget.beta1, budget.beta2);
  const std::int64_t half_h = wcfg.crop_height / 2;

  for (std::int64_t step = 0; step < budget.steps; ++step) {
    GeneratorBatch batch = build_generator_batch(
        corpus.tracks, corpus.mels, wcfg, Rng::derive(budget.seed, 5000 + step), groups);

    // Generator update against the expert as it currently stands.
    LipGenerator::ForwardCache gcache;
    Tensor frames = gmodel.generate_frames(gen, batch.reference, batch.pose_prior,
                                           batch.audio, &gcache);
    Tensor dframes = reconstruction_loss_backward(frames, batch.target);
    for (std::int64_t i = 0; i < dframes.numel(); ++i)
      dframes.data()[i] *= 1.0 - budget.sync_weight;

    Tensor group_audio({groups, wcfg.audio_steps, wcfg.mel_channels});
    {
      const std::int64_t window = wcfg.audio_steps * wcfg.mel_channels;
      for (std::int64_t g = 0; g < groups; ++g)
        std::copy(batch.audio.data() + g * tv * window,
                  batch.audio.data() + (g * tv + 1) * window,
                  group_audio.data() + g * window);
    }
    if (budget.sync_weight > 0.0) {
      Tensor folded = fold_for_expert(frames, tv);
      Tensor dfolded;
      expert.frozen = true;  // fixed judge within this generator update
      const double e_sync [[maybe_unused]] =
          expert_sync_loss(emodel, expert, folded, group_audio, &dfolded);
      expert.frozen = false;
      Tensor dsync = fold_for_expert_backward(dfolded, tv, wcfg.crop_height);
      for (std::int64_t i = 0; i < dframes.numel(); ++i)
        dframes.data()[i] += budget.sync_weight * dsync.data()[i];
    }
    GradStore ggrads;
    gmodel.backward(gen, gcache, dframes, &ggrads);
    gen_opt.step(gen, ggrads);

    // Expert update: real windows as positives, the generated windows (with
    // the same, genuinely matching audio) as negatives.
    Tensor fake_folded = fold_for_expert(frames, tv);
    Tensor real_folded = fold_for_expert(batch.target, tv);
    Tensor v_batch({2 * groups, half_h, wcfg.crop_width, 3 * tv});
    const std::int64_t folded_elems = half_h * wcfg.crop_width * 3 * tv;
    std::copy(real_folded.data(), real_folded.data() + groups * folded_elems,
              v_batch.data());
    std::copy(fake_folded.data(), fake_folded.data() + groups * folded_elems,
              v_batch.data() + groups * folded_elems);

    SyncExpert::EncodeCache vcache, scache;
    Tensor v = emodel.encode_face_window(expert, v_batch, &vcache);
    Tensor s = emodel.encode_audio_window(expert, group_audio, &scache);
    const std::int64_t embed = v.dim(1);
    Tensor dv = Tensor::zeros(v.shape());
    Tensor ds = Tensor::zeros(s.shape());
    const double inv_rows = 1.0 / static_cast<double>(2 * groups);
    for (std::int64_t row = 0; row < 2 * groups; ++row) {
      const std::int64_t a = row % groups;  // audio row shared by both halves
      Tensor vr({embed}), sr({embed});
      std::copy(v.data() + row * embed, v.data() + (row + 1) * embed, vr.data());
      std::copy(s.data() + a * embed, s.data() + (a + 1) * embed, sr.data());
      const double p = sync_probability(vr, sr, expert_cfg.eps);
      const int label = row < groups ? 1 : 0;
      const double dp = expert_bce_loss_backward(p, label) * inv_rows;
      if (dp != 0.0) {
        Tensor dvr, dsr;
        sync_probability_backward(vr, sr, expert_cfg.eps, dp, &dvr, &dsr);
        for (std::int64_t k = 0; k < embed; ++k) {
          dv.data()[row * embed + k] += dvr.data()[k];
          ds.data()[a * embed + k] += dsr.data()[k];
        }
      }
    }
    GradStore egrads;
    emodel.face_backward(expert, vcache, dv, &egrads);
    emodel.audio_backward(expert, scache, ds, &egrads);
    exp_opt.step(expert, egrads);
  }

  if (co_generator) *co_generator = std::move(gen);
  return expert;
}

void AblationBudgets::validate() const {
  if (expert_steps < 1 || gan_steps < 1 || finetune_steps < 1)
    throw ConfigMismatch("ablation budgets need at least one step per phase");
  if (expert_batch < 2 || expert_batch % 2 != 0)
    throw ConfigMismatch("expert_batch must be even and >= 2");
  if (!(expert_lr > 0.0)) throw ConfigMismatch("expert_lr must be positive");
  if (gan_batch_groups < 1) throw ConfigMismatch("gan_batch_groups must be >= 1");
  if (eval_pairs < 2) throw ConfigMismatch("eval_pairs must be >= 2");
  if (lse_clips < 1) throw ConfigMismatch("lse_clips must be >= 1");
  if (max_offset < 1) throw ConfigMismatch("max_offset must be >= 1");
}

WindowConfig window_for_tv(const WindowConfig& base, std::int64_t tv) {
  if (tv < 1) throw ConfigMismatch("tv must be >= 1");
  WindowConfig w = base;
  w.video_frames = tv;
  w.audio_steps = std::llround(static_cast<double>(tv) * base.steps_per_frame());
  w.validate();
  return w;
}

namespace {

// Mean LSE over the first `clips` tracks, each re-voiced with the next
// track's audio so the lips must come from the dub speech, not the source.
std::pair<double, double> dubbed_lse(const ToyCorpus& corpus, const LipGenerator& gen,
                                     const ParameterSet& gen_params,
                                     const WindowConfig& gen_wcfg,
                                     const SyncExpertConfig& scorer_cfg,
                                     const ParameterSet& scorer,
                                     const WindowConfig& scorer_wcfg,
                                     std::int64_t clips, std::int64_t max_offset) {
  const std::size_t n = corpus.tracks.size();
  double sum_d = 0.0, sum_c = 0.0;
  std::int64_t used = 0;
  for (std::int64_t i = 0; i < clips && static_cast<std::size_t>(i) < n; ++i) {
    const std::size_t dub = (static_cast<std::size_t>(i) + 1) % n;
    FaceTrack dubbed = synthesize_dubbed_track(gen, gen_params, corpus.tracks[i],
                                               corpus.mels[dub], gen_wcfg);
    LseReport report = lse_metrics(dubbed, corpus.mels[dub], scorer_cfg, scorer,
                                   scorer_wcfg, max_offset);
    sum_d += report.lse_d;
    sum_c += report.lse_c;
    ++used;
  }
  return {sum_d / static_cast<double>(used), sum_c / static_cast<double>(used)};
}

}  // namespace

std::vector<AblationRow> run_ablation(const ToyCorpus& corpus, const WindowConfig& wcfg,
                                      const SyncExpertConfig& scorer_cfg,
                                      const ParameterSet& scorer,
                                      const AblationBudgets& budgets, std::uint64_t seed) {
  budgets.validate();
  wcfg.validate();
  scorer_cfg.validate();

  std::vector<AblationRow> rows;
  for (const std::int64_t tv : {std::int64_t{1}, std::int64_t{3}, std::int64_t{5}}) {
    const WindowConfig wtv = window_for_tv(wcfg, tv);
    const SyncExpertConfig ecfg = SyncExpertConfig::for_window(wtv, 32, {8, 16, 32});
    ExpertTrainConfig etc;
    etc.batch_size = budgets.expert_batch;
    etc.lr = budgets.expert_lr;
    etc.steps = budgets.expert_steps;
    etc.seed = Rng::derive(seed, 10 + static_cast<std::uint64_t>(tv));
    ExpertTrainResult trained = train_expert(corpus, wtv, ecfg, etc);

    const SyncExpert emodel(ecfg);
    const std::vector<SyncPair> pairs = make_eval_pairs(
        corpus, wtv, Rng::derive(seed, 20 + static_cast<std::uint64_t>(tv)),
        budgets.eval_pairs);

    const GeneratorConfig gcfg = GeneratorConfig::for_window(wtv, 8, 3, {8, 16, 32});
    const QualityDiscConfig dcfg = QualityDiscConfig::for_window(wtv, {8, 16, 32});

    // Frozen-expert row.
    AblationRow frozen_row;
    frozen_row.tv = tv;
    frozen_row.fine_tuned = false;
    frozen_row.off_sync_acc = off_sync_accuracy(emodel, trained.params, pairs);
    {
      ParameterSet frozen = trained.params;
      frozen.frozen = true;
      TrainConfig tc;
      tc.batch_size = budgets.gan_batch_groups * tv;
      tc.steps = budgets.gan_steps;
      tc.seed = Rng::derive(seed, 30 + static_cast<std::uint64_t>(tv));
      Wav2LipTrainResult run =
          train_wav2lip(corpus, wtv, ecfg, frozen, gcfg, dcfg, tc);
      const LipGenerator gmodel(gcfg);
      const auto [lse_d, lse_c] =
          dubbed_lse(corpus, gmodel, run.generator, wtv, scorer_cfg, scorer, wcfg,
                     budgets.lse_clips, budgets.max_offset);
      frozen_row.lse_d = lse_d;
      frozen_row.lse_c = lse_c;
    }
    rows.push_back(frozen_row);

    // Fine-tuned row: the expert keeps learning on generated faces.
    AblationRow tuned_row;
    tuned_row.tv = tv;
    tuned_row.fine_tuned = true;
    {
      FinetuneBudget fb;
      fb.steps = budgets.finetune_steps;
      fb.batch_size = budgets.gan_batch_groups * tv;
      fb.seed = Rng::derive(seed, 40 + static_cast<std::uint64_t>(tv));
      ParameterSet co_gen;
      ParameterSet tuned = finetune_expert_in_gan(ecfg, trained.params, gcfg, corpus,
                                                  wtv, fb, &co_gen);
      tuned_row.off_sync_acc = off_sync_accuracy(emodel, tuned, pairs);
      const LipGenerator gmodel(gcfg);
      const auto [lse_d, lse_c] =
          dubbed_lse(corpus, gmodel, co_gen, wtv, scorer_cfg, scorer, wcfg,
                     budgets.lse_clips, budgets.max_offset);
      tuned_row.lse_d = lse_d;
      tuned_row.lse_c = lse_c;
    }
    rows.push_back(tuned_row);
  }
  return rows;
}

}  // namespace lipsync
