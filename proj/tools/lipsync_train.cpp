#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/inference.hpp"
#include "lipsync/quality_gan.hpp"

using namespace lipsync;

namespace {

WindowConfig window_by_name(const std::string& name) {
  if (name == "toy") return WindowConfig::toy();
  if (name == "default") return WindowConfig::defaults();
  throw ConfigMismatch("unknown window preset '" + name + "'");
}

SyncExpertConfig expert_for(const WindowConfig& w, bool toy) {
  return toy ? SyncExpertConfig::for_window(w, 32, {8, 16, 32})
             : SyncExpertConfig::for_window(w, 512, {32, 64, 128, 256, 512});
}

GeneratorConfig generator_for(const WindowConfig& w, bool toy) {
  return toy ? GeneratorConfig::for_window(w, 8, 3, {8, 16, 32})
             : GeneratorConfig::for_window(w, 32, 4, {32, 64, 128});
}

QualityDiscConfig disc_for(const WindowConfig& w, bool toy) {
  return toy ? QualityDiscConfig::for_window(w, {8, 16, 32})
             : QualityDiscConfig::for_window(w, {32, 64, 128, 256});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Trains the lip-sync pipeline on a corpus manifest: first the sync\n"
      "expert (unless a frozen one is supplied), then the generator against\n"
      "the frozen expert and the visual-quality discriminator."};

  std::string corpus_path, run_dir, window_name = "toy", expert_ckpt;
  TrainConfig train;
  ExpertTrainConfig expert_train;
  expert_train.eval_interval = 250;
  expert_train.eval_pairs = 200;
  train.steps = 1000;
  std::int64_t checkpoint_interval = 0;

  app.add_option("--corpus", corpus_path, "Corpus manifest.tsv")->required();
  app.add_option("--run-dir", run_dir, "Output run directory")->required();
  app.add_option("--window", window_name, "'toy' or 'default' window geometry");
  app.add_option("--expert-ckpt", expert_ckpt,
                 "Pre-trained sync expert checkpoint (skips expert training)");
  app.add_option("--expert-steps", expert_train.steps, "Expert training steps");
  app.add_option("--expert-batch", expert_train.batch_size, "Expert batch size");
  app.add_option("--expert-lr", expert_train.lr, "Expert learning rate");
  app.add_option("--steps", train.steps, "Generator training steps");
  app.add_option("--batch", train.batch_size, "Generator batch size (frames)");
  app.add_option("--lr", train.lr, "Generator/discriminator learning rate");
  app.add_option("--sync-weight", train.sync_weight, "Expert sync loss weight");
  app.add_option("--adv-weight", train.adv_weight, "Adversarial loss weight");
  app.add_option("--seed", train.seed, "Training seed");
  app.add_option("--checkpoint-interval", checkpoint_interval,
                 "Save generator snapshots every N steps (0 = only final)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const bool toy = window_name == "toy";
    const WindowConfig wcfg = window_by_name(window_name);
    ToyCorpus corpus = load_corpus(corpus_path);

    SyncExpertConfig expert_cfg = expert_for(wcfg, toy);
    ParameterSet expert_params;
    if (!expert_ckpt.empty()) {
      auto [cfg, params] = load_sync_expert(expert_ckpt);
      expert_cfg = cfg;
      expert_params = std::move(params);
      std::printf("loaded expert from %s\n", expert_ckpt.c_str());
    } else {
      expert_train.seed = Rng::derive(train.seed, 1);
      std::printf("training expert: %lld steps, batch %lld\n",
                  static_cast<long long>(expert_train.steps),
                  static_cast<long long>(expert_train.batch_size));
      ExpertTrainResult r = train_expert(corpus, wcfg, expert_cfg, expert_train);
      if (r.final_eval_accuracy >= 0.0)
        std::printf("expert off-sync accuracy: %.3f\n", r.final_eval_accuracy);
      expert_params = std::move(r.params);
      std::filesystem::create_directories(run_dir);
      save_sync_expert(expert_params, expert_cfg, run_dir + "/expert.ckpt");
    }
    expert_params.frozen = true;

    train.run_dir = run_dir;
    train.checkpoint_interval = checkpoint_interval;
    GeneratorConfig gen_cfg = generator_for(wcfg, toy);
    QualityDiscConfig disc_cfg = disc_for(wcfg, toy);
    std::printf("training generator: %lld steps, batch %lld\n",
                static_cast<long long>(train.steps),
                static_cast<long long>(train.batch_size));
    Wav2LipTrainResult result =
        train_wav2lip(corpus, wcfg, expert_cfg, expert_params, gen_cfg, disc_cfg, train);
    if (!result.history.empty()) {
      const Wav2LipStepLog& last = result.history.back();
      std::printf("final: l_recon %.5f  e_sync %.5f  l_gen %.5f  l_total %.5f\n",
                  last.l_recon, last.e_sync, last.l_gen, last.l_total);
    }

    const std::string inference_path = run_dir + "/inference.ckpt";
    save_inference_checkpoint(result.generator, gen_cfg, wcfg, inference_path);
    std::printf("wrote %s\n", inference_path.c_str());
    return 0;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "lipsync-train: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "lipsync-train: %s\n", e.what());
    return 2;
  }
}
