#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "lipsync/errors.hpp"
#include "lipsync/lse_eval.hpp"

using namespace lipsync;

int main(int argc, char** argv) {
  CLI::App app{
      "Synthesizes a procedural audio-visual corpus and, optionally, a\n"
      "deterministic dubbing-benchmark manifest over it."};

  std::string out_dir, window_name = "toy", bench_out;
  std::int64_t tracks = 10, frames = 120, pairs = 0;
  std::uint64_t seed = 7, bench_seed = 17;

  app.add_option("--out", out_dir, "Corpus output directory")->required();
  app.add_option("--tracks", tracks, "Number of tracks");
  app.add_option("--frames", frames, "Frames per track");
  app.add_option("--seed", seed, "Corpus seed");
  app.add_option("--window", window_name, "'toy' or 'default' window geometry");
  app.add_option("--pairs", pairs, "Also emit a benchmark manifest with this many pairs");
  app.add_option("--bench-seed", bench_seed, "Benchmark sampling seed");
  app.add_option("--bench-out", bench_out,
                 "Benchmark manifest path (default <out>/benchmark.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    WindowConfig wcfg;
    if (window_name == "toy")
      wcfg = WindowConfig::toy();
    else if (window_name == "default")
      wcfg = WindowConfig::defaults();
    else
      throw ConfigMismatch("unknown window preset '" + window_name + "'");

    ToyCorpus corpus = synth_toy_corpus(wcfg, tracks, seed, frames);
    const std::string manifest = save_corpus(corpus, out_dir);
    std::printf("wrote %s (%lld tracks x %lld frames)\n", manifest.c_str(),
                static_cast<long long>(tracks), static_cast<long long>(frames));

    if (pairs > 0) {
      if (bench_out.empty()) bench_out = out_dir + "/benchmark.tsv";
      std::vector<BenchmarkPair> bench = build_benchmark(manifest, bench_seed, pairs);
      write_benchmark_manifest(bench_out, bench);
      std::printf("wrote %s (%zu pairs)\n", bench_out.c_str(), bench.size());
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "lipsync-data: %s\n", e.what());
    return 2;
  }
}
