#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "tsan/log.hpp"
#include "tsan/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Temporal-spatial attention network for DoS detection on NSL-KDD traffic"};
  app.set_version_flag("--version", std::string(tsan::version_string()));
  app.require_subcommand(1);
  app.fallthrough();

  tsan::cli::Options opt;
  bool verbose = false;
  bool quiet = false;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  app.add_flag("-v,--verbose", verbose, "Log debug messages");
  app.add_flag("-q,--quiet", quiet, "Log warnings and errors only");

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "JSON run configuration (defaults when omitted)");
    cmd->add_option("--out", opt.out, "Output directory (overrides output.dir)");
    cmd->add_option("--seed", seed, "Seed for data split, pretraining and training");
  };
  auto data_dir = [&](CLI::App* cmd) {
    cmd->add_option("--data", opt.data, "Directory holding the preprocessed containers (default: --out)");
  };
  auto repetitions = [&](CLI::App* cmd) {
    cmd->add_option("--repetitions", opt.repetitions, "Timed inference repetitions")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth-data", "Write synthetic NSL-KDD-format train and test files");
  common(synth);
  synth->add_option("--n", opt.n, "Training records")->capture_default_str();
  synth->add_option("--test-n", opt.test_n, "Test records (default n/2)");
  synth->add_option("--dos-fraction", opt.dos_fraction, "Fraction of DoS records")->capture_default_str();

  auto* pre = app.add_subcommand("preprocess", "Encode, window and split the NSL-KDD files into containers");
  common(pre);

  auto* pretrain = app.add_subcommand("pretrain", "Self-supervised pretraining of both encoders");
  common(pretrain);
  data_dir(pretrain);

  auto* train = app.add_subcommand("train", "Supervised multi-task training with early stopping");
  common(train);
  data_dir(train);
  repetitions(train);
  train->add_option("--from-pretrained", opt.from_pretrained, "Pretrained encoder container to start from");

  auto* evaluate = app.add_subcommand("evaluate", "Metrics, ROC curve and timing for a checkpoint");
  common(evaluate);
  data_dir(evaluate);
  repetitions(evaluate);
  evaluate->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");
  evaluate->add_option("--input", opt.input, "Dataset container (default: <data>/test.bin)");
  evaluate->add_option("--threshold", threshold, "Decision threshold");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the ablation variants");
  common(ablate);
  data_dir(ablate);
  repetitions(ablate);
  ablate->add_option("--variant", opt.variants, "Variant(s) to run (default: all six)");

  auto* predict = app.add_subcommand("predict", "Per-window scores and decisions as CSV");
  common(predict);
  predict->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");
  predict->add_option("--input", opt.input, "Dataset container or raw NSL-KDD text file")->required();
  predict->add_option("--threshold", threshold, "Decision threshold");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the full-model gradient");
  common(grad);
  data_dir(grad);
  grad->add_option("--checkpoint", opt.checkpoint, "Checkpoint to check (default: fresh model)");
  grad->add_option("--samples", opt.samples, "Scalar parameters to check")->capture_default_str();
  grad->add_option("--batch", opt.batch, "Windows in the check batch")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (verbose) tsan::log::set_min_level(tsan::log::Level::debug);
  if (quiet) tsan::log::set_min_level(tsan::log::Level::warn);
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) opt.seed = seed;
    if (sub->get_option_no_throw("--threshold") && sub->count("--threshold") > 0) opt.threshold = threshold;
    return tsan::cli::run(sub->get_name(), opt, std::cout, std::cerr);
  }
  return 1;
}
