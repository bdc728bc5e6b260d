#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "histmap/commands.hpp"
#include "histmap/error.hpp"

using namespace histmap;

int main(int argc, char** argv) {
  CLI::App app{"Building instance segmentation and linking across historical map series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::optional<uint64_t> seed;
  std::string config_path;
  std::string out = "out";
  bool quiet = false;
  app.add_option("--seed", seed, "Master seed (overrides the config file)");
  app.add_option("--config", config_path, "Key-value config file")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::string mode;
  const auto mode_check = CLI::IsMember({"video", "tileset"});

  auto* genmap = app.add_subcommand("genmap", "Generate annotated synthetic maps");

  std::string synth_in;
  auto* synth = app.add_subcommand("synth", "Turn annotated maps into two-frame pseudo videos");
  synth->add_option("input", synth_in, "Dataset of annotated maps")->required();

  std::string train_in;
  auto* trn = app.add_subcommand("train", "Fine-tune the model on a video dataset");
  trn->add_option("dataset", train_in, "Training dataset")->required();
  trn->add_option("--mode", mode, "Task mode")->check(mode_check);

  std::string infer_in, checkpoint, prompts, prompt_file;
  std::optional<double> sigma;
  auto* infer = app.add_subcommand("infer", "Segment and link instances");
  infer->add_option("input", infer_in, "Dataset to segment")->required();
  infer->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  infer->add_option("--mode", mode, "Task mode")->check(mode_check);
  infer->add_option("--prompts", prompts, "Prompt source")->check(CLI::IsMember({"oracle", "jitter", "file"}));
  infer->add_option("--sigma", sigma, "Jitter standard deviation in pixels")->check(CLI::NonNegativeNumber);
  infer->add_option("--prompt-file", prompt_file, "Prompt JSON file, or a directory of <video>.json");

  std::string pred_dir, gt_dir;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("predictions", pred_dir, "Prediction directory")->required();
  eval->add_option("ground_truth", gt_dir, "Ground-truth dataset")->required();
  eval->add_option("--mode", mode, "Task mode")->check(mode_check);

  std::string embeddings, policy = "self_sorting";
  auto* bankdemo = app.add_subcommand("bankdemo", "Replay embeddings through a memory bank");
  bankdemo->add_option("embeddings", embeddings, "Embedding JSON file")->required();
  bankdemo->add_option("--policy", policy, "Retention policy")->check(CLI::IsMember({"self_sorting", "fifo"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::invalid_argument);
  }

  try {
    RunContext ctx;
    if (!config_path.empty()) ctx.settings = load_settings(config_path);
    if (seed) ctx.settings.seed = *seed;
    if (!mode.empty()) ctx.settings.train.mode = mode == "video" ? TaskMode::video : TaskMode::tileset;
    if (!prompts.empty())
      ctx.settings.prompts.mode = prompts == "oracle"   ? PromptMode::oracle
                                  : prompts == "jitter" ? PromptMode::jittered_oracle
                                                        : PromptMode::from_file;
    if (sigma) ctx.settings.prompts.sigma = *sigma;
    if (!prompt_file.empty()) ctx.settings.prompts.file = prompt_file;
    ctx.out = out;
    ctx.log = quiet ? nullptr : &std::cout;

    if (*genmap) cmd_genmap(ctx);
    else if (*synth) cmd_synth(ctx, synth_in);
    else if (*trn) cmd_train(ctx, train_in);
    else if (*infer) cmd_infer(ctx, checkpoint, infer_in);
    else if (*eval) cmd_eval(ctx, pred_dir, gt_dir);
    else if (*bankdemo)
      cmd_bankdemo(ctx, embeddings, policy == "fifo" ? BankDemoPolicy::fifo : BankDemoPolicy::self_sorting);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
