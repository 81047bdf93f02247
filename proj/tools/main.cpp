// Command-line harness: train/eval/sweep-tau/variance/ponder-demo over the
// adaptive-computation lab.
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pact/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"adaptive computation time lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  std::string mode = "discrete";
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<double> taus;
  std::vector<int> groupings;
  std::vector<double> tail;
  int examples = 1024;
  uint64_t eval_seed = 9999;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint in a given mode");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  eval->add_option("--mode", mode, "relaxed|discrete|thresholded|act");
  eval->add_option("--examples", examples, "evaluation set size");
  eval->add_option("--seed", eval_seed, "evaluation data seed");
  eval->add_option("--out", out_dir, "output directory (default: checkpoint directory)");

  CLI::App* sweep = app.add_subcommand("sweep-tau", "train across a list of tau penalties");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--tau", taus, "tau values")->required()->delimiter(',');
  add_common(sweep);

  CLI::App* variance = app.add_subcommand("variance", "gradient-variance benchmark on the grid model");
  variance->add_option("--config", config_path, "experiment config (JSON, grid model)")->required();
  variance->add_option("--groupings", groupings, "patch sizes, e.g. 1,2,4")->delimiter(',');
  add_common(variance);

  CLI::App* ponder = app.add_subcommand("ponder-demo", "emit the ponder-cost curve rho(h1)");
  ponder->add_option("--tail", tail, "tail halting probabilities (default 1/3,1/3,1/3)")
      ->delimiter(',');
  ponder->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  pact::cli::CommonOverrides ov{seed, out_dir};
  if (train->parsed()) return pact::cli::cmd_train(config_path, ov);
  if (eval->parsed())
    return pact::cli::cmd_eval(checkpoint_path, mode, examples, eval_seed, out_dir);
  if (sweep->parsed()) return pact::cli::cmd_sweep_tau(config_path, taus, ov);
  if (variance->parsed()) {
    if (groupings.empty()) groupings = {1, 2, 4};
    return pact::cli::cmd_variance(config_path, groupings, ov);
  }
  if (ponder->parsed()) return pact::cli::cmd_ponder_demo(tail, out_dir);
  return 2;
}
