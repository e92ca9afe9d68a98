// dtk: train, evaluate, and analyze dilated VGG models on CIFAR.

#include <iostream>

#include "CLI11.hpp"
#include "dtk/commands.hpp"

namespace {

void common_flags(CLI::App* cmd, dtk::CommandOptions& o) {
  cmd->add_option("--config", o.config, "run configuration file");
  cmd->add_option("--set", o.overrides, "key=value override (repeatable)");
  cmd->add_option("--data-dir", o.data_dir, "directory with the CIFAR binaries");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "seed for split, init, shuffling, augmentation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dilated-convolution VGG transfer-learning toolkit"};
  app.require_subcommand(1);
  dtk::CommandOptions o;
  std::filesystem::path file;

  auto* train = app.add_subcommand("train", "train a configuration; writes metrics, checkpoint, manifest");
  common_flags(train, o);
  train->add_option("--weights", o.weights, "pretrained conv weights (NTL1)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split; appends eval.csv");
  common_flags(eval, o);
  eval->add_option("--weights", o.weights, "checkpoint to evaluate (NTL1)");
  eval->add_option("--split", o.split, "train, val, or test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* rf = app.add_subcommand("rf", "receptive-field coverage of a schedule or configuration");
  common_flags(rf, o);
  rf->add_option("--layers", o.layers, "schedule such as 3x3r2,3x3r2,3x3r2");

  app.add_subcommand("catalog", "list the dilation configurations");

  auto* inspect = app.add_subcommand("inspect", "list the entries of an NTL1 file");
  inspect->add_option("file", file, "NTL1 file")->required();

  auto* configs = app.add_subcommand("write-configs", "write one config file per catalog row");
  configs->add_option("dir", file, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dtk::kExitUsage;
  }

  return dtk::run_guarded(
      [&]() -> int {
        if (*train) return dtk::cmd_train(o, std::cout);
        if (*eval) return dtk::cmd_eval(o, std::cout);
        if (*rf) return dtk::cmd_rf(o, std::cout);
        if (app.got_subcommand("catalog")) return dtk::cmd_catalog(std::cout);
        if (*inspect) return dtk::cmd_inspect(file, std::cout);
        return dtk::cmd_write_configs(file, std::cout);
      },
      std::cerr);
}
