#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "mcl/cli.hpp"
#include "mcl/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"desk-scale contrastive training laboratory for image "
               "restoration"};
  app.require_subcommand(1);

  mcl::GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "write a synthetic degraded/clean pair set");
  gen->add_option("--task", gen_args.task,
                  "degradation: sr2x, sr4x, haze, rain or blur");
  gen->add_option("--count", gen_args.count, "number of pairs");
  gen->add_option("--size", gen_args.size, "square image side length");
  gen->add_option("--seed", gen_args.seed, "dataset seed");
  gen->add_option("--out", gen_args.out_dir, "output directory")->required();

  std::string train_config, train_out;
  CLI::App* train =
      app.add_subcommand("train", "run one training configuration");
  train->add_option("--config", train_config, "config file")->required();
  train->add_option("--out", train_out, "output directory")->required();

  std::string eval_ckpt, eval_data;
  CLI::App* eval = app.add_subcommand(
      "eval", "score a checkpoint against an image-pair directory");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "directory of pairNNNN files")
      ->required();

  std::string ablate_grid, ablate_config, ablate_out;
  bool ablate_parallel = false;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "sweep one hyperparameter grid over a base config");
  ablate->add_option("--grid", ablate_grid, "lambda, ema_w, step or mode")
      ->required();
  ablate->add_option("--config", ablate_config, "base config file")
      ->required();
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate->add_flag("--parallel", ablate_parallel,
                   "run independent arms concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // stable contract: all usage errors exit 1
  }

  try {
    if (gen->parsed()) {
      mcl::cmd_gen_data(gen_args);
      return 0;
    }
    if (train->parsed()) {
      const mcl::RunStatus status = mcl::cmd_train(train_config, train_out);
      if (status == mcl::RunStatus::Collapsed) {
        std::cerr << "run collapsed; partial outputs written to " << train_out
                  << "\n";
        return 2;
      }
      return 0;
    }
    if (eval->parsed()) {
      mcl::cmd_eval(eval_ckpt, eval_data, std::cout);
      return 0;
    }
    if (ablate->parsed()) {
      mcl::cmd_ablate(ablate_grid, ablate_config, ablate_out,
                      ablate_parallel);
      return 0;
    }
  } catch (const mcl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mcl::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mcl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
