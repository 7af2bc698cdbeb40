// SPDX-License-Identifier: Apache-2.0
// mimk: phantom generation, training, evaluation, augmentation ablation and
// plotting. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mimk/commands.hpp"
#include "mimk/errors.hpp"
#include "mimk/parallel.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run configuration file (key = value lines)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "seed override");
  cmd->add_option("--set", o.set, "extra key=value entries applied after the file");
}

mimk::RunConfig resolve(const Overrides& o) {
  mimk::RunConfig cfg =
      o.config.empty() ? mimk::preset_config("desk") : mimk::load_run_config(o.config);
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mimk::UsageError("--set expects key=value, got '" + kv + "'");
    mimk::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.out) cfg.train.out_dir = *o.out;
  if (o.seed) mimk::set_config_value(cfg, "seed", std::to_string(*o.seed));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked image modeling on simulated MRI k-space"};
  app.require_subcommand(1);

  Overrides phantom_o, train_o, eval_o, ablate_o;
  std::size_t n_phantoms = 10, size = 64;
  std::uint64_t phantom_seed = 0;
  auto* phantom = app.add_subcommand("phantom", "write phantom images, k-space renderings, manifest");
  phantom->add_option("-n,--count", n_phantoms, "number of phantoms");
  phantom->add_option("--size", size, "image side (power of two)");
  phantom->add_option("--seed", phantom_seed, "seed");
  std::string phantom_out = "phantoms";
  phantom->add_option("--out", phantom_out, "output directory");

  auto* train = app.add_subcommand("train", "train a model and write a run directory");
  add_common(train, train_o);

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a data split");
  add_common(eval, eval_o);
  mimk::EvalOptions eval_opts;
  std::string checkpoint, predictor = "model", mask;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval->add_option("--split", eval_opts.split, "train|val|all")->capture_default_str();
  eval->add_option("--predictor", predictor, "model|identity|zero (identity and zero are debug)")
      ->capture_default_str();
  eval->add_option("--mask", mask, "mask spec, e.g. 'patch ratio=0.5 seed=7 grid=16x16'");

  auto* ablate = app.add_subcommand("ablate-aug", "compare augment=none with augment=flip_crop");
  add_common(ablate, ablate_o);

  auto* plot = app.add_subcommand("plot", "plot metrics.csv columns as SVG");
  std::string csv, plot_out = "plot.svg", columns = "train_loss,val_loss";
  plot->add_option("--csv", csv, "metrics.csv")->required();
  plot->add_option("--columns", columns, "comma-separated column names")->capture_default_str();
  plot->add_option("--out", plot_out, "output SVG path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    mimk::configure_threads_from_env();
    if (phantom->parsed()) {
      mimk::run_phantom(n_phantoms, size, phantom_seed, phantom_out, std::cout);
    } else if (train->parsed()) {
      mimk::run_train(resolve(train_o), std::cout);
    } else if (eval->parsed()) {
      if (predictor == "model") {
        eval_opts.predictor = mimk::Predictor::kModel;
        if (checkpoint.empty()) throw mimk::UsageError("--checkpoint is required");
      } else if (predictor == "identity") {
        eval_opts.predictor = mimk::Predictor::kIdentity;
      } else if (predictor == "zero") {
        eval_opts.predictor = mimk::Predictor::kZero;
      } else {
        throw mimk::UsageError("unknown predictor '" + predictor + "'");
      }
      eval_opts.checkpoint = checkpoint;
      if (!mask.empty()) eval_opts.mask_spec = mask;
      mimk::run_eval(resolve(eval_o), eval_opts, std::cout);
    } else if (ablate->parsed()) {
      mimk::run_ablation(resolve(ablate_o), std::cout);
    } else if (plot->parsed()) {
      std::vector<std::string> cols;
      std::istringstream is(columns);
      for (std::string c; std::getline(is, c, ',');) cols.push_back(c);
      mimk::run_plot(csv, cols, plot_out);
    }
  } catch (const mimk::ContractError& e) {
    std::cerr << "mimk: " << e.what() << '\n';
    return 2;
  } catch (const mimk::FormatError& e) {
    std::cerr << "mimk: " << e.what() << '\n';
    return 2;
  } catch (const mimk::TrainingError& e) {
    std::cerr << "mimk: training aborted: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mimk: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
