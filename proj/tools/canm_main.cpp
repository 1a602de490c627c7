#include <iostream>

#include <CLI11.hpp>

#include "canm/cli.hpp"

namespace {

void add_training_flags(CLI::App* app, canm::vae::TrainConfig& train) {
  app->add_option("--epochs", train.epochs, "Training epochs per model")->check(CLI::PositiveNumber);
  app->add_option("--lr", train.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app->add_option("--mc-samples", train.mc_samples, "Monte-Carlo samples per training step")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace canm::cli;
  CLI::App app{"Cause-effect direction inference with cascade additive noise models"};
  app.require_subcommand(1);

  InferOptions infer;
  std::string infer_method = "canm";
  auto* c_infer = app.add_subcommand("infer", "Infer the causal direction of one pair file");
  c_infer->add_option("--pair", infer.pair_path, "Two-column pair file")->required();
  c_infer->add_option("--method", infer_method, "canm, anm_statistic (alias anm) or anm_significance");
  c_infer->add_option("--delta", infer.delta, "Minimum score gap for a decision")->check(CLI::NonNegativeNumber);
  c_infer->add_option("--kmax", infer.k_max, "Largest latent dimension considered");
  c_infer->add_option("--seed", infer.seed, "Random seed");
  c_infer->add_option("--permutations", infer.permutations, "HSIC permutations (anm methods)");
  c_infer->add_option("--out", infer.out_path, "Also write the JSON report here");
  add_training_flags(c_infer, infer.train);

  BenchConfig bench;
  std::vector<std::string> bench_methods;
  std::string bench_out;
  auto* c_bench = app.add_subcommand("bench", "Accuracy sweep over synthetic cascade pairs");
  c_bench->add_option("--depths", bench.depths, "Cascade depths")->delimiter(',');
  c_bench->add_option("--sizes", bench.sizes, "Sample sizes")->delimiter(',');
  c_bench->add_option("--pairs", bench.pairs_per_cell, "Pairs per (depth, size) cell")->check(CLI::PositiveNumber);
  c_bench->add_option("--method", bench_methods, "Methods to run (default: all)")->delimiter(',');
  c_bench->add_option("--delta", bench.delta, "Minimum score gap for a decision")->check(CLI::NonNegativeNumber);
  c_bench->add_option("--kmax", bench.k_max, "Largest latent dimension considered");
  c_bench->add_option("--seed", bench.seed, "Root seed");
  c_bench->add_option("--permutations", bench.permutations, "HSIC permutations");
  c_bench->add_option("--out", bench_out, "Directory for pairs.csv, summary.csv and bench.json");
  add_training_flags(c_bench, bench.train);

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen", "Generate one synthetic cascade pair");
  c_gen->add_option("--m", gen.m, "Sample size")->check(CLI::Range(2, 100000000));
  c_gen->add_option("--depth", gen.depth, "Number of hidden intermediates");
  c_gen->add_option("--seed", gen.seed, "Random seed");
  c_gen->add_option("--out", gen.out_dir, "Output directory");

  VerifyOptions verify;
  auto* c_verify = app.add_subcommand("verify", "Check the linear Gaussian and K = 0 identities numerically");
  c_verify->add_option("--a", verify.a, "Coefficient of X");
  c_verify->add_option("--b", verify.b, "Coefficient of the hidden noise");
  c_verify->add_option("--m", verify.m, "Sample size")->check(CLI::Range(50, 100000000));
  c_verify->add_option("--seed", verify.seed, "Random seed");
  c_verify->add_option("--permutations", verify.permutations, "HSIC permutations");
  add_training_flags(c_verify, verify.train);

  CLI11_PARSE(app, argc, argv);

  const std::size_t threads = thread_budget();
  try {
    if (*c_infer) {
      infer.method = method_from_string(infer_method);
      infer.threads = threads;
      return cmd_infer(infer, std::cout, std::cerr);
    }
    if (*c_bench) {
      if (!bench_methods.empty()) {
        bench.methods.clear();
        for (const auto& m : bench_methods) bench.methods.push_back(method_from_string(m));
      }
      bench.threads = threads;
      return cmd_bench(bench, bench_out, std::cout, std::cerr);
    }
    if (*c_gen) return cmd_gen(gen, std::cout, std::cerr);
    if (*c_verify) {
      verify.threads = threads;
      return cmd_verify(verify, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
  return failure;
}
