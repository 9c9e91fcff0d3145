// svic: samples nearly optimal MLPs around a trained optimum, attributes
// their predictions with Shapley values, pools the per-model importances
// with a random-effects meta-analysis, and writes uncertainty-aware
// importance rankings and plot data.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "svic/pipeline.hpp"

namespace {

struct CliArgs {
  svic::PipelineOptions opt;
  double epsilon = -1.0;     // <0: keep config value
  std::int64_t explain = -1; // <0: default sizing
  bool serial = false;
};

void add_common(CLI::App* cmd, CliArgs& args, bool needs_data) {
  if (needs_data) {
    cmd->add_option("--data", args.opt.data_path, "input CSV")->required();
    cmd->add_option("--schema", args.opt.schema_path, "column-role JSON")->required();
    cmd->add_option("--config", args.opt.config_path, "config JSON (optional)");
  }
  cmd->add_option("--out", args.opt.out_dir, "output directory")->required();
  cmd->add_option("--seed", args.opt.master_seed, "master seed")->capture_default_str();
  cmd->add_option("--epsilon", args.epsilon, "Rashomon loss tolerance override");
  cmd->add_flag("--serial", args.serial, "disable OpenMP parallelism");
}

void finalize(CliArgs& args) {
  if (args.epsilon >= 0.0) args.opt.epsilon_override = args.epsilon;
  if (args.explain >= 0) args.opt.explain_count = static_cast<size_t>(args.explain);
  if (args.serial) args.opt.exec = svic::Exec::serial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shapley variable importance over nearly optimal MLPs"};
  app.require_subcommand(1);

  CliArgs args;

  CLI::App* run = app.add_subcommand("run", "end-to-end pipeline");
  add_common(run, args, true);
  run->add_option("--explain-count", args.explain, "explanation rows (default min(2500, n/5))");
  run->add_option("--train-frac", args.opt.train_frac, "train share of the non-explanation rows")
      ->capture_default_str();

  CLI::App* fit = app.add_subcommand("fit", "split the data and train the optimal model");
  add_common(fit, args, true);
  fit->add_option("--explain-count", args.explain, "explanation rows (default min(2500, n/5))");
  fit->add_option("--train-frac", args.opt.train_frac, "train share of the non-explanation rows")
      ->capture_default_str();

  CLI::App* sample = app.add_subcommand("sample", "sample the nearly optimal ensemble");
  add_common(sample, args, true);

  CLI::App* explain = app.add_subcommand("explain", "Shapley attributions per model");
  add_common(explain, args, true);

  CLI::App* pool = app.add_subcommand("pool", "meta-analysis of per-model importances");
  add_common(pool, args, false);

  CLI::App* rank = app.add_subcommand("rank", "per-model and ensemble variable ranking");
  add_common(rank, args, false);

  CLI::App* report = app.add_subcommand("report", "plots, rank comparison and parsimony");
  add_common(report, args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a validation error
  }

  finalize(args);
  try {
    if (run->parsed()) svic::run_pipeline(args.opt);
    if (fit->parsed()) svic::stage_fit(args.opt);
    if (sample->parsed()) svic::stage_sample(args.opt);
    if (explain->parsed()) svic::stage_explain(args.opt);
    if (pool->parsed()) svic::stage_pool(args.opt);
    if (rank->parsed()) svic::stage_rank(args.opt);
    if (report->parsed()) svic::stage_report(args.opt);
  } catch (const svic::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const svic::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
