#pragma once

#include <optional>
#include <string>

#include "svic/rashomon.hpp"
#include "svic/report.hpp"
#include "svic/shap.hpp"

namespace svic {

struct ShapSettings {
  ShapMethod method = ShapMethod::exact;
  size_t background_size = 100;
  int n_permutations = 200;
};

// Parsed config file: architecture, training, sampling, explanation and
// report settings, all defaulted.
struct AppConfig {
  std::vector<int> hidden = {32};
  TrainConfig train;
  RashomonConfig rashomon;
  ShapSettings shap;
  ParsimonyMetric parsimony_metric = ParsimonyMetric::auroc;
};

AppConfig load_config(const std::string& path);
AppConfig parse_config_json(const std::string& text, const std::string& origin);

struct PipelineOptions {
  std::string data_path;
  std::string schema_path;
  std::string config_path;  // empty: all defaults
  std::string out_dir;
  std::uint64_t master_seed = 42;
  std::optional<double> epsilon_override;
  std::optional<size_t> explain_count;  // default: min(2500, n/5)
  double train_frac = 0.8;
  Exec exec = Exec::parallel;
  bool quiet = false;
};

// Stage-wise drivers. Each consumes/produces files under out_dir:
//   fit      -> split.json, ensemble/ (optimal model only)
//   sample   -> ensemble/ (full membership; reuses fit's optimal model)
//   explain  -> shap_values.csv, importance_summary.csv
//   pool     -> vic.csv, violin.csv
//   rank     -> model_ranks.csv, ensemble_rank.csv
//   report   -> bar.svg, violin.svg, rank_comparison.{csv,svg},
//               parsimony_{vic,shap}.csv, parsimony.svg
void stage_fit(const PipelineOptions& opt);
void stage_sample(const PipelineOptions& opt);
void stage_explain(const PipelineOptions& opt);
void stage_pool(const PipelineOptions& opt);
void stage_rank(const PipelineOptions& opt);
void stage_report(const PipelineOptions& opt);

// fit -> sample -> explain -> pool -> rank -> report
void run_pipeline(const PipelineOptions& opt);

}  // namespace svic
