#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svic/dataset.hpp"
#include "svic/meta.hpp"
#include "svic/mlp.hpp"
#include "svic/rank.hpp"

namespace svic {

enum class ParsimonyMetric { cross_entropy, auroc };

std::string metric_name(ParsimonyMetric m);
ParsimonyMetric metric_from_name(const std::string& name);

// Area under the ROC curve via the rank statistic; ties get average ranks.
// NaN when one class is absent.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ParsimonyEntry {
  int k = 0;
  std::vector<std::string> variable_set;  // the top-k variables
  double metric_value = 0.0;
  bool ok = true;  // false when the k-variable training diverged
};

struct ParsimonyCurve {
  ParsimonyMetric metric = ParsimonyMetric::auroc;
  std::vector<ParsimonyEntry> entries;  // k = 1..d, exactly once
};

// For each k trains a fresh model on the top-k ranked variables (columns
// sorted ascending, so the point depends on the variable set only) with a
// seed derived from (master_seed, k), and records the validation metric.
ParsimonyCurve parsimony(const Dataset& ds, const DataSplit& split,
                         const std::vector<int>& hidden, const TrainConfig& cfg,
                         const std::vector<size_t>& ranking_order, ParsimonyMetric metric,
                         std::uint64_t master_seed, Exec exec = Exec::parallel);

void write_parsimony_csv(const ParsimonyCurve& curve, const std::string& path);

// vic.csv next to an SVG bar chart sorted by descending pooled importance,
// with prediction-interval whiskers; bars whose interval excludes 0 are marked.
void emit_bar(const VicResult& vic, const std::string& dir);

// violin.csv (model_id, valid_loss, variable, mean_abs_shap) next to an SVG
// of per-variable importance distributions colored by validation loss.
void emit_violin(const VicResult& vic, const std::string& dir);

// Loss -> color interpolation endpoints: (min, max) member loss.
std::pair<double, double> loss_color_scale(const std::vector<double>& losses);

// Spearman rank correlation of two orders of the same variable set.
double spearman(const std::vector<std::string>& order_a,
                const std::vector<std::string>& order_b);

// rank_comparison.csv (variable, shap_rank, vic_rank) next to a slope chart;
// returns the Spearman correlation between the two orders.
double rank_comparison(const std::vector<std::string>& shap_order,
                       const std::vector<std::string>& vic_order, const std::string& dir);

void write_parsimony_svg(const std::vector<std::pair<std::string, ParsimonyCurve>>& curves,
                         const std::string& path);

}  // namespace svic
