#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svic/common.hpp"
#include "svic/matrix.hpp"
#include "svic/mlp.hpp"

namespace svic {

enum class ShapMethod { exact, permutation };

struct ShapConfig {
  Matrix background;          // k x d reference rows
  ShapMethod method = ShapMethod::exact;
  int n_permutations = 200;   // permutation method only
  std::uint64_t seed = 0;
  int exact_limit = 15;       // exact method ceiling: 2^d coalition evaluations
};

// `size` training rows sampled without replacement (all of them when fewer).
Matrix make_background(const Matrix& train_rows, size_t size, std::uint64_t seed);

// Marginal value function: mean prediction over background rows with the
// coalition's features pinned to x and the rest taken from the background.
double value_function(const MLPModel& model, const double* x,
                      const std::vector<size_t>& coalition, const Matrix& background);

// Exact Shapley attribution over all 2^d coalitions. d <= exact_limit.
std::vector<double> shap_exact(const MLPModel& model, const double* x,
                               const Matrix& background, int exact_limit = 15);

struct PermutationShap {
  std::vector<double> phi;    // attribution estimate
  std::vector<double> mc_se;  // Monte Carlo standard error per coordinate
};

// Monte Carlo estimate averaging marginal contributions along random
// orderings; antithetic pairs (every odd ordering is the reverse of the
// previous one). Deterministic in seed.
PermutationShap shap_permutation(const MLPModel& model, const double* x,
                                 const Matrix& background, int n_permutations,
                                 std::uint64_t seed);

struct ShapMatrix {
  Matrix values;           // m x d; (i, j) = attribution of variable j for row i
  double base_value = 0.0; // mean background prediction
};

// Attributions for every explanation row. Per-row streams derive from
// (cfg.seed, model_id, row), so the result is schedule-independent.
// Falls back to the permutation method when d exceeds cfg.exact_limit.
ShapMatrix shap_matrix(const MLPModel& model, const Matrix& rows, const ShapConfig& cfg,
                       std::uint64_t model_id, Exec exec = Exec::parallel);

// Per-variable global importance of one model: mean |SHAP| over the
// explanation rows and its standard error.
struct ImportanceSummary {
  std::uint64_t model_id = 0;
  std::vector<std::string> var_names;
  std::vector<double> mean_abs;
  std::vector<double> se;
  double valid_loss = 0.0;
};

// mean_abs / se columns from an attribution matrix. se of a single row is 0.
void summarize_matrix(const Matrix& values, std::vector<double>& mean_abs,
                      std::vector<double>& se);

ImportanceSummary summarize_importance(const MLPModel& model, double valid_loss,
                                       std::uint64_t model_id,
                                       const std::vector<std::string>& var_names,
                                       const Matrix& explain_rows, const ShapConfig& cfg,
                                       Exec exec = Exec::parallel);

void write_shap_csv(const std::string& path, const std::vector<ShapMatrix>& matrices,
                    const std::vector<std::string>& var_names);
void write_summary_csv(const std::string& path,
                       const std::vector<ImportanceSummary>& summaries);
std::vector<ImportanceSummary> read_summary_csv(const std::string& path);

}  // namespace svic
