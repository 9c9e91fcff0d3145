#pragma once

#include <string>
#include <vector>

#include "svic/shap.hpp"

namespace svic {

// True iff variable j is significantly more important than k for this
// model: the importance difference is positive and its z statistic exceeds
// 1.96. With both standard errors zero the test degenerates to a sign check.
bool dominates(const ImportanceSummary& summary, size_t j, size_t k);

struct ModelRanks {
  std::vector<int> dominance_counts;  // per variable, 0..d-1
  std::vector<int> ranks;             // competition ranks, 1 = most important
};

// count_j = number of variables j dominates; rank_j = 1 + |{k : count_k > count_j}|
// (tied counts share the smallest available rank).
ModelRanks model_ranks(const ImportanceSummary& summary);

struct RankResult {
  std::vector<std::string> var_names;
  std::vector<std::uint64_t> model_ids;
  std::vector<std::vector<int>> per_model_ranks;      // M x d
  std::vector<std::vector<int>> dominance_counts;     // M x d
  std::vector<double> avg_rank;                       // length d
  std::vector<size_t> ensemble_order;                 // variable indices, best first
};

// Ranks every model, then orders variables by ascending average rank;
// ties break by variable name ascending.
RankResult ensemble_ranking(const std::vector<ImportanceSummary>& summaries);

void write_rank_csv(const RankResult& r, const std::string& path);
void write_ensemble_rank_csv(const RankResult& r, const std::string& path);

}  // namespace svic
