#include "svic/rank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "svic/common.hpp"

namespace svic {

namespace {
constexpr double kCritical = 1.96;
}

bool dominates(const ImportanceSummary& summary, size_t j, size_t k) {
  if (j == k) throw ValidationError("dominates: j and k must differ");
  const double delta = summary.mean_abs[j] - summary.mean_abs[k];
  const double denom =
      std::sqrt(summary.se[j] * summary.se[j] + summary.se[k] * summary.se[k]);
  if (denom == 0.0) return delta > 0.0;  // limit of the z test
  return delta > 0.0 && std::fabs(delta) / denom > kCritical;
}

ModelRanks model_ranks(const ImportanceSummary& summary) {
  const size_t d = summary.var_names.size();
  if (d < 2) throw ValidationError("ranking needs at least 2 variables");
  ModelRanks out;
  out.dominance_counts.assign(d, 0);
  for (size_t j = 0; j < d; ++j)
    for (size_t k = 0; k < d; ++k)
      if (j != k && dominates(summary, j, k)) ++out.dominance_counts[j];
  out.ranks.assign(d, 1);
  for (size_t j = 0; j < d; ++j)
    for (size_t k = 0; k < d; ++k)
      if (out.dominance_counts[k] > out.dominance_counts[j]) ++out.ranks[j];
  return out;
}

RankResult ensemble_ranking(const std::vector<ImportanceSummary>& summaries) {
  if (summaries.empty()) throw ValidationError("ensemble ranking needs at least 1 model");
  const auto& names = summaries.front().var_names;
  const size_t d = names.size();

  RankResult r;
  r.var_names = names;
  for (const auto& s : summaries) {
    if (s.var_names != names)
      throw ValidationError("inconsistent variable sets across model summaries");
    const ModelRanks mr = model_ranks(s);
    r.model_ids.push_back(s.model_id);
    r.per_model_ranks.push_back(mr.ranks);
    r.dominance_counts.push_back(mr.dominance_counts);
  }

  r.avg_rank.assign(d, 0.0);
  for (const auto& row : r.per_model_ranks)
    for (size_t j = 0; j < d; ++j) r.avg_rank[j] += row[j];
  for (size_t j = 0; j < d; ++j) r.avg_rank[j] /= static_cast<double>(summaries.size());

  r.ensemble_order.resize(d);
  std::iota(r.ensemble_order.begin(), r.ensemble_order.end(), size_t{0});
  std::sort(r.ensemble_order.begin(), r.ensemble_order.end(), [&](size_t a, size_t b) {
    if (r.avg_rank[a] != r.avg_rank[b]) return r.avg_rank[a] < r.avg_rank[b];
    return names[a] < names[b];
  });
  return r;
}

void write_rank_csv(const RankResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "model_id,variable,dominance_count,rank\n";
  for (size_t m = 0; m < r.model_ids.size(); ++m)
    for (size_t j = 0; j < r.var_names.size(); ++j)
      out << r.model_ids[m] << ',' << r.var_names[j] << ',' << r.dominance_counts[m][j]
          << ',' << r.per_model_ranks[m][j] << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

void write_ensemble_rank_csv(const RankResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "variable,avg_rank,ensemble_position\n";
  for (size_t pos = 0; pos < r.ensemble_order.size(); ++pos) {
    const size_t j = r.ensemble_order[pos];
    out << r.var_names[j] << ',' << fmt_double(r.avg_rank[j]) << ',' << pos + 1 << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace svic
