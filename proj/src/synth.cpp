#include "svic/synth.hpp"

#include <cmath>
#include <string>

#include "svic/common.hpp"
#include "svic/rng.hpp"

namespace svic {

Dataset make_logistic_dataset(size_t n, const std::vector<double>& coeffs,
                              std::uint64_t seed, double intercept) {
  const size_t d = coeffs.size();
  if (n < 2 || d < 2) throw ValidationError("generator needs n >= 2 and d >= 2");
  Rng rng(seed);
  Dataset ds;
  ds.features = Matrix(n, d);
  ds.outcome.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double z = intercept;
    for (size_t j = 0; j < d; ++j) {
      const double x = rng.normal();
      ds.features(i, j) = x;
      z += coeffs[j] * x;
    }
    const double p = 1.0 / (1.0 + std::exp(-z));
    ds.outcome[i] = rng.uniform01() < p ? 1 : 0;
  }
  for (size_t j = 0; j < d; ++j) {
    ds.var_names.push_back("x" + std::to_string(j + 1));
    ds.var_kinds.push_back(VarKind::continuous);
  }
  ds.level_labels.resize(d);
  ds.outcome_name = "y";
  return ds;
}

Dataset make_blobs_dataset(size_t n, std::uint64_t seed, double center, double sigma) {
  if (n < 2) throw ValidationError("generator needs n >= 2");
  Rng rng(seed);
  Dataset ds;
  ds.features = Matrix(n, 2);
  ds.outcome.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label ? center : -center;
    ds.features(i, 0) = cx + sigma * rng.normal();
    ds.features(i, 1) = cx + sigma * rng.normal();
    ds.outcome[i] = label;
  }
  ds.var_names = {"x1", "x2"};
  ds.var_kinds = {VarKind::continuous, VarKind::continuous};
  ds.level_labels.resize(2);
  ds.outcome_name = "y";
  return ds;
}

Dataset make_mixed_dataset(size_t n, std::uint64_t seed) {
  if (n < 3) throw ValidationError("generator needs n >= 3");
  Rng rng(seed);
  Dataset ds;
  ds.features = Matrix(n, 5);
  ds.outcome.resize(n);
  const std::vector<std::string> levels = {"low", "mid", "high"};
  for (size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (size_t j = 0; j < 4; ++j) {
      const double x = rng.normal();
      ds.features(i, j) = x;
      z += (j == 0 ? 1.5 : 0.3) * x;
    }
    const size_t level = i < 3 ? i : rng.below(3);  // all levels observed, in order
    ds.features(i, 4) = static_cast<double>(level);
    z += 0.5 * static_cast<double>(level);
    ds.outcome[i] = rng.uniform01() < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0;
  }
  ds.var_names = {"a", "b", "c", "d", "grade"};
  ds.var_kinds = {VarKind::continuous, VarKind::continuous, VarKind::continuous,
                  VarKind::continuous, VarKind::categorical};
  ds.level_labels.resize(5);
  ds.level_labels[4] = levels;
  ds.outcome_name = "y";
  return ds;
}

}  // namespace svic
