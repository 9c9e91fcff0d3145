#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svic/common.hpp"
#include "svic/matrix.hpp"

namespace svic {

enum class VarKind { continuous, categorical };

// Tabular features with a binary outcome. Immutable after loading.
// Categorical columns store integer level codes in `features`; the code ->
// label mapping (first-appearance order) lives in `level_labels`.
struct Dataset {
  Matrix features;                        // n x d
  std::vector<int> outcome;               // length n, values in {0,1}
  std::vector<std::string> var_names;     // length d, unique, nonempty
  std::vector<VarKind> var_kinds;         // length d
  std::vector<std::vector<std::string>> level_labels;  // per column; empty for continuous
  std::string outcome_name = "outcome";

  size_t n() const { return features.rows(); }
  size_t d() const { return features.cols(); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.features == b.features && a.outcome == b.outcome &&
           a.var_names == b.var_names && a.var_kinds == b.var_kinds &&
           a.level_labels == b.level_labels && a.outcome_name == b.outcome_name;
  }
};

// Column-role declaration for load_csv. `features` empty means: all
// non-outcome columns in header order.
struct Schema {
  std::string outcome;
  std::vector<std::string> categorical;
  std::vector<std::string> features;
};

Schema load_schema(const std::string& path);
Schema parse_schema_json(const std::string& text, const std::string& origin);

Dataset load_csv(const std::string& path, const Schema& schema);
void write_csv(const Dataset& ds, const std::string& path);

// Disjoint train/validation/explanation partition of 0..n-1.
// Index vectors are sorted ascending.
struct DataSplit {
  std::vector<size_t> train_idx;
  std::vector<size_t> valid_idx;
  std::vector<size_t> explain_idx;
  std::uint64_t seed = 0;
};

// Draws the explanation rows first (uniform, without replacement), then
// splits the remainder train/valid; train gets the rounded-up share.
DataSplit split_dataset(const Dataset& ds, size_t explain_count,
                        double train_frac, std::uint64_t seed);

void save_split(const DataSplit& split, const std::string& path);
DataSplit load_split(const std::string& path, size_t n);

// One training subset for stage-2 fine-tuning: the rows of train_idx that
// fall into one bin of one variable.
struct SubsetSpec {
  size_t variable_index = 0;
  int bin_id = 0;
  std::vector<size_t> member_idx;  // subset of train_idx
};

// Continuous variables are binned at empirical quantiles of the training
// rows (ties at a boundary go to the lower bin); categorical variables get
// one bin per observed level. Bins smaller than min_subset_size are merged
// with an adjacent bin. Returns an empty list when the variable is constant
// on the training rows; callers skip such variables.
std::vector<SubsetSpec> make_subsets(const Dataset& ds, const DataSplit& split,
                                     size_t variable_index, int n_bins,
                                     size_t min_subset_size = 50);

}  // namespace svic
