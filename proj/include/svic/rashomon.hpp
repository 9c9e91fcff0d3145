#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svic/dataset.hpp"
#include "svic/mlp.hpp"

namespace svic {

enum class Stage { optimal, seed, finetuned };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct Provenance {
  Stage stage = Stage::optimal;
  double lambda = 0.0;
  std::optional<std::pair<size_t, int>> subset;  // (variable index, bin id)
  std::uint64_t seed = 0;                        // training / fine-tuning seed
};

struct ModelSample {
  MLPModel model;
  double valid_loss = 0.0;  // unpenalized validation cross-entropy
  Provenance provenance;
};

struct RashomonConfig {
  double epsilon = 0.05;
  std::vector<double> lambda_grid;  // must contain 0; default_lambda_grid() if empty
  int seeds_per_lambda = 3;
  int finetune_epochs = 2;
  std::optional<double> finetune_lr;  // defaults to 0.1 x base learning rate
  int target_size = 350;              // cap on sampled members (optimal excluded)
  std::uint64_t master_seed = 0;
  int n_bins = 4;
  size_t min_subset_size = 50;
};

// {0} followed by 11 log-spaced values in [1e-6, 1e-1].
std::vector<double> default_lambda_grid();

// members[0] is always the optimal model; every member satisfies
// valid_loss <= (1 + epsilon) * reference_loss.
struct ModelEnsemble {
  double reference_loss = 0.0;
  double epsilon = 0.0;
  std::vector<ModelSample> members;
};

// Trains f* (lambda forced to 0) and evaluates its validation loss L*.
ModelSample train_optimal(const Matrix& train_x, const std::vector<int>& train_y,
                          const Matrix& valid_x, const std::vector<int>& valid_y,
                          const MLPArch& arch, const TrainConfig& cfg);

// One stage-1 candidate: the base config retrained with the given L2
// coefficient and seed. The same code path as train_optimal, so lambda = 0
// with f*'s seed reproduces f* bitwise.
MLPModel train_stage1_candidate(const Matrix& train_x, const std::vector<int>& train_y,
                                const MLPArch& arch, const TrainConfig& cfg,
                                double lambda, std::uint64_t seed);

// L2-perturbed seed models. A candidate is kept iff its penalized validation
// loss (cross-entropy + lambda * L2 of the trained weights) stays within
// (1 + epsilon) * reference_loss. Diverging candidates count as rejected.
std::vector<ModelSample> stage1_seeds(const Matrix& train_x, const std::vector<int>& train_y,
                                      const Matrix& valid_x, const std::vector<int>& valid_y,
                                      const MLPArch& arch, const TrainConfig& cfg,
                                      const RashomonConfig& rcfg, double reference_loss,
                                      Exec exec = Exec::parallel);

// Expands the seeds by fine-tuning on variable-defined training subsets.
// Candidates follow a schedule shuffled from master_seed and are accepted by
// unpenalized validation loss until target_size members are collected.
// Seeds themselves are retained first. Warns (stderr) below 10 members.
std::vector<ModelSample> stage2_expand(const std::vector<ModelSample>& seeds,
                                       const std::vector<SubsetSpec>& subsets,
                                       const Matrix& all_x, const std::vector<int>& all_y,
                                       const Matrix& valid_x, const std::vector<int>& valid_y,
                                       const TrainConfig& cfg, const RashomonConfig& rcfg,
                                       double reference_loss, Exec exec = Exec::parallel);

// Full sampler: train_optimal -> stage1_seeds -> stage2_expand.
// Deterministic in rcfg.master_seed (the optimal model's training seed is
// derived from it; cfg.seed is ignored here). A precomputed optimal model
// (e.g. reloaded from a fit run) is used as the reference when given.
ModelEnsemble sample_rashomon(const Dataset& ds, const DataSplit& split, const MLPArch& arch,
                              const TrainConfig& cfg, const RashomonConfig& rcfg,
                              Exec exec = Exec::parallel,
                              const ModelSample* precomputed_optimal = nullptr);

// ensemble/meta.json + ensemble/member_K.json
void save_ensemble(const ModelEnsemble& ens, const std::string& dir);
ModelEnsemble load_ensemble(const std::string& dir);

}  // namespace svic
