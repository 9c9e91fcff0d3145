#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svic/common.hpp"
#include "svic/matrix.hpp"

namespace svic {

// Fully connected net: rectifier hidden layers, logistic output unit.
struct MLPArch {
  std::vector<int> layer_sizes;  // [d, h1, ..., hL, 1]

  int input_dim() const { return layer_sizes.front(); }
  size_t n_layers() const { return layer_sizes.size() - 1; }  // weight layers
};

MLPArch make_arch(int input_dim, const std::vector<int>& hidden);
void validate_arch(const MLPArch& arch);

struct MLPModel {
  MLPArch arch;
  std::vector<Matrix> weights;             // weights[l]: (sizes[l+1] x sizes[l])
  std::vector<std::vector<double>> biases; // biases[l]: sizes[l+1]
  std::uint64_t init_seed = 0;

  size_t param_count() const;
  bool same_params(const MLPModel& other) const;  // bitwise weight/bias equality
};

struct TrainConfig {
  double lambda = 0.0;         // L2 coefficient on weights (biases excluded)
  double learning_rate = 0.1;
  int epochs = 50;
  int batch_size = 32;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

// Zero biases, weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Deterministic in seed.
MLPModel init_model(const MLPArch& arch, std::uint64_t seed);

// Scratch buffers for a single forward pass; reuse across calls in hot loops.
struct FwdWorkspace {
  std::vector<double> a;
  std::vector<double> b;
};

// P(Y=1 | x). No input validation; callers on hot paths validate upfront.
double predict_row(const MLPModel& model, const double* x, FwdWorkspace& ws);
double predict_row(const MLPModel& model, const double* x);

// Validating batch predict. OpenMP over rows under Exec::parallel.
std::vector<double> predict(const MLPModel& model, const Matrix& rows,
                            Exec exec = Exec::parallel);
void predict_into(const MLPModel& model, const Matrix& rows, double* out, Exec exec);

// Mean binary cross-entropy; probabilities clamped to [1e-12, 1-1e-12].
// Per-row terms are summed in row order regardless of Exec, so the result
// is schedule-independent.
double mean_bce(const MLPModel& model, const Matrix& rows,
                const std::vector<int>& labels, Exec exec = Exec::parallel);

double l2_penalty(const MLPModel& model);  // sum of squared weights

// mean_bce + lambda * l2_penalty
double loss(const MLPModel& model, const Matrix& rows, const std::vector<int>& labels,
            double lambda, Exec exec = Exec::parallel);

struct Gradient {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

// Exact gradient of `loss` restricted to the batch.
Gradient gradient(const MLPModel& model, const Matrix& rows,
                  const std::vector<int>& labels, double lambda);

// Minibatch SGD with momentum on the lambda-penalized loss, starting from
// the given parameters. Shuffling is deterministic in cfg.seed. Throws
// NumericError when the epoch loss goes non-finite.
MLPModel train_from(MLPModel model, const Matrix& rows, const std::vector<int>& labels,
                    const TrainConfig& cfg);

// init_model + train_from; initialization seed derived from cfg.seed.
MLPModel train(const Matrix& rows, const std::vector<int>& labels, const MLPArch& arch,
               const TrainConfig& cfg);

// JSON round trip is bit-faithful.
std::string model_to_json(const MLPModel& model);
MLPModel model_from_json(const std::string& text, const std::string& origin = "model json");
void save_model(const MLPModel& model, const std::string& path);
MLPModel load_model(const std::string& path);

}  // namespace svic
