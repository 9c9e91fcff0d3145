#pragma once

#include <span>
#include <string>
#include <vector>

#include "svic/shap.hpp"

namespace svic {

// DerSimonian-Laird between-model variance from per-model estimates y and
// standard errors s. Variances are floored at 1e-12; when every s is zero
// the estimate degenerates to the sample variance of y.
double dl_tau2(std::span<const double> y, std::span<const double> s);

struct Pooled {
  double mean = 0.0;
  double se = 0.0;
};

// Inverse-variance pooling with weights 1/(s^2 + tau2).
Pooled pool(std::span<const double> y, std::span<const double> s, double tau2);

// 0.975 quantile of Student's t with dof degrees of freedom.
double student_t_975(int dof);

struct PredictionInterval {
  double low = 0.0;
  double high = 0.0;
};

// 95% prediction interval: mean -+ t_{0.975, M-2} * sqrt(tau2 + se^2).
// Requires M >= 3.
PredictionInterval prediction_interval(double pooled_mean, double pooled_se, double tau2,
                                       size_t n_models);

struct VicVariable {
  std::string name;
  double pooled_mean = 0.0;
  double pooled_se = 0.0;
  double tau2 = 0.0;
  double pi_low = 0.0;
  double pi_high = 0.0;
  bool has_pi = false;  // false when the ensemble has fewer than 3 models
};

struct VicResult {
  std::vector<VicVariable> variables;
  // per-model importance table, kept for the violin plot and rank stages
  std::vector<ImportanceSummary> per_model;
};

// Pools each variable independently across the ensemble. Requires at least
// two models with identical variable sets.
VicResult shapleyvic_values(const std::vector<ImportanceSummary>& summaries);

void write_vic_csv(const VicResult& vic, const std::string& path);
std::vector<VicVariable> read_vic_csv(const std::string& path);
void write_violin_csv(const VicResult& vic, const std::string& path);

}  // namespace svic
