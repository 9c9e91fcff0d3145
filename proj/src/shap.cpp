#include "svic/shap.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "svic/parallel.hpp"
#include "svic/rng.hpp"

namespace svic {

namespace {

double mean_background_prediction(const MLPModel& model, const Matrix& background,
                                  FwdWorkspace& ws) {
  double sum = 0.0;
  for (size_t b = 0; b < background.rows(); ++b)
    sum += predict_row(model, background.row(b), ws);
  return sum / static_cast<double>(background.rows());
}

}  // namespace

Matrix make_background(const Matrix& train_rows, size_t size, std::uint64_t seed) {
  if (train_rows.rows() == 0) throw ValidationError("empty background source");
  if (size == 0) throw ValidationError("background size must be >= 1");
  if (size >= train_rows.rows()) return train_rows;
  std::vector<size_t> idx(train_rows.rows());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return train_rows.gather_rows(idx);
}

double value_function(const MLPModel& model, const double* x,
                      const std::vector<size_t>& coalition, const Matrix& background) {
  if (background.rows() == 0) throw ValidationError("empty background");
  const size_t d = background.cols();
  for (size_t j : coalition)
    if (j >= d) throw ValidationError("coalition index out of range");
  std::vector<double> z(d);
  FwdWorkspace ws;
  double sum = 0.0;
  for (size_t b = 0; b < background.rows(); ++b) {
    const double* bg = background.row(b);
    std::copy(bg, bg + d, z.begin());
    for (size_t j : coalition) z[j] = x[j];
    sum += predict_row(model, z.data(), ws);
  }
  return sum / static_cast<double>(background.rows());
}

std::vector<double> shap_exact(const MLPModel& model, const double* x,
                               const Matrix& background, int exact_limit) {
  const size_t d = background.cols();
  if (d > static_cast<size_t>(exact_limit))
    throw ValidationError("exact Shapley limited to " + std::to_string(exact_limit) +
                          " variables, got " + std::to_string(d) +
                          "; use the permutation method");
  if (background.rows() == 0) throw ValidationError("empty background");

  const size_t n_masks = size_t{1} << d;
  // v[mask] = value function of the coalition encoded by mask
  std::vector<double> v(n_masks);
  std::vector<double> z(d);
  FwdWorkspace ws;
  const double inv_b = 1.0 / static_cast<double>(background.rows());
  for (size_t mask = 0; mask < n_masks; ++mask) {
    double sum = 0.0;
    for (size_t b = 0; b < background.rows(); ++b) {
      const double* bg = background.row(b);
      for (size_t j = 0; j < d; ++j) z[j] = (mask >> j) & 1 ? x[j] : bg[j];
      sum += predict_row(model, z.data(), ws);
    }
    v[mask] = sum * inv_b;
  }

  // weight[s] = s! (d-1-s)! / d!
  std::vector<double> weight(d);
  {
    std::vector<double> fact(d + 1, 1.0);
    for (size_t k = 1; k <= d; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
    for (size_t s = 0; s < d; ++s) weight[s] = fact[s] * fact[d - 1 - s] / fact[d];
  }

  std::vector<double> phi(d, 0.0);
  for (size_t mask = 0; mask < n_masks; ++mask) {
    const size_t s = static_cast<size_t>(std::popcount(mask));
    for (size_t j = 0; j < d; ++j) {
      if ((mask >> j) & 1) continue;
      phi[j] += weight[s] * (v[mask | (size_t{1} << j)] - v[mask]);
    }
  }
  return phi;
}

PermutationShap shap_permutation(const MLPModel& model, const double* x,
                                 const Matrix& background, int n_permutations,
                                 std::uint64_t seed) {
  if (n_permutations < 1) throw ValidationError("n_permutations must be >= 1");
  if (background.rows() == 0) throw ValidationError("empty background");
  const size_t d = background.cols();
  const size_t nb = background.rows();
  const double inv_b = 1.0 / static_cast<double>(nb);

  Rng rng(seed);
  std::vector<size_t> order(d);
  for (size_t j = 0; j < d; ++j) order[j] = j;

  FwdWorkspace ws;
  Matrix z = background;                    // mutated toward x along the ordering
  std::vector<double> prev(nb), cur(nb);
  std::vector<double> contrib(d);           // one ordering's marginal contributions
  // group = antithetic pair (or lone final ordering); groups are independent,
  // so the Monte Carlo standard error comes from the group means
  Matrix group_means((static_cast<size_t>(n_permutations) + 1) / 2, d, 0.0);

  std::vector<double> phi(d, 0.0);
  for (int p = 0; p < n_permutations; ++p) {
    if (p % 2 == 0) {
      rng.shuffle(order);
    } else {
      std::reverse(order.begin(), order.end());
    }
    for (size_t r = 0; r < nb; ++r) {
      const double* bg = background.row(r);
      std::copy(bg, bg + d, z.row(r));
      prev[r] = predict_row(model, z.row(r), ws);
    }
    for (size_t k = 0; k < d; ++k) {
      const size_t j = order[k];
      double delta = 0.0;
      for (size_t r = 0; r < nb; ++r) {
        z(r, j) = x[j];
        cur[r] = predict_row(model, z.row(r), ws);
        delta += cur[r] - prev[r];
        prev[r] = cur[r];
      }
      contrib[j] = delta * inv_b;
    }
    const size_t group = static_cast<size_t>(p) / 2;
    const bool lone = (p + 1 == n_permutations) && (p % 2 == 0);
    const double w = lone ? 1.0 : 0.5;
    for (size_t j = 0; j < d; ++j) {
      phi[j] += contrib[j];
      group_means(group, j) += w * contrib[j];
    }
  }

  PermutationShap out;
  out.phi.resize(d);
  for (size_t j = 0; j < d; ++j) out.phi[j] = phi[j] / n_permutations;

  out.mc_se.assign(d, 0.0);
  const size_t n_groups = group_means.rows();
  if (n_groups >= 2) {
    for (size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (size_t g = 0; g < n_groups; ++g) mean += group_means(g, j);
      mean /= static_cast<double>(n_groups);
      double ss = 0.0;
      for (size_t g = 0; g < n_groups; ++g) {
        const double dlt = group_means(g, j) - mean;
        ss += dlt * dlt;
      }
      const double var = ss / static_cast<double>(n_groups - 1);
      out.mc_se[j] = std::sqrt(var / static_cast<double>(n_groups));
    }
  }
  return out;
}

ShapMatrix shap_matrix(const MLPModel& model, const Matrix& rows, const ShapConfig& cfg,
                       std::uint64_t model_id, Exec exec) {
  if (rows.rows() == 0) throw ValidationError("no explanation rows");
  if (rows.cols() != cfg.background.cols())
    throw ValidationError("explanation/background width mismatch");
  if (rows.cols() != static_cast<size_t>(model.arch.input_dim()))
    throw ValidationError("row width does not match model input dim");

  const size_t d = rows.cols();
  const bool exact =
      cfg.method == ShapMethod::exact && d <= static_cast<size_t>(cfg.exact_limit);

  ShapMatrix out;
  out.values = Matrix(rows.rows(), d);
  {
    FwdWorkspace ws;
    out.base_value = mean_background_prediction(model, cfg.background, ws);
  }
  parallel_for(static_cast<std::int64_t>(rows.rows()), exec, [&](std::int64_t i) {
    const size_t r = static_cast<size_t>(i);
    std::vector<double> phi;
    if (exact) {
      phi = shap_exact(model, rows.row(r), cfg.background, cfg.exact_limit);
    } else {
      phi = shap_permutation(model, rows.row(r), cfg.background, cfg.n_permutations,
                             derive_seed(cfg.seed, {model_id, r}))
                .phi;
    }
    std::copy(phi.begin(), phi.end(), out.values.row(r));
  });
  return out;
}

void summarize_matrix(const Matrix& values, std::vector<double>& mean_abs,
                      std::vector<double>& se) {
  const size_t m = values.rows(), d = values.cols();
  if (m == 0) throw ValidationError("empty attribution matrix");
  mean_abs.assign(d, 0.0);
  se.assign(d, 0.0);
  for (size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (size_t i = 0; i < m; ++i) sum += std::fabs(values(i, j));
    mean_abs[j] = sum / static_cast<double>(m);
  }
  if (m < 2) return;  // sd of a single observation is 0 by convention
  for (size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (size_t i = 0; i < m; ++i) {
      const double dlt = std::fabs(values(i, j)) - mean_abs[j];
      ss += dlt * dlt;
    }
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));
    se[j] = sd / std::sqrt(static_cast<double>(m));
  }
}

ImportanceSummary summarize_importance(const MLPModel& model, double valid_loss,
                                       std::uint64_t model_id,
                                       const std::vector<std::string>& var_names,
                                       const Matrix& explain_rows, const ShapConfig& cfg,
                                       Exec exec) {
  if (var_names.size() != explain_rows.cols())
    throw ValidationError("var_names/width mismatch");
  const ShapMatrix mat = shap_matrix(model, explain_rows, cfg, model_id, exec);
  ImportanceSummary s;
  s.model_id = model_id;
  s.var_names = var_names;
  s.valid_loss = valid_loss;
  summarize_matrix(mat.values, s.mean_abs, s.se);
  return s;
}

void write_shap_csv(const std::string& path, const std::vector<ShapMatrix>& matrices,
                    const std::vector<std::string>& var_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "model_id,row_id,variable,shap_value\n";
  for (size_t m = 0; m < matrices.size(); ++m) {
    const Matrix& v = matrices[m].values;
    for (size_t i = 0; i < v.rows(); ++i)
      for (size_t j = 0; j < v.cols(); ++j)
        out << m << ',' << i << ',' << var_names[j] << ',' << fmt_double(v(i, j)) << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path);
}

void write_summary_csv(const std::string& path,
                       const std::vector<ImportanceSummary>& summaries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "model_id,variable,mean_abs_shap,se,valid_loss\n";
  for (const auto& s : summaries)
    for (size_t j = 0; j < s.var_names.size(); ++j)
      out << s.model_id << ',' << s.var_names[j] << ',' << fmt_double(s.mean_abs[j]) << ','
          << fmt_double(s.se[j]) << ',' << fmt_double(s.valid_loss) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

std::vector<ImportanceSummary> read_summary_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");

  auto parse_double = [&](const std::string& s) {
    double v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ValidationError(path + ": cannot parse number '" + s + "'");
    return v;
  };

  std::map<std::uint64_t, ImportanceSummary> by_model;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!cells.empty() && cells.back().size() && cells.back().back() == '\r')
      cells.back().pop_back();
    if (cells.size() != 5)
      throw ValidationError(path + ": row " + std::to_string(line_no) + " needs 5 cells");
    const std::uint64_t id = std::stoull(cells[0]);
    auto& s = by_model[id];
    s.model_id = id;
    s.var_names.push_back(cells[1]);
    s.mean_abs.push_back(parse_double(cells[2]));
    s.se.push_back(parse_double(cells[3]));
    s.valid_loss = parse_double(cells[4]);
  }
  std::vector<ImportanceSummary> out;
  out.reserve(by_model.size());
  for (auto& [id, s] : by_model) out.push_back(std::move(s));
  return out;
}

}  // namespace svic
