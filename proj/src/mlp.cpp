#include "svic/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svic/parallel.hpp"
#include "svic/rng.hpp"

namespace svic {

namespace {

constexpr double kProbClamp = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

double bce_term(double p, int y) {
  const double pc = clamp_prob(p);
  return y ? -std::log(pc) : -std::log(1.0 - pc);
}

size_t max_width(const MLPArch& arch) {
  size_t w = 0;
  for (int s : arch.layer_sizes) w = std::max(w, static_cast<size_t>(s));
  return w;
}

void check_rows(const MLPModel& model, const Matrix& rows) {
  if (rows.cols() != static_cast<size_t>(model.arch.input_dim()))
    throw ValidationError("row width " + std::to_string(rows.cols()) +
                          " does not match model input dim " +
                          std::to_string(model.arch.input_dim()));
  for (double v : rows.data())
    if (!std::isfinite(v)) throw ValidationError("non-finite input value");
}

}  // namespace

MLPArch make_arch(int input_dim, const std::vector<int>& hidden) {
  MLPArch arch;
  arch.layer_sizes.push_back(input_dim);
  for (int h : hidden) arch.layer_sizes.push_back(h);
  arch.layer_sizes.push_back(1);
  validate_arch(arch);
  return arch;
}

void validate_arch(const MLPArch& arch) {
  if (arch.layer_sizes.size() < 3)
    throw ValidationError("architecture needs at least one hidden layer");
  if (arch.layer_sizes.back() != 1)
    throw ValidationError("output layer must have a single unit");
  if (arch.layer_sizes.front() < 1) throw ValidationError("input dim must be >= 1");
  for (size_t i = 1; i + 1 < arch.layer_sizes.size(); ++i)
    if (arch.layer_sizes[i] < 1) throw ValidationError("hidden sizes must be >= 1");
}

size_t MLPModel::param_count() const {
  size_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += weights[l].rows() * weights[l].cols() + biases[l].size();
  return n;
}

bool MLPModel::same_params(const MLPModel& other) const {
  return weights == other.weights && biases == other.biases;
}

MLPModel init_model(const MLPArch& arch, std::uint64_t seed) {
  validate_arch(arch);
  MLPModel m;
  m.arch = arch;
  m.init_seed = seed;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
    const size_t fan_in = static_cast<size_t>(arch.layer_sizes[l]);
    const size_t fan_out = static_cast<size_t>(arch.layer_sizes[l + 1]);
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (size_t i = 0; i < fan_out; ++i)
      for (size_t j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-r, r);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(fan_out, 0.0);
  }
  return m;
}

double predict_row(const MLPModel& model, const double* x, FwdWorkspace& ws) {
  const size_t width = max_width(model.arch);
  ws.a.resize(width);
  ws.b.resize(width);
  const size_t d = static_cast<size_t>(model.arch.input_dim());
  std::copy(x, x + d, ws.a.begin());
  double* cur = ws.a.data();
  double* nxt = ws.b.data();
  const size_t L = model.weights.size();
  for (size_t l = 0; l < L; ++l) {
    const Matrix& w = model.weights[l];
    const auto& b = model.biases[l];
    const size_t out_n = w.rows(), in_n = w.cols();
    for (size_t i = 0; i < out_n; ++i) {
      const double* wrow = w.row(i);
      double z = b[i];
      for (size_t j = 0; j < in_n; ++j) z += wrow[j] * cur[j];
      nxt[i] = (l + 1 == L) ? z : (z > 0.0 ? z : 0.0);
    }
    std::swap(cur, nxt);
  }
  return sigmoid(cur[0]);
}

double predict_row(const MLPModel& model, const double* x) {
  FwdWorkspace ws;
  return predict_row(model, x, ws);
}

void predict_into(const MLPModel& model, const Matrix& rows, double* out, Exec exec) {
  parallel_for(static_cast<std::int64_t>(rows.rows()), exec, [&](std::int64_t i) {
    thread_local FwdWorkspace ws;
    out[i] = predict_row(model, rows.row(static_cast<size_t>(i)), ws);
  });
}

std::vector<double> predict(const MLPModel& model, const Matrix& rows, Exec exec) {
  check_rows(model, rows);
  std::vector<double> out(rows.rows());
  predict_into(model, rows, out.data(), exec);
  return out;
}

double mean_bce(const MLPModel& model, const Matrix& rows, const std::vector<int>& labels,
                Exec exec) {
  if (rows.rows() == 0) throw ValidationError("loss over an empty row set");
  if (labels.size() != rows.rows())
    throw ValidationError("labels/rows size mismatch");
  std::vector<double> terms(rows.rows());
  parallel_for(static_cast<std::int64_t>(rows.rows()), exec, [&](std::int64_t i) {
    thread_local FwdWorkspace ws;
    const size_t r = static_cast<size_t>(i);
    terms[r] = bce_term(predict_row(model, rows.row(r), ws), labels[r]);
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / static_cast<double>(rows.rows());
}

double l2_penalty(const MLPModel& model) {
  double sum = 0.0;
  for (const Matrix& w : model.weights)
    for (double v : w.data()) sum += v * v;
  return sum;
}

double loss(const MLPModel& model, const Matrix& rows, const std::vector<int>& labels,
            double lambda, Exec exec) {
  if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
  double v = mean_bce(model, rows, labels, exec);
  if (lambda != 0.0) v += lambda * l2_penalty(model);
  return v;
}

Gradient gradient(const MLPModel& model, const Matrix& rows, const std::vector<int>& labels,
                  double lambda) {
  const size_t n = rows.rows();
  if (n == 0) throw ValidationError("gradient over an empty batch");
  if (labels.size() != n) throw ValidationError("labels/rows size mismatch");
  if (lambda < 0.0) throw ValidationError("lambda must be >= 0");

  const size_t L = model.weights.size();
  Gradient g;
  g.weights.reserve(L);
  g.biases.reserve(L);
  for (size_t l = 0; l < L; ++l) {
    g.weights.emplace_back(model.weights[l].rows(), model.weights[l].cols());
    g.biases.emplace_back(model.biases[l].size(), 0.0);
  }

  //  activations per layer for one row: act[0] = x, act[l+1] = layer l output
  std::vector<std::vector<double>> act(L + 1);
  for (size_t l = 0; l <= L; ++l)
    act[l].resize(static_cast<size_t>(model.arch.layer_sizes[l]));
  std::vector<std::vector<double>> delta(L);
  for (size_t l = 0; l < L; ++l)
    delta[l].resize(static_cast<size_t>(model.arch.layer_sizes[l + 1]));

  const double inv_n = 1.0 / static_cast<double>(n);
  for (size_t r = 0; r < n; ++r) {
    const double* x = rows.row(r);
    std::copy(x, x + act[0].size(), act[0].begin());
    for (size_t l = 0; l < L; ++l) {
      const Matrix& w = model.weights[l];
      for (size_t i = 0; i < w.rows(); ++i) {
        const double* wrow = w.row(i);
        double z = model.biases[l][i];
        for (size_t j = 0; j < w.cols(); ++j) z += wrow[j] * act[l][j];
        act[l + 1][i] = (l + 1 == L) ? z : (z > 0.0 ? z : 0.0);
      }
    }
    const double p = sigmoid(act[L][0]);
    // d(mean BCE)/dz at the output unit
    delta[L - 1][0] = (p - static_cast<double>(labels[r])) * inv_n;
    for (size_t l = L - 1; l-- > 0;) {
      const Matrix& w = model.weights[l + 1];
      for (size_t j = 0; j < w.cols(); ++j) {
        double s = 0.0;
        for (size_t i = 0; i < w.rows(); ++i) s += w(i, j) * delta[l + 1][i];
        delta[l][j] = act[l + 1][j] > 0.0 ? s : 0.0;  // rectifier gate
      }
    }
    for (size_t l = 0; l < L; ++l) {
      Matrix& gw = g.weights[l];
      for (size_t i = 0; i < gw.rows(); ++i) {
        const double dl = delta[l][i];
        if (dl == 0.0) continue;
        double* grow = gw.row(i);
        const double* arow = act[l].data();
        for (size_t j = 0; j < gw.cols(); ++j) grow[j] += dl * arow[j];
        g.biases[l][i] += dl;
      }
    }
  }

  if (lambda != 0.0) {
    for (size_t l = 0; l < L; ++l) {
      const auto& w = model.weights[l].data();
      auto& gw = g.weights[l].data();
      for (size_t k = 0; k < w.size(); ++k) gw[k] += 2.0 * lambda * w[k];
    }
  }
  return g;
}

MLPModel train_from(MLPModel model, const Matrix& rows, const std::vector<int>& labels,
                    const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw ValidationError("learning_rate must be > 0");
  if (cfg.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (rows.rows() == 0) throw ValidationError("empty training data");
  check_rows(model, rows);

  const size_t n = rows.rows();
  const size_t L = model.weights.size();
  std::vector<Matrix> vel_w;
  std::vector<std::vector<double>> vel_b;
  for (size_t l = 0; l < L; ++l) {
    vel_w.emplace_back(model.weights[l].rows(), model.weights[l].cols());
    vel_b.emplace_back(model.biases[l].size(), 0.0);
  }

  Rng shuffle_rng(derive_seed(cfg.seed, {seed_tag::kShuffle}));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  Matrix batch_x;
  std::vector<int> batch_y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
      const size_t bsz = end - start;
      batch_x = Matrix(bsz, rows.cols());
      batch_y.resize(bsz);
      for (size_t k = 0; k < bsz; ++k) {
        const size_t src = order[start + k];
        const double* sr = rows.row(src);
        std::copy(sr, sr + rows.cols(), batch_x.row(k));
        batch_y[k] = labels[src];
      }
      const Gradient g = gradient(model, batch_x, batch_y, cfg.lambda);
      for (size_t l = 0; l < L; ++l) {
        auto& w = model.weights[l].data();
        auto& vw = vel_w[l].data();
        const auto& gw = g.weights[l].data();
        for (size_t k = 0; k < w.size(); ++k) {
          vw[k] = cfg.momentum * vw[k] + gw[k];
          w[k] -= cfg.learning_rate * vw[k];
        }
        auto& b = model.biases[l];
        auto& vb = vel_b[l];
        const auto& gb = g.biases[l];
        for (size_t k = 0; k < b.size(); ++k) {
          vb[k] = cfg.momentum * vb[k] + gb[k];
          b[k] -= cfg.learning_rate * vb[k];
        }
      }
    }
    const double epoch_loss = loss(model, rows, labels, cfg.lambda, Exec::serial);
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         " (non-finite loss)");
  }
  return model;
}

MLPModel train(const Matrix& rows, const std::vector<int>& labels, const MLPArch& arch,
               const TrainConfig& cfg) {
  MLPModel model = init_model(arch, derive_seed(cfg.seed, {seed_tag::kInit}));
  return train_from(std::move(model), rows, labels, cfg);
}

std::string model_to_json(const MLPModel& model) {
  nlohmann::json j;
  j["arch"] = {{"layers", model.arch.layer_sizes}};
  nlohmann::json weights = nlohmann::json::array();
  for (const Matrix& w : model.weights) {
    nlohmann::json layer = nlohmann::json::array();
    for (size_t i = 0; i < w.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (size_t jx = 0; jx < w.cols(); ++jx) row.push_back(w(i, jx));
      layer.push_back(std::move(row));
    }
    weights.push_back(std::move(layer));
  }
  j["weights"] = std::move(weights);
  j["biases"] = model.biases;
  j["init_seed"] = model.init_seed;
  return j.dump();
}

MLPModel model_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": invalid JSON: " + e.what());
  }
  MLPModel m;
  try {
    m.arch.layer_sizes = j.at("arch").at("layers").get<std::vector<int>>();
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    for (const auto& layer : j.at("weights")) {
      const size_t rows = layer.size();
      const size_t cols = rows ? layer[0].size() : 0;
      Matrix w(rows, cols);
      for (size_t i = 0; i < rows; ++i) {
        const auto row = layer[i].get<std::vector<double>>();
        if (row.size() != cols) throw ValidationError(origin + ": ragged weight matrix");
        std::copy(row.begin(), row.end(), w.row(i));
      }
      m.weights.push_back(std::move(w));
    }
    m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": bad model file: " + e.what());
  }
  validate_arch(m.arch);
  if (m.weights.size() != m.arch.n_layers() || m.biases.size() != m.arch.n_layers())
    throw ValidationError(origin + ": layer count mismatch");
  for (size_t l = 0; l < m.weights.size(); ++l) {
    if (m.weights[l].rows() != static_cast<size_t>(m.arch.layer_sizes[l + 1]) ||
        m.weights[l].cols() != static_cast<size_t>(m.arch.layer_sizes[l]) ||
        m.biases[l].size() != static_cast<size_t>(m.arch.layer_sizes[l + 1]))
      throw ValidationError(origin + ": parameter shapes do not match arch");
    for (double v : m.weights[l].data())
      if (!std::isfinite(v)) throw ValidationError(origin + ": non-finite parameter");
    for (double v : m.biases[l])
      if (!std::isfinite(v)) throw ValidationError(origin + ": non-finite parameter");
  }
  return m;
}

void save_model(const MLPModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << model_to_json(model) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

MLPModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str(), path);
}

}  // namespace svic
