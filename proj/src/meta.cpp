#include "svic/meta.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "svic/common.hpp"

namespace svic {

namespace {

constexpr double kVarFloor = 1e-12;

void check_study(std::span<const double> y, std::span<const double> s) {
  if (y.size() != s.size()) throw ValidationError("y/s length mismatch");
  if (y.size() < 2) throw ValidationError("meta-analysis needs at least 2 models");
  for (double v : s)
    if (!(v >= 0.0)) throw ValidationError("standard errors must be >= 0");
}

}  // namespace

double dl_tau2(std::span<const double> y, std::span<const double> s) {
  check_study(y, s);
  const size_t m = y.size();

  bool all_zero = true;
  for (double v : s)
    if (v != 0.0) {
      all_zero = false;
      break;
    }
  if (all_zero) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(m - 1);
  }

  double sw = 0.0, swy = 0.0, sw2 = 0.0;
  std::vector<double> w(m);
  for (size_t i = 0; i < m; ++i) {
    w[i] = 1.0 / std::max(s[i] * s[i], kVarFloor);
    sw += w[i];
    swy += w[i] * y[i];
    sw2 += w[i] * w[i];
  }
  const double ybar = swy / sw;
  double q = 0.0;
  for (size_t i = 0; i < m; ++i) q += w[i] * (y[i] - ybar) * (y[i] - ybar);
  const double denom = sw - sw2 / sw;
  return std::max(0.0, (q - static_cast<double>(m - 1)) / denom);
}

Pooled pool(std::span<const double> y, std::span<const double> s, double tau2) {
  check_study(y, s);
  if (!(tau2 >= 0.0)) throw ValidationError("tau2 must be >= 0");
  double sw = 0.0, swy = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double w = 1.0 / (std::max(s[i] * s[i], kVarFloor) + tau2);
    sw += w;
    swy += w * y[i];
  }
  return {swy / sw, std::sqrt(1.0 / sw)};
}

double student_t_975(int dof) {
  if (dof < 1) throw ValidationError("t quantile needs dof >= 1");
  boost::math::students_t_distribution<double> dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

PredictionInterval prediction_interval(double pooled_mean, double pooled_se, double tau2,
                                       size_t n_models) {
  if (n_models < 3)
    throw ValidationError("prediction interval needs at least 3 models, got " +
                          std::to_string(n_models));
  const double t = student_t_975(static_cast<int>(n_models) - 2);
  const double half = t * std::sqrt(tau2 + pooled_se * pooled_se);
  return {pooled_mean - half, pooled_mean + half};
}

VicResult shapleyvic_values(const std::vector<ImportanceSummary>& summaries) {
  if (summaries.size() < 2)
    throw ValidationError("need at least 2 model summaries, got " +
                          std::to_string(summaries.size()));
  const auto& names = summaries.front().var_names;
  for (const auto& s : summaries) {
    if (s.var_names != names)
      throw ValidationError("inconsistent variable sets across model summaries");
    if (s.mean_abs.size() != names.size() || s.se.size() != names.size())
      throw ValidationError("malformed importance summary");
  }

  const size_t m = summaries.size();
  const size_t d = names.size();
  VicResult out;
  out.per_model = summaries;
  out.variables.resize(d);
  std::vector<double> y(m), s(m);
  for (size_t j = 0; j < d; ++j) {
    for (size_t i = 0; i < m; ++i) {
      y[i] = summaries[i].mean_abs[j];
      s[i] = summaries[i].se[j];
    }
    VicVariable& v = out.variables[j];
    v.name = names[j];
    v.tau2 = dl_tau2(y, s);
    const Pooled p = pool(y, s, v.tau2);
    v.pooled_mean = p.mean;
    v.pooled_se = p.se;
    if (m >= 3) {
      const PredictionInterval pi = prediction_interval(p.mean, p.se, v.tau2, m);
      v.pi_low = pi.low;
      v.pi_high = pi.high;
      v.has_pi = true;
    } else {
      v.pi_low = v.pi_high = std::numeric_limits<double>::quiet_NaN();
      v.has_pi = false;
    }
  }
  return out;
}

void write_vic_csv(const VicResult& vic, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "variable,pooled_mean,pooled_se,tau2,pi_low,pi_high\n";
  for (const auto& v : vic.variables)
    out << v.name << ',' << fmt_double(v.pooled_mean) << ',' << fmt_double(v.pooled_se)
        << ',' << fmt_double(v.tau2) << ',' << fmt_double(v.pi_low) << ','
        << fmt_double(v.pi_high) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

std::vector<VicVariable> read_vic_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  std::vector<VicVariable> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ValidationError(path + ": malformed row");
    VicVariable v;
    v.name = cells[0];
    double* fields[5] = {&v.pooled_mean, &v.pooled_se, &v.tau2, &v.pi_low, &v.pi_high};
    for (size_t k = 0; k < 5; ++k) {
      const std::string& c = cells[k + 1];
      if (c == "nan" || c == "-nan") {
        *fields[k] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      auto res = std::from_chars(c.data(), c.data() + c.size(), *fields[k]);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size())
        throw ValidationError(path + ": cannot parse number '" + c + "'");
    }
    v.has_pi = std::isfinite(v.pi_low);
    out.push_back(std::move(v));
  }
  return out;
}

void write_violin_csv(const VicResult& vic, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "model_id,valid_loss,variable,mean_abs_shap\n";
  for (const auto& s : vic.per_model)
    for (size_t j = 0; j < s.var_names.size(); ++j)
      out << s.model_id << ',' << fmt_double(s.valid_loss) << ',' << s.var_names[j] << ','
          << fmt_double(s.mean_abs[j]) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace svic
