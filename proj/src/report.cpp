#include "svic/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "svic/parallel.hpp"
#include "svic/rng.hpp"

namespace svic {

namespace fs = std::filesystem;

std::string metric_name(ParsimonyMetric m) {
  return m == ParsimonyMetric::auroc ? "auroc" : "cross_entropy";
}

ParsimonyMetric metric_from_name(const std::string& name) {
  if (name == "auroc") return ParsimonyMetric::auroc;
  if (name == "cross_entropy") return ParsimonyMetric::cross_entropy;
  throw ValidationError("unknown parsimony metric: " + name);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("auroc: bad inputs");
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // average ranks over tied score groups
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  size_t n_pos = 0;
  for (size_t k = 0; k < n; ++k)
    if (labels[k]) {
      rank_sum_pos += rank[k];
      ++n_pos;
    }
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ParsimonyCurve parsimony(const Dataset& ds, const DataSplit& split,
                         const std::vector<int>& hidden, const TrainConfig& cfg,
                         const std::vector<size_t>& ranking_order, ParsimonyMetric metric,
                         std::uint64_t master_seed, Exec exec) {
  const size_t d = ds.d();
  {
    std::vector<size_t> check = ranking_order;
    std::sort(check.begin(), check.end());
    for (size_t j = 0; j < d; ++j)
      if (j >= check.size() || check[j] != j)
        throw ValidationError("ranking must be a permutation of the variables");
  }
  const std::vector<int> train_y = gather(ds.outcome, split.train_idx);
  const std::vector<int> valid_y = gather(ds.outcome, split.valid_idx);

  ParsimonyCurve curve;
  curve.metric = metric;
  curve.entries.resize(d);
  parallel_for_dynamic(static_cast<std::int64_t>(d), exec, [&](std::int64_t t) {
    const size_t k = static_cast<size_t>(t) + 1;
    // sorted column subset: the entry depends on the variable SET, and k = d
    // matches a direct full-model run with the same derived seed
    std::vector<size_t> cols(ranking_order.begin(), ranking_order.begin() + k);
    std::sort(cols.begin(), cols.end());
    ParsimonyEntry& e = curve.entries[k - 1];
    e.k = static_cast<int>(k);
    for (size_t c : cols) e.variable_set.push_back(ds.var_names[c]);

    const Matrix train_x = ds.features.gather_rows(split.train_idx).gather_cols(cols);
    const Matrix valid_x = ds.features.gather_rows(split.valid_idx).gather_cols(cols);
    TrainConfig c = cfg;
    c.lambda = 0.0;
    c.seed = derive_seed(master_seed, {seed_tag::kParsimony, k});
    MLPModel model;
    try {
      model = train(train_x, train_y, make_arch(static_cast<int>(k), hidden), c);
    } catch (const NumericError&) {
      e.ok = false;  // a gap in the curve, not a crash
      e.metric_value = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    if (metric == ParsimonyMetric::cross_entropy) {
      e.metric_value = mean_bce(model, valid_x, valid_y, Exec::serial);
    } else {
      const std::vector<double> scores = predict(model, valid_x, Exec::serial);
      e.metric_value = auroc(scores, valid_y);
      if (!std::isfinite(e.metric_value)) e.ok = false;
    }
  });
  return curve;
}

void write_parsimony_csv(const ParsimonyCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << "k,variables,metric,metric_value\n";
  for (const auto& e : curve.entries)
    out << e.k << ',' << join(e.variable_set, '|') << ',' << metric_name(curve.metric)
        << ',' << (e.ok ? fmt_double(e.metric_value) : "nan") << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// SVG helpers
// ---------------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(2);
  ss << std::fixed << v;
  return ss.str();
}

class Svg {
 public:
  Svg(double width, double height) : w_(width), h_(height) {
    body_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
          << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_)
          << "\" height=\"" << num(h_) << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_)
          << "\">\n";
    body_ << "<rect x=\"0\" y=\"0\" width=\"" << num(w_) << "\" height=\"" << num(h_)
          << "\" fill=\"white\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
          << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0) {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
          << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << num(width) << "\"/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
          << "\" fill=\"" << fill << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "start") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">"
          << xml_escape(s) << "</text>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill) {
    body_ << "<polygon points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << ' ';
      body_ << num(pts[i].first) << ',' << num(pts[i].second);
    }
    body_ << "\" fill=\"" << fill << "\" stroke=\"none\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& stroke) {
    body_ << "<polyline points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << ' ';
      body_ << num(pts[i].first) << ',' << num(pts[i].second);
    }
    body_ << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"/>\n";
  }

  void save(const std::string& path) {
    body_ << "</svg>\n";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << body_.str();
    if (!out) throw ValidationError("write failed: " + path);
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

std::string loss_color(double loss, double lo, double hi) {
  double t = hi > lo ? (loss - lo) / (hi - lo) : 0.5;
  t = std::min(std::max(t, 0.0), 1.0);
  // blue (low loss) to red (high loss)
  const int r = static_cast<int>(std::lround(40 + t * (220 - 40)));
  const int g = 60;
  const int b = static_cast<int>(std::lround(220 - t * (220 - 40)));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void emit_bar(const VicResult& vic, const std::string& dir) {
  fs::create_directories(dir);
  write_vic_csv(vic, (fs::path(dir) / "vic.csv").string());

  std::vector<size_t> order(vic.variables.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (vic.variables[a].pooled_mean != vic.variables[b].pooled_mean)
      return vic.variables[a].pooled_mean > vic.variables[b].pooled_mean;
    return vic.variables[a].name < vic.variables[b].name;
  });

  const double row_h = 26.0, left = 150.0, top = 40.0, width = 640.0;
  const double plot_w = width - left - 30.0;
  const double height = top + row_h * order.size() + 30.0;

  double xmin = 0.0, xmax = 0.0;
  for (const auto& v : vic.variables) {
    xmax = std::max({xmax, v.pooled_mean, v.has_pi ? v.pi_high : v.pooled_mean});
    xmin = std::min({xmin, v.has_pi ? v.pi_low : v.pooled_mean});
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * plot_w; };

  Svg svg(width, height);
  svg.text(left, 20, "overall variable importance (pooled mean |SHAP|, 95% PI)", 12);
  svg.line(sx(0.0), top - 6, sx(0.0), top + row_h * order.size(), "#999");
  for (size_t i = 0; i < order.size(); ++i) {
    const VicVariable& v = vic.variables[order[i]];
    const double y = top + row_h * i;
    const bool significant = v.has_pi && (v.pi_low > 0.0 || v.pi_high < 0.0);
    svg.text(left - 8, y + row_h * 0.65, v.name + (significant ? " *" : ""), 11, "end");
    const double x0 = sx(std::min(0.0, v.pooled_mean));
    const double x1 = sx(std::max(0.0, v.pooled_mean));
    svg.rect(x0, y + 4, std::max(0.5, x1 - x0), row_h - 10,
             significant ? "#1f77b4" : "#9ecae1");
    if (v.has_pi) {
      const double yc = y + row_h * 0.5 - 1.0;
      svg.line(sx(v.pi_low), yc, sx(v.pi_high), yc, "#333", 1.5);
      svg.line(sx(v.pi_low), yc - 4, sx(v.pi_low), yc + 4, "#333", 1.5);
      svg.line(sx(v.pi_high), yc - 4, sx(v.pi_high), yc + 4, "#333", 1.5);
    }
  }
  svg.text(left, height - 10, "* interval excludes 0", 10);
  svg.save((fs::path(dir) / "bar.svg").string());
}

std::pair<double, double> loss_color_scale(const std::vector<double>& losses) {
  if (losses.empty()) throw ValidationError("no losses for the color scale");
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  return {*lo, *hi};
}

void emit_violin(const VicResult& vic, const std::string& dir) {
  if (vic.per_model.empty()) throw ValidationError("per-model table missing");
  fs::create_directories(dir);
  write_violin_csv(vic, (fs::path(dir) / "violin.csv").string());

  std::vector<double> losses;
  for (const auto& s : vic.per_model) losses.push_back(s.valid_loss);
  const auto [lo, hi] = loss_color_scale(losses);

  const size_t d = vic.variables.size();
  const size_t m = vic.per_model.size();
  const double row_h = 44.0, left = 150.0, top = 50.0, width = 680.0;
  const double plot_w = width - left - 30.0;
  const double height = top + row_h * d + 40.0;

  double xmax = 0.0;
  for (const auto& s : vic.per_model)
    for (double v : s.mean_abs) xmax = std::max(xmax, v);
  if (xmax <= 0.0) xmax = 1.0;
  auto sx = [&](double v) { return left + v / xmax * plot_w; };

  Svg svg(width, height);
  svg.text(left, 20, "per-model importance across the ensemble", 12);
  svg.text(left, 36,
           "color: validation loss, " + fmt_double(lo) + " (blue) to " + fmt_double(hi) +
               " (red)",
           10);
  for (size_t j = 0; j < d; ++j) {
    const double yc = top + row_h * j + row_h * 0.55;
    svg.text(left - 8, yc + 4, vic.variables[j].name, 11, "end");
    std::vector<double> vals(m);
    for (size_t i = 0; i < m; ++i) vals[i] = vic.per_model[i].mean_abs[j];

    // density silhouette when there is spread
    const auto [vmin_it, vmax_it] = std::minmax_element(vals.begin(), vals.end());
    if (m >= 3 && *vmax_it > *vmin_it) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(m);
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(m - 1));
      const double bw = std::max(1.06 * sd * std::pow(static_cast<double>(m), -0.2),
                                 (*vmax_it - *vmin_it) / 100.0);
      const int pts = 41;
      std::vector<double> dens(pts);
      double dmax = 0.0;
      for (int p = 0; p < pts; ++p) {
        const double x = *vmin_it + (*vmax_it - *vmin_it) * p / (pts - 1);
        double acc = 0.0;
        for (double v : vals) {
          const double u = (x - v) / bw;
          acc += std::exp(-0.5 * u * u);
        }
        dens[p] = acc;
        dmax = std::max(dmax, acc);
      }
      std::vector<std::pair<double, double>> poly;
      for (int p = 0; p < pts; ++p) {
        const double x = *vmin_it + (*vmax_it - *vmin_it) * p / (pts - 1);
        poly.emplace_back(sx(x), yc - dens[p] / dmax * row_h * 0.38);
      }
      for (int p = pts - 1; p >= 0; --p) {
        const double x = *vmin_it + (*vmax_it - *vmin_it) * p / (pts - 1);
        poly.emplace_back(sx(x), yc + dens[p] / dmax * row_h * 0.38);
      }
      svg.polygon(poly, "#eeeeee");
    }
    for (size_t i = 0; i < m; ++i)
      svg.line(sx(vals[i]), yc - row_h * 0.3, sx(vals[i]), yc + row_h * 0.3,
               loss_color(vic.per_model[i].valid_loss, lo, hi), 1.2);
  }
  svg.text(left, height - 14, "mean |SHAP| per model; one tick per model", 10);
  svg.save((fs::path(dir) / "violin.svg").string());
}

double spearman(const std::vector<std::string>& order_a,
                const std::vector<std::string>& order_b) {
  const size_t d = order_a.size();
  if (order_b.size() != d || d == 0)
    throw ValidationError("rank comparison needs two orders of the same size");
  std::map<std::string, size_t> pos_b;
  for (size_t i = 0; i < d; ++i)
    if (!pos_b.emplace(order_b[i], i).second)
      throw ValidationError("duplicate variable in ranking: " + order_b[i]);
  if (d == 1) return 1.0;
  double sum_sq = 0.0;
  for (size_t i = 0; i < d; ++i) {
    auto it = pos_b.find(order_a[i]);
    if (it == pos_b.end())
      throw ValidationError("rankings cover different variable sets ('" + order_a[i] +
                            "' missing)");
    const double diff = static_cast<double>(i) - static_cast<double>(it->second);
    sum_sq += diff * diff;
  }
  const double dd = static_cast<double>(d);
  return 1.0 - 6.0 * sum_sq / (dd * (dd * dd - 1.0));
}

double rank_comparison(const std::vector<std::string>& shap_order,
                       const std::vector<std::string>& vic_order, const std::string& dir) {
  const double rho = spearman(shap_order, vic_order);
  fs::create_directories(dir);

  std::map<std::string, size_t> vic_pos;
  for (size_t i = 0; i < vic_order.size(); ++i) vic_pos[vic_order[i]] = i;

  {
    std::ofstream out(fs::path(dir) / "rank_comparison.csv", std::ios::binary);
    if (!out) throw ValidationError("cannot write rank_comparison.csv in " + dir);
    out << "variable,shap_rank,vic_rank\n";
    for (size_t i = 0; i < shap_order.size(); ++i)
      out << shap_order[i] << ',' << i + 1 << ',' << vic_pos.at(shap_order[i]) + 1 << '\n';
  }

  const size_t d = shap_order.size();
  const double row_h = 26.0, top = 50.0, width = 560.0;
  const double left_x = 190.0, right_x = width - 190.0;
  const double height = top + row_h * d + 30.0;
  Svg svg(width, height);
  svg.text(width / 2, 20, "variable ranking: single-model SHAP vs ensemble", 12, "middle");
  svg.text(width / 2, 36, "Spearman correlation " + fmt_double(rho), 10, "middle");
  svg.text(left_x, top - 8, "SHAP", 10, "end");
  svg.text(right_x, top - 8, "ensemble", 10);
  for (size_t i = 0; i < d; ++i) {
    const double yl = top + row_h * i + row_h * 0.5;
    const size_t vp = vic_pos.at(shap_order[i]);
    const double yr = top + row_h * vp + row_h * 0.5;
    svg.text(left_x - 6, yl + 4, std::to_string(i + 1) + ". " + shap_order[i], 10, "end");
    svg.line(left_x, yl, right_x, yr, "#1f77b4", 1.2);
    svg.circle(left_x, yl, 2.5, "#333");
    svg.circle(right_x, yr, 2.5, "#333");
  }
  for (size_t i = 0; i < d; ++i) {
    const double yr = top + row_h * i + row_h * 0.5;
    svg.text(right_x + 6, yr + 4, std::to_string(i + 1) + ". " + vic_order[i], 10);
  }
  svg.save((fs::path(dir) / "rank_comparison.svg").string());
  return rho;
}

void write_parsimony_svg(const std::vector<std::pair<std::string, ParsimonyCurve>>& curves,
                         const std::string& path) {
  if (curves.empty()) throw ValidationError("no parsimony curves");
  const double left = 70.0, top = 40.0, width = 640.0, height = 360.0;
  const double plot_w = width - left - 30.0, plot_h = height - top - 60.0;

  size_t d = 0;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& [name, curve] : curves) {
    d = std::max(d, curve.entries.size());
    for (const auto& e : curve.entries)
      if (e.ok) {
        ymin = std::min(ymin, e.metric_value);
        ymax = std::max(ymax, e.metric_value);
      }
  }
  if (!(ymax > ymin)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  auto sx = [&](double k) { return left + (k - 1.0) / std::max<double>(1.0, d - 1) * plot_w; };
  auto sy = [&](double v) { return top + plot_h - (v - ymin) / (ymax - ymin) * plot_h; };

  const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  Svg svg(width, height);
  svg.text(left, 20, "performance of the top-k variables (" +
                         metric_name(curves.front().second.metric) + ")", 12);
  svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#999");
  svg.line(left, top, left, top + plot_h, "#999");
  svg.text(left - 8, sy(ymin) + 4, fmt_double(ymin), 9, "end");
  svg.text(left - 8, sy(ymax) + 4, fmt_double(ymax), 9, "end");
  for (size_t c = 0; c < curves.size(); ++c) {
    const auto& curve = curves[c].second;
    std::vector<std::pair<double, double>> pts;
    for (const auto& e : curve.entries)
      if (e.ok) pts.emplace_back(sx(e.k), sy(e.metric_value));
    svg.polyline(pts, palette[c % palette.size()]);
    for (const auto& p : pts) svg.circle(p.first, p.second, 2.2, palette[c % palette.size()]);
    svg.text(left + plot_w - 4, top + 14.0 * (c + 1), curves[c].first, 10, "end");
    svg.line(left + plot_w - 70, top + 14.0 * (c + 1) - 4, left + plot_w - 58,
             top + 14.0 * (c + 1) - 4, palette[c % palette.size()], 2.0);
  }
  for (size_t k = 1; k <= d; ++k)
    svg.text(sx(static_cast<double>(k)), top + plot_h + 14, std::to_string(k), 9, "middle");
  svg.text(left + plot_w / 2, height - 18, "k (number of variables)", 10, "middle");
  svg.save(path);
}

}  // namespace svic
