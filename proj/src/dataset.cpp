#include "svic/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svic/common.hpp"
#include "svic/rng.hpp"

namespace svic {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

bool parse_number(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

void check_name(const std::string& name, const std::string& what) {
  if (name.empty()) throw ValidationError(what + " name is empty");
  if (name.find(',') != std::string::npos || name.find('\n') != std::string::npos ||
      name.find('\r') != std::string::npos)
    throw ValidationError(what + " name contains a comma or newline: '" + name + "'");
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& origin) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ValidationError(origin + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace

Schema parse_schema_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(origin + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ValidationError(origin + ": schema must be a JSON object");
  reject_unknown_keys(j, {"outcome", "categorical", "features"}, origin);
  if (!j.contains("outcome") || !j["outcome"].is_string())
    throw ValidationError(origin + ": schema needs a string field 'outcome'");
  Schema s;
  s.outcome = j["outcome"].get<std::string>();
  if (j.contains("categorical")) s.categorical = j["categorical"].get<std::vector<std::string>>();
  if (j.contains("features")) s.features = j["features"].get<std::vector<std::string>>();
  return s;
}

Schema load_schema(const std::string& path) {
  return parse_schema_json(read_file(path), path);
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": file is empty");
  const std::vector<std::string> header = split_line(line);

  std::map<std::string, size_t> col_of;
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) throw ValidationError(path + ": empty column name in header");
    if (!col_of.emplace(header[c], c).second)
      throw ValidationError(path + ": duplicate column name '" + header[c] + "'");
  }

  auto outcome_it = col_of.find(schema.outcome);
  if (outcome_it == col_of.end())
    throw ValidationError(path + ": outcome column '" + schema.outcome + "' not in header");
  const size_t outcome_col = outcome_it->second;

  std::vector<std::string> feature_names = schema.features;
  if (feature_names.empty()) {
    for (const auto& h : header)
      if (h != schema.outcome) feature_names.push_back(h);
  }
  if (feature_names.size() < 2)
    throw ValidationError(path + ": need at least 2 feature columns, got " +
                          std::to_string(feature_names.size()));

  const std::set<std::string> categorical(schema.categorical.begin(), schema.categorical.end());
  for (const auto& c : categorical) {
    if (!col_of.count(c))
      throw ValidationError(path + ": categorical column '" + c + "' not in header");
  }

  std::vector<size_t> feature_cols;
  std::vector<VarKind> kinds;
  std::set<std::string> seen;
  for (const auto& name : feature_names) {
    check_name(name, "feature column");
    if (name == schema.outcome)
      throw ValidationError(path + ": outcome column '" + name + "' listed as a feature");
    if (!seen.insert(name).second)
      throw ValidationError(path + ": duplicate feature '" + name + "' in schema");
    auto it = col_of.find(name);
    if (it == col_of.end())
      throw ValidationError(path + ": feature column '" + name + "' not in header");
    feature_cols.push_back(it->second);
    kinds.push_back(categorical.count(name) ? VarKind::categorical : VarKind::continuous);
  }

  const size_t d = feature_cols.size();
  std::vector<double> values;
  std::vector<int> outcome;
  // level label -> code, per categorical column, first-appearance order
  std::vector<std::map<std::string, int>> level_code(d);
  std::vector<std::vector<std::string>> level_labels(d);

  size_t line_no = 1;  // header was line 1
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw ValidationError(path + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));

    const std::string& ycell = cells[outcome_col];
    if (ycell.empty())
      throw ValidationError(path + ": missing value at row " + std::to_string(line_no) +
                            ", column '" + schema.outcome + "'");
    double yv;
    if (!parse_number(ycell, yv) || (yv != 0.0 && yv != 1.0))
      throw ValidationError(path + ": outcome value '" + ycell + "' at row " +
                            std::to_string(line_no) + " is not 0 or 1");
    outcome.push_back(static_cast<int>(yv));

    for (size_t f = 0; f < d; ++f) {
      const std::string& cell = cells[feature_cols[f]];
      if (cell.empty())
        throw ValidationError(path + ": missing value at row " + std::to_string(line_no) +
                              ", column '" + feature_names[f] + "'");
      if (kinds[f] == VarKind::continuous) {
        double v;
        if (!parse_number(cell, v))
          throw ValidationError(path + ": cannot parse '" + cell + "' at row " +
                                std::to_string(line_no) + ", column '" + feature_names[f] + "'");
        values.push_back(v);
      } else {
        check_name(cell, "categorical level");
        auto [it, inserted] = level_code[f].emplace(cell, static_cast<int>(level_labels[f].size()));
        if (inserted) level_labels[f].push_back(cell);
        values.push_back(static_cast<double>(it->second));
      }
    }
  }

  const size_t n = outcome.size();
  if (n < 1) throw ValidationError(path + ": no data rows");

  Dataset ds;
  ds.features = Matrix(n, d);
  ds.features.data() = std::move(values);
  ds.outcome = std::move(outcome);
  ds.var_names = std::move(feature_names);
  ds.var_kinds = std::move(kinds);
  ds.level_labels = std::move(level_labels);
  ds.outcome_name = schema.outcome;
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << join(ds.var_names, ',') << ',' << ds.outcome_name << '\n';
  for (size_t i = 0; i < ds.n(); ++i) {
    for (size_t j = 0; j < ds.d(); ++j) {
      const double v = ds.features(i, j);
      if (ds.var_kinds[j] == VarKind::categorical) {
        out << ds.level_labels[j][static_cast<size_t>(v)];
      } else {
        out << fmt_double(v);
      }
      out << ',';
    }
    out << ds.outcome[i] << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path);
}

DataSplit split_dataset(const Dataset& ds, size_t explain_count, double train_frac,
                        std::uint64_t seed) {
  const size_t n = ds.n();
  if (explain_count >= n)
    throw ValidationError("explain_count (" + std::to_string(explain_count) +
                          ") must be smaller than n (" + std::to_string(n) + ")");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ValidationError("train_frac must be in (0, 1)");

  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);

  const size_t remaining = n - explain_count;
  const size_t n_train =
      static_cast<size_t>(std::ceil(train_frac * static_cast<double>(remaining)));

  DataSplit split;
  split.seed = seed;
  split.explain_idx.assign(perm.begin(), perm.begin() + explain_count);
  split.train_idx.assign(perm.begin() + explain_count, perm.begin() + explain_count + n_train);
  split.valid_idx.assign(perm.begin() + explain_count + n_train, perm.end());
  std::sort(split.explain_idx.begin(), split.explain_idx.end());
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.valid_idx.begin(), split.valid_idx.end());

  bool has0 = false, has1 = false;
  for (size_t i : split.train_idx) (ds.outcome[i] ? has1 : has0) = true;
  if (!has0 || !has1)
    throw ValidationError("training split lacks one outcome class; adjust sizes or seed");
  return split;
}

void save_split(const DataSplit& split, const std::string& path) {
  nlohmann::json j;
  j["seed"] = split.seed;
  j["train_idx"] = split.train_idx;
  j["valid_idx"] = split.valid_idx;
  j["explain_idx"] = split.explain_idx;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << j.dump() << '\n';
}

DataSplit load_split(const std::string& path, size_t n) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
  DataSplit s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_idx = j.at("train_idx").get<std::vector<size_t>>();
    s.valid_idx = j.at("valid_idx").get<std::vector<size_t>>();
    s.explain_idx = j.at("explain_idx").get<std::vector<size_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad split file: " + e.what());
  }
  std::vector<char> hit(n, 0);
  size_t total = 0;
  for (const auto* v : {&s.train_idx, &s.valid_idx, &s.explain_idx}) {
    for (size_t i : *v) {
      if (i >= n || hit[i]) throw ValidationError(path + ": split does not partition 0..n-1");
      hit[i] = 1;
      ++total;
    }
  }
  if (total != n) throw ValidationError(path + ": split does not cover all rows");
  return s;
}

namespace {

// Merge bins smaller than min_size into an adjacent bin, keeping order.
void merge_undersized(std::vector<std::vector<size_t>>& bins, size_t min_size) {
  while (bins.size() > 1) {
    size_t small = bins.size();
    for (size_t b = 0; b < bins.size(); ++b) {
      if (bins[b].size() < min_size) {
        small = b;
        break;
      }
    }
    if (small == bins.size()) break;
    const size_t into = (small + 1 < bins.size()) ? small + 1 : small - 1;
    auto& dst = bins[std::min(small, into)];
    auto& src = bins[std::max(small, into)];
    dst.insert(dst.end(), src.begin(), src.end());
    bins.erase(bins.begin() + static_cast<std::ptrdiff_t>(std::max(small, into)));
  }
}

}  // namespace

std::vector<SubsetSpec> make_subsets(const Dataset& ds, const DataSplit& split,
                                     size_t variable_index, int n_bins,
                                     size_t min_subset_size) {
  if (variable_index >= ds.d())
    throw ValidationError("variable_index out of range: " + std::to_string(variable_index));
  const auto& train = split.train_idx;
  if (train.empty()) throw ValidationError("empty training split");

  std::vector<double> vals(train.size());
  for (size_t i = 0; i < train.size(); ++i) vals[i] = ds.features(train[i], variable_index);

  const double first = vals[0];
  bool constant = true;
  for (double v : vals)
    if (v != first) {
      constant = false;
      break;
    }
  if (constant) return {};  // caller skips this variable

  std::vector<std::vector<size_t>> bins;
  if (ds.var_kinds[variable_index] == VarKind::categorical) {
    std::map<double, std::vector<size_t>> by_level;
    for (size_t i = 0; i < train.size(); ++i) by_level[vals[i]].push_back(train[i]);
    for (auto& [level, rows] : by_level) bins.push_back(std::move(rows));
  } else {
    if (n_bins < 2) throw ValidationError("n_bins must be >= 2 for a continuous variable");
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const size_t m = sorted.size();
    // boundary quantiles as order statistics; dedupe keeps them strictly increasing
    std::vector<double> bounds;
    for (int k = 1; k < n_bins; ++k) {
      const size_t pos = static_cast<size_t>(std::floor(
          static_cast<double>(k) / n_bins * static_cast<double>(m - 1)));
      const double q = sorted[pos];
      if (bounds.empty() || q > bounds.back()) bounds.push_back(q);
    }
    bins.assign(bounds.size() + 1, {});
    for (size_t i = 0; i < train.size(); ++i) {
      // ties at a boundary go to the lower bin: bin b is (bounds[b-1], bounds[b]]
      const size_t b = static_cast<size_t>(
          std::lower_bound(bounds.begin(), bounds.end(), vals[i]) - bounds.begin());
      bins[b].push_back(train[i]);
    }
    bins.erase(std::remove_if(bins.begin(), bins.end(),
                              [](const auto& b) { return b.empty(); }),
               bins.end());
  }

  merge_undersized(bins, min_subset_size);

  std::vector<SubsetSpec> out;
  out.reserve(bins.size());
  for (size_t b = 0; b < bins.size(); ++b) {
    SubsetSpec s;
    s.variable_index = variable_index;
    s.bin_id = static_cast<int>(b);
    s.member_idx = std::move(bins[b]);
    std::sort(s.member_idx.begin(), s.member_idx.end());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace svic
