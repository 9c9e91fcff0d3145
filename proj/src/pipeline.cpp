#include "svic/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svic/rng.hpp"

namespace svic {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ValidationError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

AppConfig parse_config_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(origin + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ValidationError(origin + ": config must be a JSON object");
  check_keys(j, {"arch", "train", "rashomon", "shap", "report"}, origin);

  AppConfig cfg;
  try {
    if (j.contains("arch")) {
      check_keys(j["arch"], {"hidden"}, origin + ".arch");
      read_field(j["arch"], "hidden", cfg.hidden);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, {"lr", "epochs", "batch_size", "momentum"}, origin + ".train");
      read_field(t, "lr", cfg.train.learning_rate);
      read_field(t, "epochs", cfg.train.epochs);
      read_field(t, "batch_size", cfg.train.batch_size);
      read_field(t, "momentum", cfg.train.momentum);
    }
    if (j.contains("rashomon")) {
      const json& r = j["rashomon"];
      check_keys(r,
                 {"epsilon", "lambda_grid", "seeds_per_lambda", "finetune_epochs",
                  "target_size", "n_bins"},
                 origin + ".rashomon");
      read_field(r, "epsilon", cfg.rashomon.epsilon);
      read_field(r, "lambda_grid", cfg.rashomon.lambda_grid);
      read_field(r, "seeds_per_lambda", cfg.rashomon.seeds_per_lambda);
      read_field(r, "finetune_epochs", cfg.rashomon.finetune_epochs);
      read_field(r, "target_size", cfg.rashomon.target_size);
      read_field(r, "n_bins", cfg.rashomon.n_bins);
    }
    if (j.contains("shap")) {
      const json& s = j["shap"];
      check_keys(s, {"method", "background_size", "n_permutations"}, origin + ".shap");
      if (s.contains("method")) {
        const std::string m = s["method"].get<std::string>();
        if (m == "exact")
          cfg.shap.method = ShapMethod::exact;
        else if (m == "permutation")
          cfg.shap.method = ShapMethod::permutation;
        else
          throw ValidationError(origin + ": shap method must be exact or permutation");
      }
      read_field(s, "background_size", cfg.shap.background_size);
      read_field(s, "n_permutations", cfg.shap.n_permutations);
    }
    if (j.contains("report")) {
      check_keys(j["report"], {"parsimony_metric"}, origin + ".report");
      if (j["report"].contains("parsimony_metric"))
        cfg.parsimony_metric =
            metric_from_name(j["report"]["parsimony_metric"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(origin + ": bad config value: " + e.what());
  }
  if (cfg.rashomon.lambda_grid.empty()) cfg.rashomon.lambda_grid = default_lambda_grid();
  return cfg;
}

AppConfig load_config(const std::string& path) {
  if (path.empty()) {
    AppConfig cfg;
    cfg.rashomon.lambda_grid = default_lambda_grid();
    return cfg;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str(), path);
}

namespace {

struct LoadedInputs {
  Dataset ds;
  AppConfig cfg;
};

LoadedInputs load_inputs(const PipelineOptions& opt) {
  LoadedInputs in;
  in.cfg = load_config(opt.config_path);
  if (opt.epsilon_override) in.cfg.rashomon.epsilon = *opt.epsilon_override;
  in.cfg.rashomon.master_seed = opt.master_seed;
  in.ds = load_csv(opt.data_path, load_schema(opt.schema_path));
  return in;
}

size_t default_explain_count(size_t n) { return std::min<size_t>(2500, n / 5); }

void log_line(const PipelineOptions& opt, const std::string& msg) {
  if (!opt.quiet) std::cout << msg << '\n';
}

std::vector<size_t> shap_order_of_optimal(const std::vector<ImportanceSummary>& summaries,
                                          const std::vector<std::string>& var_names) {
  const ImportanceSummary* opt_summary = nullptr;
  for (const auto& s : summaries)
    if (s.model_id == 0) opt_summary = &s;
  if (!opt_summary) throw ValidationError("importance summary for model 0 missing");
  std::vector<size_t> order(var_names.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (opt_summary->mean_abs[a] != opt_summary->mean_abs[b])
      return opt_summary->mean_abs[a] > opt_summary->mean_abs[b];
    return var_names[a] < var_names[b];
  });
  return order;
}

}  // namespace

void stage_fit(const PipelineOptions& opt) {
  auto [ds, cfg] = load_inputs(opt);
  fs::create_directories(opt.out_dir);

  const size_t explain_count = opt.explain_count.value_or(default_explain_count(ds.n()));
  const DataSplit split = split_dataset(ds, explain_count, opt.train_frac,
                                        derive_seed(opt.master_seed, {seed_tag::kSplit}));
  save_split(split, (fs::path(opt.out_dir) / "split.json").string());
  log_line(opt, "split: train " + std::to_string(split.train_idx.size()) + ", valid " +
                    std::to_string(split.valid_idx.size()) + ", explain " +
                    std::to_string(split.explain_idx.size()));

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(opt.master_seed, {seed_tag::kOptimal});
  const MLPArch arch = make_arch(static_cast<int>(ds.d()), cfg.hidden);
  const ModelSample optimal = train_optimal(
      ds.features.gather_rows(split.train_idx), gather(ds.outcome, split.train_idx),
      ds.features.gather_rows(split.valid_idx), gather(ds.outcome, split.valid_idx), arch,
      tc);
  log_line(opt, "optimal model validation loss: " + fmt_double(optimal.valid_loss));

  ModelEnsemble ens;
  ens.reference_loss = optimal.valid_loss;
  ens.epsilon = cfg.rashomon.epsilon;
  ens.members.push_back(optimal);
  save_ensemble(ens, (fs::path(opt.out_dir) / "ensemble").string());
}

void stage_sample(const PipelineOptions& opt) {
  auto [ds, cfg] = load_inputs(opt);
  const std::string ens_dir = (fs::path(opt.out_dir) / "ensemble").string();
  const DataSplit split =
      load_split((fs::path(opt.out_dir) / "split.json").string(), ds.n());
  const ModelEnsemble fitted = load_ensemble(ens_dir);

  TrainConfig tc = cfg.train;
  const MLPArch arch = make_arch(static_cast<int>(ds.d()), cfg.hidden);
  const ModelEnsemble ens = sample_rashomon(ds, split, arch, tc, cfg.rashomon, opt.exec,
                                            &fitted.members.front());
  save_ensemble(ens, ens_dir);
  log_line(opt, "sampled " + std::to_string(ens.members.size()) +
                    " models (reference loss " + fmt_double(ens.reference_loss) + ")");
}

void stage_explain(const PipelineOptions& opt) {
  auto [ds, cfg] = load_inputs(opt);
  const DataSplit split =
      load_split((fs::path(opt.out_dir) / "split.json").string(), ds.n());
  const ModelEnsemble ens =
      load_ensemble((fs::path(opt.out_dir) / "ensemble").string());
  if (split.explain_idx.empty())
    throw ValidationError("explanation split is empty; rerun fit with --explain-count");

  const Matrix train_x = ds.features.gather_rows(split.train_idx);
  const Matrix explain_x = ds.features.gather_rows(split.explain_idx);

  ShapConfig sc;
  sc.background = make_background(train_x, cfg.shap.background_size,
                                  derive_seed(opt.master_seed, {seed_tag::kBackground}));
  sc.method = cfg.shap.method;
  sc.n_permutations = cfg.shap.n_permutations;
  sc.seed = derive_seed(opt.master_seed, {seed_tag::kShap});

  std::vector<ShapMatrix> matrices(ens.members.size());
  std::vector<ImportanceSummary> summaries(ens.members.size());
  for (size_t k = 0; k < ens.members.size(); ++k) {
    matrices[k] = shap_matrix(ens.members[k].model, explain_x, sc, k, opt.exec);
    ImportanceSummary s;
    s.model_id = k;
    s.var_names = ds.var_names;
    s.valid_loss = ens.members[k].valid_loss;
    summarize_matrix(matrices[k].values, s.mean_abs, s.se);
    summaries[k] = std::move(s);
  }
  write_shap_csv((fs::path(opt.out_dir) / "shap_values.csv").string(), matrices,
                 ds.var_names);
  write_summary_csv((fs::path(opt.out_dir) / "importance_summary.csv").string(), summaries);
  log_line(opt, "explained " + std::to_string(ens.members.size()) + " models on " +
                    std::to_string(explain_x.rows()) + " rows");
}

void stage_pool(const PipelineOptions& opt) {
  const auto summaries =
      read_summary_csv((fs::path(opt.out_dir) / "importance_summary.csv").string());
  const VicResult vic = shapleyvic_values(summaries);
  write_vic_csv(vic, (fs::path(opt.out_dir) / "vic.csv").string());
  write_violin_csv(vic, (fs::path(opt.out_dir) / "violin.csv").string());
  log_line(opt, "pooled " + std::to_string(summaries.size()) + " model summaries over " +
                    std::to_string(vic.variables.size()) + " variables");
}

void stage_rank(const PipelineOptions& opt) {
  const auto summaries =
      read_summary_csv((fs::path(opt.out_dir) / "importance_summary.csv").string());
  const RankResult r = ensemble_ranking(summaries);
  write_rank_csv(r, (fs::path(opt.out_dir) / "model_ranks.csv").string());
  write_ensemble_rank_csv(r, (fs::path(opt.out_dir) / "ensemble_rank.csv").string());
  log_line(opt, "ranked " + std::to_string(r.var_names.size()) + " variables across " +
                    std::to_string(r.model_ids.size()) + " models");
}

void stage_report(const PipelineOptions& opt) {
  auto [ds, cfg] = load_inputs(opt);
  const DataSplit split =
      load_split((fs::path(opt.out_dir) / "split.json").string(), ds.n());
  const auto summaries =
      read_summary_csv((fs::path(opt.out_dir) / "importance_summary.csv").string());
  if (summaries.empty()) throw ValidationError("importance summary is empty");
  for (const auto& s : summaries)
    if (s.var_names != ds.var_names)
      throw ValidationError("importance summary variables do not match the data file");

  const VicResult vic = shapleyvic_values(summaries);
  emit_bar(vic, opt.out_dir);
  emit_violin(vic, opt.out_dir);

  const RankResult ranks = ensemble_ranking(summaries);
  std::vector<size_t> vic_order = ranks.ensemble_order;
  std::vector<size_t> shap_order = shap_order_of_optimal(summaries, ds.var_names);

  auto names_of = [&](const std::vector<size_t>& order) {
    std::vector<std::string> names;
    for (size_t j : order) names.push_back(ds.var_names[j]);
    return names;
  };
  const double rho = rank_comparison(names_of(shap_order), names_of(vic_order), opt.out_dir);
  log_line(opt, "rank agreement (Spearman): " + fmt_double(rho));

  const ParsimonyCurve curve_vic = parsimony(ds, split, cfg.hidden, cfg.train, vic_order,
                                             cfg.parsimony_metric, opt.master_seed, opt.exec);
  const ParsimonyCurve curve_shap = parsimony(ds, split, cfg.hidden, cfg.train, shap_order,
                                              cfg.parsimony_metric, opt.master_seed, opt.exec);
  write_parsimony_csv(curve_vic, (fs::path(opt.out_dir) / "parsimony_vic.csv").string());
  write_parsimony_csv(curve_shap, (fs::path(opt.out_dir) / "parsimony_shap.csv").string());
  write_parsimony_svg({{"ensemble ranking", curve_vic}, {"single-model SHAP", curve_shap}},
                      (fs::path(opt.out_dir) / "parsimony.svg").string());
  log_line(opt, "report written to " + opt.out_dir);
}

void run_pipeline(const PipelineOptions& opt) {
  stage_fit(opt);
  stage_sample(opt);
  stage_explain(opt);
  stage_pool(opt);
  stage_rank(opt);
  stage_report(opt);
}

}  // namespace svic
