#include "svic/rashomon.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svic/parallel.hpp"
#include "svic/rng.hpp"

namespace svic {

namespace fs = std::filesystem;

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::optimal: return "optimal";
    case Stage::seed: return "seed";
    case Stage::finetuned: return "finetuned";
  }
  return "unknown";
}

Stage stage_from_name(const std::string& name) {
  if (name == "optimal") return Stage::optimal;
  if (name == "seed") return Stage::seed;
  if (name == "finetuned") return Stage::finetuned;
  throw ValidationError("unknown stage: " + name);
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid{0.0};
  const double lo = 1e-6, hi = 1e-1;
  const int n = 11;
  for (int i = 0; i < n; ++i)
    grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return grid;
}

namespace {

void validate_rcfg(const RashomonConfig& rcfg) {
  if (!(rcfg.epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (rcfg.target_size < 1) throw ValidationError("target_size must be >= 1");
  if (rcfg.seeds_per_lambda < 1) throw ValidationError("seeds_per_lambda must be >= 1");
  if (rcfg.finetune_epochs < 0) throw ValidationError("finetune_epochs must be >= 0");
  if (rcfg.n_bins < 2) throw ValidationError("n_bins must be >= 2");
}

std::vector<double> effective_grid(const RashomonConfig& rcfg) {
  std::vector<double> grid = rcfg.lambda_grid.empty() ? default_lambda_grid() : rcfg.lambda_grid;
  if (std::find(grid.begin(), grid.end(), 0.0) == grid.end())
    throw ValidationError("lambda_grid must contain 0");
  for (double l : grid)
    if (l < 0.0) throw ValidationError("lambda values must be >= 0");
  return grid;
}

}  // namespace

ModelSample train_optimal(const Matrix& train_x, const std::vector<int>& train_y,
                          const Matrix& valid_x, const std::vector<int>& valid_y,
                          const MLPArch& arch, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.lambda = 0.0;
  ModelSample s;
  s.model = train(train_x, train_y, arch, c);
  s.valid_loss = mean_bce(s.model, valid_x, valid_y);
  s.provenance = {Stage::optimal, 0.0, std::nullopt, c.seed};
  return s;
}

MLPModel train_stage1_candidate(const Matrix& train_x, const std::vector<int>& train_y,
                                const MLPArch& arch, const TrainConfig& cfg,
                                double lambda, std::uint64_t seed) {
  TrainConfig c = cfg;
  c.lambda = lambda;
  c.seed = seed;
  return train(train_x, train_y, arch, c);
}

std::vector<ModelSample> stage1_seeds(const Matrix& train_x, const std::vector<int>& train_y,
                                      const Matrix& valid_x, const std::vector<int>& valid_y,
                                      const MLPArch& arch, const TrainConfig& cfg,
                                      const RashomonConfig& rcfg, double reference_loss,
                                      Exec exec) {
  validate_rcfg(rcfg);
  const std::vector<double> grid = effective_grid(rcfg);
  const double threshold = (1.0 + rcfg.epsilon) * reference_loss;

  struct Candidate {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    bool accepted = false;
    bool diverged = false;
    double valid_loss = 0.0;
    MLPModel model;
  };
  const size_t n_tasks = grid.size() * static_cast<size_t>(rcfg.seeds_per_lambda);
  std::vector<Candidate> cands(n_tasks);
  for (size_t li = 0; li < grid.size(); ++li)
    for (int si = 0; si < rcfg.seeds_per_lambda; ++si) {
      Candidate& c = cands[li * rcfg.seeds_per_lambda + si];
      c.lambda = grid[li];
      c.seed = derive_seed(rcfg.master_seed,
                           {seed_tag::kStage1, static_cast<std::uint64_t>(li),
                            static_cast<std::uint64_t>(si)});
    }

  parallel_for_dynamic(static_cast<std::int64_t>(n_tasks), exec, [&](std::int64_t i) {
    Candidate& c = cands[static_cast<size_t>(i)];
    try {
      c.model = train_stage1_candidate(train_x, train_y, arch, cfg, c.lambda, c.seed);
    } catch (const NumericError&) {
      c.diverged = true;  // a diverging candidate is simply rejected
      return;
    }
    c.valid_loss = mean_bce(c.model, valid_x, valid_y, Exec::serial);
    const double penalized = c.valid_loss + c.lambda * l2_penalty(c.model);
    c.accepted = penalized <= threshold;
  });

  std::vector<ModelSample> out;
  for (Candidate& c : cands) {
    if (!c.accepted) continue;
    ModelSample s;
    s.model = std::move(c.model);
    s.valid_loss = c.valid_loss;
    s.provenance = {Stage::seed, c.lambda, std::nullopt, c.seed};
    out.push_back(std::move(s));
  }
  if (out.empty()) {
    std::vector<std::string> failed;
    for (double l : grid) failed.push_back(fmt_double(l));
    throw ValidationError(
        "no stage-1 seed passed the loss threshold; lambda grid too aggressive "
        "(failed lambdas: " + join(failed, ' ') + ")");
  }
  return out;
}

std::vector<ModelSample> stage2_expand(const std::vector<ModelSample>& seeds,
                                       const std::vector<SubsetSpec>& subsets,
                                       const Matrix& all_x, const std::vector<int>& all_y,
                                       const Matrix& valid_x, const std::vector<int>& valid_y,
                                       const TrainConfig& cfg, const RashomonConfig& rcfg,
                                       double reference_loss, Exec exec) {
  if (seeds.empty()) throw ValidationError("stage 2 needs at least one seed model");
  if (subsets.empty()) throw ValidationError("stage 2 needs at least one training subset");
  validate_rcfg(rcfg);

  const double threshold = (1.0 + rcfg.epsilon) * reference_loss;
  const size_t cap = static_cast<size_t>(rcfg.target_size);

  std::vector<ModelSample> members;
  for (const ModelSample& s : seeds) {
    if (members.size() >= cap) break;
    if (s.valid_loss <= threshold) members.push_back(s);
  }

  // No-op fine-tuning adds nothing new; keep just the retained seeds.
  if (rcfg.finetune_epochs > 0 && members.size() < cap) {
    std::vector<std::pair<size_t, size_t>> schedule;  // (seed idx, subset idx)
    schedule.reserve(seeds.size() * subsets.size());
    for (size_t si = 0; si < seeds.size(); ++si)
      for (size_t bi = 0; bi < subsets.size(); ++bi) schedule.emplace_back(si, bi);
    Rng sched_rng(derive_seed(rcfg.master_seed, {seed_tag::kStage2Schedule}));
    sched_rng.shuffle(schedule);

    TrainConfig ft = cfg;
    ft.lambda = 0.0;
    ft.epochs = rcfg.finetune_epochs;
    ft.learning_rate = rcfg.finetune_lr.value_or(0.1 * cfg.learning_rate);

    struct Result {
      bool accepted = false;
      double valid_loss = 0.0;
      MLPModel model;
    };

    // Chunked sweep: train a block of candidates in parallel, then accept in
    // schedule order; identical outcome for any thread count.
    const size_t chunk = std::max<size_t>(32, static_cast<size_t>(max_threads()) * 4);
    size_t next = 0;
    while (next < schedule.size() && members.size() < cap) {
      const size_t end = std::min(schedule.size(), next + chunk);
      std::vector<Result> results(end - next);
      parallel_for_dynamic(static_cast<std::int64_t>(end - next), exec, [&](std::int64_t t) {
        const size_t task = next + static_cast<size_t>(t);
        const auto [si, bi] = schedule[task];
        Result& res = results[static_cast<size_t>(t)];
        const SubsetSpec& sub = subsets[bi];
        const Matrix sub_x = all_x.gather_rows(sub.member_idx);
        const std::vector<int> sub_y = gather(all_y, sub.member_idx);
        TrainConfig c = ft;
        c.seed = derive_seed(rcfg.master_seed,
                             {seed_tag::kFinetune, static_cast<std::uint64_t>(task)});
        MLPModel tuned;
        try {
          tuned = train_from(seeds[si].model, sub_x, sub_y, c);
        } catch (const NumericError&) {
          return;  // rejected
        }
        res.valid_loss = mean_bce(tuned, valid_x, valid_y, Exec::serial);
        res.accepted = res.valid_loss <= threshold;
        if (res.accepted) res.model = std::move(tuned);
      });
      for (size_t t = 0; t < results.size() && members.size() < cap; ++t) {
        if (!results[t].accepted) continue;
        const auto [si, bi] = schedule[next + t];
        ModelSample s;
        s.model = std::move(results[t].model);
        s.valid_loss = results[t].valid_loss;
        s.provenance = {Stage::finetuned, seeds[si].provenance.lambda,
                        std::make_pair(subsets[bi].variable_index, subsets[bi].bin_id),
                        derive_seed(rcfg.master_seed,
                                    {seed_tag::kFinetune, static_cast<std::uint64_t>(next + t)})};
        members.push_back(std::move(s));
      }
      next = end;
    }
  }

  if (members.size() < 10)
    std::cerr << "warning: only " << members.size()
              << " nearly optimal models accepted; meta-analysis may be unstable\n";
  return members;
}

ModelEnsemble sample_rashomon(const Dataset& ds, const DataSplit& split, const MLPArch& arch,
                              const TrainConfig& cfg, const RashomonConfig& rcfg,
                              Exec exec, const ModelSample* precomputed_optimal) {
  validate_rcfg(rcfg);
  const Matrix train_x = ds.features.gather_rows(split.train_idx);
  const std::vector<int> train_y = gather(ds.outcome, split.train_idx);
  const Matrix valid_x = ds.features.gather_rows(split.valid_idx);
  const std::vector<int> valid_y = gather(ds.outcome, split.valid_idx);

  TrainConfig opt_cfg = cfg;
  opt_cfg.seed = derive_seed(rcfg.master_seed, {seed_tag::kOptimal});
  ModelSample optimal;
  if (precomputed_optimal) {
    if (precomputed_optimal->provenance.stage != Stage::optimal)
      throw ValidationError("precomputed reference model is not an optimal model");
    optimal = *precomputed_optimal;
    opt_cfg.seed = optimal.provenance.seed;
  } else {
    optimal = train_optimal(train_x, train_y, valid_x, valid_y, arch, opt_cfg);
  }

  const std::vector<ModelSample> seeds = stage1_seeds(
      train_x, train_y, valid_x, valid_y, arch, opt_cfg, rcfg, optimal.valid_loss, exec);

  std::vector<SubsetSpec> subsets;
  for (size_t j = 0; j < ds.d(); ++j) {
    std::vector<SubsetSpec> subs =
        make_subsets(ds, split, j, rcfg.n_bins, rcfg.min_subset_size);
    for (auto& s : subs) subsets.push_back(std::move(s));
  }
  if (subsets.empty())
    throw ValidationError("every variable is constant on the training rows");

  std::vector<ModelSample> sampled =
      stage2_expand(seeds, subsets, ds.features, ds.outcome, valid_x, valid_y, opt_cfg,
                    rcfg, optimal.valid_loss, exec);

  ModelEnsemble ens;
  ens.reference_loss = optimal.valid_loss;
  ens.epsilon = rcfg.epsilon;
  ens.members.reserve(sampled.size() + 1);
  ens.members.push_back(optimal);
  for (auto& s : sampled) ens.members.push_back(std::move(s));
  return ens;
}

namespace {

nlohmann::json provenance_to_json(const Provenance& p) {
  nlohmann::json j;
  j["stage"] = stage_name(p.stage);
  j["lambda"] = p.lambda;
  if (p.subset) {
    j["subset"] = {{"variable", p.subset->first}, {"bin", p.subset->second}};
  } else {
    j["subset"] = nullptr;
  }
  j["seed"] = p.seed;
  return j;
}

Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.stage = stage_from_name(j.at("stage").get<std::string>());
  p.lambda = j.at("lambda").get<double>();
  if (!j.at("subset").is_null())
    p.subset = std::make_pair(j["subset"].at("variable").get<size_t>(),
                              j["subset"].at("bin").get<int>());
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace

void save_ensemble(const ModelEnsemble& ens, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("member_", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".json")
      fs::remove(entry.path());
  }
  {
    nlohmann::json meta;
    meta["reference_loss"] = ens.reference_loss;
    meta["epsilon"] = ens.epsilon;
    meta["member_count"] = ens.members.size();
    std::ofstream out(fs::path(dir) / "meta.json", std::ios::binary);
    if (!out) throw ValidationError("cannot write ensemble meta in " + dir);
    out << meta.dump() << '\n';
  }
  for (size_t k = 0; k < ens.members.size(); ++k) {
    const ModelSample& m = ens.members[k];
    nlohmann::json j;
    j["model"] = nlohmann::json::parse(model_to_json(m.model));
    j["provenance"] = provenance_to_json(m.provenance);
    j["valid_loss"] = m.valid_loss;
    std::ofstream out(fs::path(dir) / ("member_" + std::to_string(k) + ".json"),
                      std::ios::binary);
    if (!out) throw ValidationError("cannot write ensemble member in " + dir);
    out << j.dump() << '\n';
  }
}

ModelEnsemble load_ensemble(const std::string& dir) {
  const fs::path meta_path = fs::path(dir) / "meta.json";
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(meta_path.string() + ": invalid JSON: " + e.what());
  }
  ModelEnsemble ens;
  try {
    ens.reference_loss = meta.at("reference_loss").get<double>();
    ens.epsilon = meta.at("epsilon").get<double>();
    const size_t count = meta.at("member_count").get<size_t>();
    for (size_t k = 0; k < count; ++k) {
      const fs::path p = fs::path(dir) / ("member_" + std::to_string(k) + ".json");
      std::ifstream min(p, std::ios::binary);
      if (!min) throw ValidationError("cannot open " + p.string());
      nlohmann::json j;
      min >> j;
      ModelSample s;
      s.model = model_from_json(j.at("model").dump(), p.string());
      s.provenance = provenance_from_json(j.at("provenance"));
      s.valid_loss = j.at("valid_loss").get<double>();
      ens.members.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(dir + ": bad ensemble: " + e.what());
  }
  if (ens.members.empty()) throw ValidationError(dir + ": ensemble has no members");
  if (ens.members.front().provenance.stage != Stage::optimal)
    throw ValidationError(dir + ": member 0 must be the optimal model");
  return ens;
}

}  // namespace svic
