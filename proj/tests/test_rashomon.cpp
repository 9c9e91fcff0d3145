#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "svic/rashomon.hpp"
#include "svic/rng.hpp"
#include "svic/synth.hpp"
#include "test_helpers.hpp"

using namespace svic;
using svic_test::TempDir;

namespace {

struct Fixture {
  Dataset ds;
  DataSplit split;
  MLPArch arch;
  TrainConfig cfg;
  Matrix train_x, valid_x;
  std::vector<int> train_y, valid_y;

  Fixture()
      : ds(make_logistic_dataset(600, {1.5, -1.0, 0.7, 0.0}, 404)),
        split(split_dataset(ds, 60, 0.8, 21)),
        arch(make_arch(4, {8})) {
    cfg.epochs = 12;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 32;
    train_x = ds.features.gather_rows(split.train_idx);
    train_y = gather(ds.outcome, split.train_idx);
    valid_x = ds.features.gather_rows(split.valid_idx);
    valid_y = gather(ds.outcome, split.valid_idx);
  }

  RashomonConfig rcfg() const {
    RashomonConfig r;
    r.lambda_grid = {0.0, 1e-5, 1e-4, 1e-3};
    r.seeds_per_lambda = 3;
    r.target_size = 25;
    r.master_seed = 99;
    r.min_subset_size = 40;
    return r;
  }
};

}  // namespace

TEST_CASE("train_optimal stores its own validation loss and is deterministic") {
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 5;
  const ModelSample a = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  const ModelSample b = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  CHECK(a.valid_loss == b.valid_loss);
  CHECK(a.provenance.stage == Stage::optimal);
  CHECK(a.valid_loss == mean_bce(a.model, f.valid_x, f.valid_y));
  // beats the constant predictor on signal-bearing data
  CHECK(a.valid_loss < std::log(2.0));
}

TEST_CASE("stage-1 candidate at lambda 0 with the optimal seed reproduces f* bitwise") {
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 1234;
  const ModelSample opt = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  const MLPModel redo = train_stage1_candidate(f.train_x, f.train_y, f.arch, c, 0.0, c.seed);
  CHECK(redo.same_params(opt.model));
}

TEST_CASE("stage-1 accepts models satisfying the penalized inequality") {
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 7;
  const ModelSample opt = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  const RashomonConfig r = f.rcfg();
  const auto seeds =
      stage1_seeds(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c, r, opt.valid_loss);
  CHECK(!seeds.empty());
  CHECK(seeds.size() <= r.lambda_grid.size() * static_cast<size_t>(r.seeds_per_lambda));
  const double threshold = (1.0 + r.epsilon) * opt.valid_loss;
  for (const auto& s : seeds) {
    // re-evaluate the R1 inequality from scratch
    const double penalized =
        mean_bce(s.model, f.valid_x, f.valid_y) + s.provenance.lambda * l2_penalty(s.model);
    CHECK(penalized <= threshold);
    CHECK(s.provenance.stage == Stage::seed);
    CHECK(s.valid_loss == mean_bce(s.model, f.valid_x, f.valid_y));
  }
}

TEST_CASE("an absurd lambda is rejected rather than crashing") {
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 7;
  const ModelSample opt = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  RashomonConfig r = f.rcfg();
  r.lambda_grid = {0.0, 1e6};
  const auto seeds =
      stage1_seeds(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c, r, opt.valid_loss);
  for (const auto& s : seeds) CHECK(s.provenance.lambda != 1e6);
}

TEST_CASE("stage-1 with an impossible threshold reports the failing lambdas") {
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 7;
  RashomonConfig r = f.rcfg();
  r.lambda_grid = {0.0};
  r.seeds_per_lambda = 1;
  // reference loss of zero makes the threshold unattainable
  CHECK_THROWS_AS(
      stage1_seeds(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c, r, 0.0),
      ValidationError);
}

TEST_CASE("stage-2 with zero fine-tune epochs returns exactly the passing seeds") {
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 7;
  const ModelSample opt = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  RashomonConfig r = f.rcfg();
  const auto seeds =
      stage1_seeds(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c, r, opt.valid_loss);
  const auto subsets = make_subsets(f.ds, f.split, 0, r.n_bins, r.min_subset_size);

  r.finetune_epochs = 0;
  const auto members = stage2_expand(seeds, subsets, f.ds.features, f.ds.outcome, f.valid_x,
                                     f.valid_y, c, r, opt.valid_loss);
  const double threshold = (1.0 + r.epsilon) * opt.valid_loss;
  size_t passing = 0;
  for (const auto& s : seeds)
    if (s.valid_loss <= threshold) ++passing;
  CHECK(members.size() == std::min<size_t>(passing, r.target_size));
  for (size_t i = 0; i < members.size(); ++i) CHECK(members[i].provenance.stage == Stage::seed);
}

TEST_CASE("every sampled member satisfies the loss threshold on re-evaluation") {
  Fixture f;
  const RashomonConfig r = f.rcfg();
  const ModelEnsemble ens = sample_rashomon(f.ds, f.split, f.arch, f.cfg, r);
  REQUIRE(ens.members.size() >= 2);
  CHECK(ens.members[0].provenance.stage == Stage::optimal);
  CHECK(ens.members[0].valid_loss == ens.reference_loss);
  const double threshold = (1.0 + r.epsilon) * ens.reference_loss;
  for (const auto& m : ens.members) {
    const double re = mean_bce(m.model, f.valid_x, f.valid_y);
    CHECK(std::fabs(re - m.valid_loss) <= 1e-12);
    CHECK(m.valid_loss <= threshold);
  }
  // losses spread over a nondegenerate range
  double lo = ens.members[0].valid_loss, hi = lo;
  for (const auto& m : ens.members) {
    lo = std::min(lo, m.valid_loss);
    hi = std::max(hi, m.valid_loss);
  }
  CHECK(hi > lo);
}

TEST_CASE("sample_rashomon is deterministic in the master seed") {
  Fixture f;
  const RashomonConfig r = f.rcfg();
  const ModelEnsemble a = sample_rashomon(f.ds, f.split, f.arch, f.cfg, r);
  const ModelEnsemble b = sample_rashomon(f.ds, f.split, f.arch, f.cfg, r);
  REQUIRE(a.members.size() == b.members.size());
  for (size_t i = 0; i < a.members.size(); ++i) {
    CHECK(a.members[i].valid_loss == b.members[i].valid_loss);
    CHECK(a.members[i].model.same_params(b.members[i].model));
  }
}

TEST_CASE("epsilon caps the member losses and target_size caps the count") {
  Fixture f;
  RashomonConfig r = f.rcfg();
  r.epsilon = 0.05;
  const ModelEnsemble ens = sample_rashomon(f.ds, f.split, f.arch, f.cfg, r);
  for (const auto& m : ens.members)
    CHECK(m.valid_loss / ens.reference_loss <= 1.05 + 1e-15);
  CHECK(ens.members.size() <= static_cast<size_t>(r.target_size) + 1);

  r.target_size = 1;
  const ModelEnsemble tiny = sample_rashomon(f.ds, f.split, f.arch, f.cfg, r);
  CHECK(tiny.members.size() <= 2);  // optimal plus at most one sampled member
}

TEST_CASE("shrinking epsilon can only shrink the accepted set") {
  // fixed schedule: identical seeds and subsets, only the threshold moves
  Fixture f;
  TrainConfig c = f.cfg;
  c.seed = 7;
  const ModelSample opt = train_optimal(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c);
  RashomonConfig wide = f.rcfg();
  wide.epsilon = 0.05;
  wide.target_size = 1000;  // no cap truncation
  const auto seeds =
      stage1_seeds(f.train_x, f.train_y, f.valid_x, f.valid_y, f.arch, c, wide, opt.valid_loss);
  std::vector<SubsetSpec> subsets;
  for (size_t j = 0; j < f.ds.d(); ++j)
    for (auto& s : make_subsets(f.ds, f.split, j, wide.n_bins, wide.min_subset_size))
      subsets.push_back(std::move(s));

  RashomonConfig narrow = wide;
  narrow.epsilon = 0.02;
  const auto members_wide = stage2_expand(seeds, subsets, f.ds.features, f.ds.outcome,
                                          f.valid_x, f.valid_y, c, wide, opt.valid_loss);
  const auto members_narrow = stage2_expand(seeds, subsets, f.ds.features, f.ds.outcome,
                                            f.valid_x, f.valid_y, c, narrow, opt.valid_loss);
  CHECK(members_narrow.size() <= members_wide.size());
  std::vector<double> wide_losses;
  for (const auto& m : members_wide) wide_losses.push_back(m.valid_loss);
  for (const auto& m : members_narrow)
    CHECK(std::find(wide_losses.begin(), wide_losses.end(), m.valid_loss) !=
          wide_losses.end());
}

TEST_CASE("ensemble directory round-trips") {
  TempDir tmp("ens");
  Fixture f;
  RashomonConfig r = f.rcfg();
  r.target_size = 6;
  const ModelEnsemble ens = sample_rashomon(f.ds, f.split, f.arch, f.cfg, r);
  save_ensemble(ens, tmp.file("ensemble"));
  const ModelEnsemble back = load_ensemble(tmp.file("ensemble"));
  REQUIRE(back.members.size() == ens.members.size());
  CHECK(back.reference_loss == ens.reference_loss);
  CHECK(back.epsilon == ens.epsilon);
  for (size_t i = 0; i < ens.members.size(); ++i) {
    CHECK(back.members[i].model.same_params(ens.members[i].model));
    CHECK(back.members[i].valid_loss == ens.members[i].valid_loss);
    CHECK(back.members[i].provenance.stage == ens.members[i].provenance.stage);
    CHECK(back.members[i].provenance.seed == ens.members[i].provenance.seed);
  }
}
