// Times the OpenMP kernels against the serial reference path and checks
// that both produce bitwise-identical results.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "svic/parallel.hpp"
#include "svic/rashomon.hpp"
#include "svic/shap.hpp"
#include "svic/synth.hpp"

using namespace svic;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn) {
  double best = 1e300;
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool match) {
  std::printf("%-28s serial %9.1f ms   parallel %9.1f ms   speedup %5.2fx   %s\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              match ? "results match" : "RESULTS DIFFER");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", max_threads());

  const Dataset ds = make_logistic_dataset(4000, {1.5, -1.0, 0.8, 0.5, -0.3, 0.2, 0.1, 0.05},
                                           20240817u);
  const DataSplit split = split_dataset(ds, 400, 0.8, 1);
  const MLPArch arch = make_arch(static_cast<int>(ds.d()), {32});
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 7;
  const MLPModel model = train(ds.features.gather_rows(split.train_idx),
                               gather(ds.outcome, split.train_idx), arch, cfg);

  {
    const Matrix big = make_logistic_dataset(200000, {1.5, -1.0, 0.8, 0.5, -0.3, 0.2, 0.1, 0.05},
                                             99u)
                           .features;
    std::vector<double> out_s, out_p;
    const double ts = time_ms([&] { out_s = predict(model, big, Exec::serial); });
    const double tp = time_ms([&] { out_p = predict(model, big, Exec::parallel); });
    report("predict (200k rows)", ts, tp, out_s == out_p);
  }

  const Matrix explain_x = ds.features.gather_rows(split.explain_idx);
  ShapConfig sc;
  sc.background = make_background(ds.features.gather_rows(split.train_idx), 64, 5);
  sc.seed = 11;
  {
    ShapConfig c = sc;
    c.method = ShapMethod::exact;
    ShapMatrix a, b;
    const double ts = time_ms([&] { a = shap_matrix(model, explain_x, c, 0, Exec::serial); });
    const double tp = time_ms([&] { b = shap_matrix(model, explain_x, c, 0, Exec::parallel); });
    report("exact shap (400 x 8)", ts, tp, a.values == b.values);
  }
  {
    ShapConfig c = sc;
    c.method = ShapMethod::permutation;
    c.n_permutations = 100;
    ShapMatrix a, b;
    const double ts = time_ms([&] { a = shap_matrix(model, explain_x, c, 0, Exec::serial); });
    const double tp = time_ms([&] { b = shap_matrix(model, explain_x, c, 0, Exec::parallel); });
    report("permutation shap (400 x 8)", ts, tp, a.values == b.values);
  }
  {
    RashomonConfig rcfg;
    rcfg.lambda_grid = {0.0, 1e-5, 1e-4, 1e-3};
    rcfg.seeds_per_lambda = 2;
    rcfg.target_size = 24;
    rcfg.master_seed = 3;
    rcfg.min_subset_size = 50;
    ModelEnsemble a, b;
    const double ts =
        time_ms([&] { a = sample_rashomon(ds, split, arch, cfg, rcfg, Exec::serial); });
    const double tp =
        time_ms([&] { b = sample_rashomon(ds, split, arch, cfg, rcfg, Exec::parallel); });
    bool match = a.members.size() == b.members.size();
    for (size_t i = 0; match && i < a.members.size(); ++i)
      match = a.members[i].valid_loss == b.members[i].valid_loss &&
              a.members[i].model.same_params(b.members[i].model);
    report("rashomon sweep", ts, tp, match);
  }
  return 0;
}
