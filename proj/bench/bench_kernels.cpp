// Serial reference vs OpenMP kernels on the synthetic graph.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "tkgd/eval.hpp"
#include "tkgd/models.hpp"

using namespace tkgd;

namespace {

template <class F>
double seconds(int reps, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  const int workers = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
  const std::size_t dim = argc > 2 ? static_cast<std::size_t>(std::atoi(argv[2])) : 64;
  SyntheticSpec spec;
  spec.num_entities = 1000;
  spec.facts_per_slot = 32;
  const Dataset data = generate_synthetic(spec);
  std::printf("entities=%zu train=%zu test=%zu dim=%zu workers=%d\n", data.vocab.num_entities(),
              data.facts.train.size(), data.facts.test.size(), dim, workers);

  for (ModelKind kind : {ModelKind::kTTransE, ModelKind::kTADistMult}) {
    Rng rng(1);
    const ModelParams params = ModelParams::init(kind, data.vocab.num_entities(), data.vocab.num_relations(),
                                                 data.vocab.num_times(), dim, rng);
    const ModelScorer scorer(params);
    const auto facts = std::span<const Quadruple>(data.facts.test);
    QueryRanks a, b;
    const double ts = seconds(1, [&] { a = rank_split_serial(scorer, data.facts, facts); });
    const double tp = seconds(1, [&] { b = rank_split(scorer, data.facts, facts, workers); });
    std::printf("%-10s rank_split       serial %.4fs  parallel %.4fs  speedup %.2fx  equal=%s\n",
                to_string(kind).c_str(), ts, tp, ts / tp, (a.raw == b.raw && a.filtered == b.filtered) ? "yes" : "no");

    Rng brng(2);
    const auto batches = make_batches(data.facts, data.vocab.num_entities(), 1024, 10, brng);
    const TrainingBatch& batch = batches.front();
    const RowLossFn loss = base_training_loss_fn(batch);
    Gradients gs(params), gp(params);
    const double gts = seconds(3, [&] {
      gs.clear();
      model_gradients_serial(params, batch, loss, gs);
    });
    const double gtp = seconds(3, [&] {
      gp.clear();
      model_gradients(params, batch, loss, gp, workers);
    });
    std::printf("%-10s model_gradients  serial %.4fs  parallel %.4fs  speedup %.2fx\n", to_string(kind).c_str(), gts,
                gtp, gts / gtp);
  }
  return 0;
}
