#include <doctest.h>

#include <cmath>

#include "json.hpp"
#include "oracles.hpp"
#include "tkgd/eval.hpp"

using namespace tkgd;

TEST_CASE("rank examples") {
  CHECK(rank_query(Vector{0.1, 0.9, 0.3}, 1) == 1.0);
  CHECK(rank_query(Vector{2, 2, 2, 2, 2}, 3) == 3.0);
  CHECK(rank_query(Vector{10, 9, 8, 7, 6, 5, 4, 3, 2, 1}, 2) == 3.0);
  CHECK(rank_query(Vector{1, 5, 5, 0}, 1) == 1.5);
  const std::unordered_set<EntityId> drop = {0, 2};
  CHECK(rank_query(Vector{9, 1, 8, 0}, 1, &drop) == 1.0);
  const std::unordered_set<EntityId> bad = {1};
  CHECK_THROWS_AS(rank_query(Vector{9, 1, 8}, 1, &bad), std::logic_error);
}

TEST_CASE("summaries of rank lists") {
  const Vector ranks = {1, 2, 4};
  const auto m = summarize(ranks, EvalSetting::kRaw);
  CHECK(std::abs(m.mr - 2.3333333) < 1e-6);
  CHECK(std::abs(m.mrr - 0.5833333) < 1e-6);
  CHECK(std::abs(m.hits1 - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(m.hits3 - 2.0 / 3.0) < 1e-12);
  CHECK(m.hits10 == 1.0);
  CHECK(m.query_count == 3);
  CHECK(m.setting == EvalSetting::kRaw);

  const auto one = summarize(Vector{1.0}, EvalSetting::kFiltered);
  CHECK(one.mr == 1.0);
  CHECK(one.mrr == 1.0);
  CHECK(one.hits1 == 1.0);
  CHECK(one.hits10 == 1.0);
}

TEST_CASE("rank is invariant under increasing transforms") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Vector s(9);
    for (double& v : s) v = std::round(rng.uniform(-3, 3));
    const auto truth = static_cast<EntityId>(rng.below(9));
    Vector t = s;
    for (double& v : t) v = std::exp(0.5 * v) + 3.0 * v;
    CHECK(rank_query(s, truth) == rank_query(t, truth));
  }
}

TEST_CASE("filter index finds same-time facts only") {
  FactStore store;
  store.train = {{0, 0, 1, 0}, {0, 0, 2, 0}, {0, 0, 3, 1}};
  store.test = {{0, 0, 4, 0}};
  store.rebuild_known();
  const FilterIndex idx(store);
  const auto& objs = idx.others(store.test[0], Side::kObject);
  CHECK(objs == std::unordered_set<EntityId>{1, 2, 4});
  CHECK(idx.others(store.test[0], Side::kSubject) == std::unordered_set<EntityId>{0});
  CHECK(idx.others({0, 0, 3, 1}, Side::kObject) == std::unordered_set<EntityId>{3});
  CHECK(idx.others({0, 0, 3, 2}, Side::kObject).empty());
}

TEST_CASE("evaluation matches the brute-force ranker") {
  Rng rng(2024);
  for (int inst = 0; inst < 100; ++inst) CHECK_MESSAGE(oracle::ranking_instance_agrees(inst, rng), inst);
}

TEST_CASE("filtered ranks never exceed raw ranks") {
  SyntheticSpec spec;
  spec.num_entities = 60;
  spec.num_times = 8;
  spec.num_clusters = 6;
  spec.facts_per_slot = 10;
  const auto data = generate_synthetic(spec);
  Rng rng(1);
  const auto params = ModelParams::init(ModelKind::kTADistMult, 60, 8, 8, 6, rng);
  const ModelScorer scorer(params);
  const auto r = rank_split(scorer, data.facts, data.facts.test);
  REQUIRE(r.raw.size() == 2 * data.facts.test.size());
  bool some_strict = false;
  for (std::size_t i = 0; i < r.raw.size(); ++i) {
    CHECK(r.filtered[i] <= r.raw[i]);
    some_strict = some_strict || r.filtered[i] < r.raw[i];
  }
  CHECK(some_strict);
  const auto ev = evaluate(scorer, data.facts);
  CHECK(ev.filtered.mr <= ev.raw.mr);
  CHECK(ev.filtered.hits1 <= ev.filtered.hits3);
  CHECK(ev.filtered.hits3 <= ev.filtered.hits10);
  CHECK(ev.filtered.mrr <= 1.0);
  CHECK(ev.filtered.query_count == r.raw.size());
}

TEST_CASE("evaluation does not depend on workers") {
  SyntheticSpec spec;
  spec.num_entities = 80;
  const auto data = generate_synthetic(spec);
  Rng rng(1);
  const auto params = ModelParams::init(ModelKind::kTTransE, 80, spec.num_relations, spec.num_times, 5, rng);
  const ModelScorer scorer(params);
  const auto serial = rank_split_serial(scorer, data.facts, data.facts.test);
  for (int w : {1, 2, 3, 8}) {
    const auto par = rank_split(scorer, data.facts, data.facts.test, w);
    CHECK(par.raw == serial.raw);
    CHECK(par.filtered == serial.filtered);
  }
  CHECK(evaluate(scorer, data.facts, Split::kValid, 4).filtered.mrr ==
        evaluate(scorer, data.facts, Split::kValid, 1).filtered.mrr);
}

TEST_CASE("metrics json layout") {
  const auto m = summarize(Vector{1, 2, 4}, EvalSetting::kFiltered);
  MetricsMeta meta{"tadistmult", "ours", "synthetic", 42, "00ff", "2026-01-01T00:00:00Z"};
  const auto j = nlohmann::json::parse(metrics_json(m, meta));
  CHECK(j.at("model") == "tadistmult");
  CHECK(j.at("method") == "ours");
  CHECK(j.at("dataset") == "synthetic");
  CHECK(j.at("setting") == "filtered");
  CHECK(std::abs(j.at("mr").get<double>() - 2.333333) < 1e-9);
  CHECK(std::abs(j.at("mrr").get<double>() - 58.333333) < 1e-9);
  CHECK(std::abs(j.at("hits1").get<double>() - 33.333333) < 1e-9);
  CHECK(std::abs(j.at("hits3").get<double>() - 66.666667) < 1e-9);
  CHECK(j.at("hits10").get<double>() == 100.0);
  CHECK(j.at("query_count") == 3);
  CHECK(j.at("seed") == 42);
  CHECK(j.at("config_hash") == "00ff");
  CHECK(j.at("timestamp") == "2026-01-01T00:00:00Z");
  CHECK(j.size() == 13);

  CHECK(metrics_csv_header().starts_with("model,method,dataset,setting,mr,mrr"));
  const std::string row = metrics_csv_row(m, meta);
  CHECK(row.starts_with("tadistmult,ours,synthetic,filtered,2.333333,58.333333,"));
  CHECK(row.ends_with(",3,42,00ff"));
}
