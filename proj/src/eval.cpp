#include "tkgd/eval.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace tkgd {

std::string to_string(EvalSetting s) { return s == EvalSetting::kRaw ? "raw" : "filtered"; }

void ModelScorer::score_all(const Quadruple& q, Side side, std::span<double> out) const {
  const ModelParams& m = params_;
  const std::size_t d = m.dim;
  const bool obj = side == Side::kObject;
  auto fixed = m.entity.row(static_cast<std::size_t>(obj ? q.s : q.o));
  Vector base(d);
  if (m.kind == ModelKind::kTTransE) {
    auto p = m.relation.row(static_cast<std::size_t>(q.p));
    auto t = m.time.row(static_cast<std::size_t>(q.t));
    for (std::size_t k = 0; k < d; ++k) base[k] = p[k] + t[k] + (obj ? fixed[k] : -fixed[k]);
    for (std::size_t e = 0; e < m.entity.rows(); ++e) {
      auto er = m.entity.row(e);
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = obj ? base[k] - er[k] : base[k] + er[k];
        sq += v * v;
      }
      out[e] = -std::sqrt(sq);
    }
  } else {
    const Vector pseq = lstm_encode(m, q.p, q.t);
    for (std::size_t k = 0; k < d; ++k) base[k] = fixed[k] * pseq[k];
    for (std::size_t e = 0; e < m.entity.rows(); ++e) out[e] = dot(base, m.entity.row(e));
  }
}

double rank_query(std::span<const double> scores, EntityId true_entity, const std::unordered_set<EntityId>* filter) {
  if (filter && filter->contains(true_entity)) throw std::logic_error("rank_query: true entity is filtered");
  const double target = scores[static_cast<std::size_t>(true_entity)];
  std::size_t better = 0, ties = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (static_cast<EntityId>(e) == true_entity) continue;
    if (filter && filter->contains(static_cast<EntityId>(e))) continue;
    if (scores[e] > target)
      ++better;
    else if (scores[e] == target)
      ++ties;
  }
  return 1.0 + static_cast<double>(better) + static_cast<double>(ties) / 2.0;
}

MetricsReport summarize(std::span<const double> ranks, EvalSetting setting) {
  MetricsReport r;
  r.setting = setting;
  r.query_count = ranks.size();
  if (ranks.empty()) return r;
  double sum = 0.0, rsum = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
  for (double k : ranks) {
    sum += k;
    rsum += 1.0 / k;
    h1 += k <= 1.0 ? 1.0 : 0.0;
    h3 += k <= 3.0 ? 1.0 : 0.0;
    h10 += k <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  r.mr = sum / n;
  r.mrr = rsum / n;
  r.hits1 = h1 / n;
  r.hits3 = h3 / n;
  r.hits10 = h10 / n;
  return r;
}

std::uint64_t FilterIndex::key(std::int32_t a, std::int32_t b, std::int32_t c) {
  // 24 bits per entity, 16 per relation, 24 per time bin.
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 40) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(b)) << 24) ^
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(c));
}

FilterIndex::FilterIndex(const FactStore& store) {
  for (const auto& q : store.known) {
    by_po_t_[key(q.o, q.p, q.t)].insert(q.s);
    by_sp_t_[key(q.s, q.p, q.t)].insert(q.o);
  }
  // Entries hold every known entity; the truth is skipped in rank_filtered.
}

const std::unordered_set<EntityId>& FilterIndex::others(const Quadruple& q, Side side) const {
  static const std::unordered_set<EntityId> kEmpty;
  const auto& map = side == Side::kSubject ? by_po_t_ : by_sp_t_;
  auto it = map.find(side == Side::kSubject ? key(q.o, q.p, q.t) : key(q.s, q.p, q.t));
  return it == map.end() ? kEmpty : it->second;
}

namespace {

double rank_filtered(std::span<const double> scores, EntityId truth, const std::unordered_set<EntityId>& known) {
  const double target = scores[static_cast<std::size_t>(truth)];
  std::size_t better = 0, ties = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const auto id = static_cast<EntityId>(e);
    if (id == truth) continue;
    if (scores[e] > target) {
      if (!known.contains(id)) ++better;
    } else if (scores[e] == target) {
      if (!known.contains(id)) ++ties;
    }
  }
  return 1.0 + static_cast<double>(better) + static_cast<double>(ties) / 2.0;
}

void rank_fact(const Scorer& scorer, const FilterIndex& filter, const Quadruple& q, Vector& buf, double* raw,
               double* filt) {
  const Side sides[2] = {Side::kObject, Side::kSubject};
  for (int k = 0; k < 2; ++k) {
    scorer.score_all(q, sides[k], buf);
    const EntityId truth = entity_on(q, sides[k]);
    raw[k] = rank_query(buf, truth);
    filt[k] = rank_filtered(buf, truth, filter.others(q, sides[k]));
  }
}

}  // namespace

QueryRanks rank_split(const Scorer& scorer, const FactStore& store, std::span<const Quadruple> facts, int workers) {
  const FilterIndex filter(store);
  QueryRanks out;
  out.raw.assign(2 * facts.size(), 0.0);
  out.filtered.assign(2 * facts.size(), 0.0);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(facts.size());
#pragma omp parallel num_threads(std::max(1, workers))
  {
    Vector buf(scorer.num_entities());
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i)
      rank_fact(scorer, filter, facts[static_cast<std::size_t>(i)], buf, &out.raw[2 * static_cast<std::size_t>(i)],
                &out.filtered[2 * static_cast<std::size_t>(i)]);
  }
  return out;
}

QueryRanks rank_split_serial(const Scorer& scorer, const FactStore& store, std::span<const Quadruple> facts) {
  const FilterIndex filter(store);
  QueryRanks out;
  out.raw.assign(2 * facts.size(), 0.0);
  out.filtered.assign(2 * facts.size(), 0.0);
  Vector buf(scorer.num_entities());
  for (std::size_t i = 0; i < facts.size(); ++i)
    rank_fact(scorer, filter, facts[i], buf, &out.raw[2 * i], &out.filtered[2 * i]);
  return out;
}

Evaluation evaluate(const Scorer& scorer, const FactStore& store, Split split, int workers) {
  const auto& facts = store.split(split);
  if (facts.empty()) throw std::invalid_argument("evaluate: split is empty");
  const QueryRanks ranks = rank_split(scorer, store, facts, workers);
  return {summarize(ranks.raw, EvalSetting::kRaw), summarize(ranks.filtered, EvalSetting::kFiltered)};
}

namespace {

// Fixed-precision rounding keeps the JSON stable across libc float printers.
double round_to(double v, int digits) {
  const double f = std::pow(10.0, digits);
  return std::round(v * f) / f;
}

}  // namespace

std::string metrics_json(const MetricsReport& r, const MetricsMeta& meta) {
  nlohmann::ordered_json j;
  j["model"] = meta.model;
  j["method"] = meta.method;
  j["dataset"] = meta.dataset;
  j["setting"] = to_string(r.setting);
  j["mr"] = round_to(r.mr, 6);
  j["mrr"] = round_to(100.0 * r.mrr, 6);
  j["hits1"] = round_to(100.0 * r.hits1, 6);
  j["hits3"] = round_to(100.0 * r.hits3, 6);
  j["hits10"] = round_to(100.0 * r.hits10, 6);
  j["query_count"] = r.query_count;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["timestamp"] = meta.timestamp;
  return j.dump(2);
}

std::string metrics_csv_header() {
  return "model,method,dataset,setting,mr,mrr,hits1,hits3,hits10,query_count,seed,config_hash";
}

std::string metrics_csv_row(const MetricsReport& r, const MetricsMeta& meta) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%llu,", r.mr, 100.0 * r.mrr, 100.0 * r.hits1,
                100.0 * r.hits3, 100.0 * r.hits10, r.query_count, static_cast<unsigned long long>(meta.seed));
  return meta.model + "," + meta.method + "," + meta.dataset + "," + to_string(r.setting) + buf + meta.config_hash;
}

}  // namespace tkgd
