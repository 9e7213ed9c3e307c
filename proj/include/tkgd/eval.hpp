#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tkgd/data.hpp"
#include "tkgd/models.hpp"

namespace tkgd {

/// Scores every entity substituted on one side of a query fact.
class Scorer {
public:
  virtual ~Scorer() = default;
  virtual std::size_t num_entities() const = 0;
  /// out.size() == num_entities(); must be safe to call concurrently.
  virtual void score_all(const Quadruple& fact, Side side, std::span<double> out) const = 0;
};

class ModelScorer final : public Scorer {
public:
  explicit ModelScorer(const ModelParams& params) : params_(params) {}
  std::size_t num_entities() const override { return params_.entity.rows(); }
  void score_all(const Quadruple& fact, Side side, std::span<double> out) const override;

private:
  const ModelParams& params_;
};

enum class EvalSetting { kRaw, kFiltered };
std::string to_string(EvalSetting s);

struct MetricsReport {
  EvalSetting setting = EvalSetting::kFiltered;
  double mr = 0.0;
  double mrr = 0.0;  // fraction in (0, 1]
  double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;  // fractions
  std::size_t query_count = 0;
};

/// 1 + #strictly better + #ties/2 over the unfiltered candidates; entity ids
/// in `filter` are removed first. Throws std::logic_error if the true
/// entity is filtered.
double rank_query(std::span<const double> scores, EntityId true_entity,
                  const std::unordered_set<EntityId>* filter = nullptr);

MetricsReport summarize(std::span<const double> ranks, EvalSetting setting);

/// Same-timestamp filter index over all known facts.
class FilterIndex {
public:
  explicit FilterIndex(const FactStore& store);
  /// Entities e with substitute(fact, side, e) known at fact.t; includes
  /// the fact's own entity when the fact is known.
  const std::unordered_set<EntityId>& others(const Quadruple& fact, Side side) const;

private:
  static std::uint64_t key(std::int32_t a, std::int32_t b, std::int32_t c);
  std::unordered_map<std::uint64_t, std::unordered_set<EntityId>> by_po_t_;  // (p, o, t) -> subjects
  std::unordered_map<std::uint64_t, std::unordered_set<EntityId>> by_sp_t_;  // (s, p, t) -> objects
};

/// Ranks in query order: for fact i, object query at 2i and subject query at
/// 2i+1. raw and filtered are both returned.
struct QueryRanks {
  std::vector<double> raw, filtered;
};

/// OpenMP over facts; `workers` threads. Per-query ranks are written by
/// index, so results do not depend on `workers`.
QueryRanks rank_split(const Scorer& scorer, const FactStore& store, std::span<const Quadruple> facts,
                      int workers = 1);
/// Single-threaded reference.
QueryRanks rank_split_serial(const Scorer& scorer, const FactStore& store, std::span<const Quadruple> facts);

struct Evaluation {
  MetricsReport raw, filtered;
};

Evaluation evaluate(const Scorer& scorer, const FactStore& store, Split split = Split::kTest, int workers = 1);

struct MetricsMeta {
  std::string model, method, dataset;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;
};

/// {model, method, dataset, setting, mr, mrr, hits1, hits3, hits10,
///  query_count, seed, config_hash, timestamp}; MRR and Hits in percent.
std::string metrics_json(const MetricsReport& r, const MetricsMeta& meta);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r, const MetricsMeta& meta);

}  // namespace tkgd
