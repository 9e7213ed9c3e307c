#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tkgd/core.hpp"

namespace tkgd {

using EntityId = std::int32_t;
using RelationId = std::int32_t;
using TimeId = std::int32_t;

struct Quadruple {
  EntityId s = 0;
  RelationId p = 0;
  EntityId o = 0;
  TimeId t = 0;
  bool operator==(const Quadruple&) const = default;
};

struct QuadrupleHash {
  std::size_t operator()(const Quadruple& q) const noexcept {
    std::uint64_t a = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(q.s)) << 32) |
                      static_cast<std::uint32_t>(q.o);
    std::uint64_t b = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(q.p)) << 32) |
                      static_cast<std::uint32_t>(q.t);
    std::uint64_t st = a ^ (b * 0x9e3779b97f4a7c15ULL);
    return static_cast<std::size_t>(splitmix64(st));
  }
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// Bijective name <-> contiguous id map, ids in order of first appearance.
class NameIndex {
public:
  std::int32_t intern(std::string_view name);
  std::optional<std::int32_t> find(std::string_view name) const;
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

enum class TimeGranularity { kYear, kRaw };

/// Orders timestamp tokens. Year granularity reads the leading signed year
/// ("1995-##-##" -> 1995); tokens with no readable year sort before all years.
struct TimeKey {
  bool known = false;
  std::int64_t year = 0;
  std::string raw;
  auto operator<=>(const TimeKey&) const = default;
};

TimeKey make_time_key(std::string_view token, TimeGranularity granularity);

struct Vocab {
  NameIndex entities;
  NameIndex relations;
  /// Sorted distinct timestamps; index = time-bin id.
  std::vector<TimeKey> time_bins;

  std::size_t num_entities() const { return entities.size(); }
  std::size_t num_relations() const { return relations.size(); }
  std::size_t num_times() const { return time_bins.size(); }
  bool valid(const Quadruple& q) const;
  std::string time_label(TimeId t) const;
};

enum class Split { kTrain, kValid, kTest };

struct FactStore {
  std::vector<Quadruple> train;
  std::vector<Quadruple> valid;
  std::vector<Quadruple> test;
  std::unordered_set<Quadruple, QuadrupleHash> known;

  const std::vector<Quadruple>& split(Split s) const;
  void rebuild_known();
};

struct Dataset {
  Vocab vocab;
  FactStore facts;
  /// Interval end bins for five-column input, aligned with each split, kept
  /// only when requested.
  std::optional<std::vector<TimeId>> train_end, valid_end, test_end;
};

enum class ColumnFormat { kAuto, kFourColumn, kFiveColumn };

struct ParseOptions {
  ColumnFormat format = ColumnFormat::kAuto;
  TimeGranularity granularity = TimeGranularity::kYear;
  bool keep_interval_end = false;
};

/// Reads train.txt / valid.txt / test.txt from `dir` in a single pass.
/// Row counts per split are preserved exactly (duplicates included).
Dataset parse_dataset(const std::filesystem::path& dir, const ParseOptions& opts = {});

/// Writes the three split files with original names and timestamps.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
/// `id<TAB>name` rows for entities.tsv and relations.tsv.
void write_vocab(const std::filesystem::path& dir, const Vocab& vocab);

enum class Side : std::uint8_t { kSubject, kObject };

inline Quadruple substitute(Quadruple q, Side side, EntityId e) {
  (side == Side::kSubject ? q.s : q.o) = e;
  return q;
}
inline EntityId entity_on(const Quadruple& q, Side side) {
  return side == Side::kSubject ? q.s : q.o;
}

class EmptyCorruptionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// All subject corruptions (in entity-id order) then all object corruptions;
/// exactly 2(|E|-1) quadruples. Throws EmptyCorruptionError when |E| == 1.
std::vector<Quadruple> corruptions_full(const Quadruple& fact, std::size_t num_entities);
/// k distinct uniform draws from the full set (k capped at its size).
std::vector<Quadruple> corruptions_sampled(const Quadruple& fact, std::size_t num_entities,
                                           std::size_t k, Rng& rng);

/// k distinct entity ids from [0, n) excluding `skip`, uniform, in draw order.
std::vector<EntityId> sample_other_entities(std::size_t n, EntityId skip, std::size_t k, Rng& rng);

struct CandidateSet {
  Side side = Side::kObject;
  /// candidates[label_index] is the true entity.
  std::vector<EntityId> entities;
  std::size_t label_index = 0;
};

struct TrainingBatch {
  std::vector<Quadruple> positives;
  std::vector<CandidateSet> candidates;

  std::size_t size() const { return positives.size(); }
  /// One-hot label vector (symbol g) for item i.
  Vector label(std::size_t i) const;
};

/// Shuffles the training split with `rng`, chunks it into batches and draws
/// one-sided candidate sets (true entity first, then sampled corruptions).
std::vector<TrainingBatch> make_batches(const FactStore& store, std::size_t num_entities,
                                        std::size_t batch_size, std::size_t negatives_per_positive,
                                        Rng& rng);

struct SyntheticSpec {
  std::size_t num_entities = 200;
  std::size_t num_relations = 8;
  std::size_t num_times = 40;
  std::size_t num_clusters = 10;
  std::size_t facts_per_slot = 16;
  std::uint64_t seed = 7;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
};

/// Planted periodic pattern: entities are split into clusters; relation r at
/// phase t mod period[r] links one subject cluster to one object cluster, with
/// members drawn by weight 1/(rank+1).
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace tkgd
