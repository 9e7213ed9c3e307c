#include "tkgd/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

namespace tkgd {

std::int32_t NameIndex::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::int32_t> NameIndex::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TimeKey make_time_key(std::string_view token, TimeGranularity granularity) {
  TimeKey key;
  if (granularity == TimeGranularity::kRaw) {
    key.known = true;
    key.raw = std::string(token);
    return key;
  }
  std::size_t pos = 0;
  bool negative = false;
  if (pos < token.size() && (token[pos] == '-' || token[pos] == '+')) {
    negative = token[pos] == '-';
    ++pos;
  }
  std::int64_t year = 0;
  const char* first = token.data() + pos;
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, year);
  if (ec != std::errc() || ptr == first) return key;
  key.known = true;
  key.year = negative ? -year : year;
  return key;
}

bool Vocab::valid(const Quadruple& q) const {
  auto in = [](std::int32_t v, std::size_t n) { return v >= 0 && static_cast<std::size_t>(v) < n; };
  return in(q.s, num_entities()) && in(q.o, num_entities()) && in(q.p, num_relations()) &&
         in(q.t, num_times());
}

std::string Vocab::time_label(TimeId t) const {
  const TimeKey& k = time_bins.at(static_cast<std::size_t>(t));
  if (!k.known) return "####";
  if (!k.raw.empty()) return k.raw;
  return std::to_string(k.year);
}

const std::vector<Quadruple>& FactStore::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValid: return valid;
    case Split::kTest: return test;
  }
  return train;
}

void FactStore::rebuild_known() {
  known.clear();
  known.reserve(train.size() + valid.size() + test.size());
  for (const auto* split : {&train, &valid, &test})
    for (const auto& q : *split) known.insert(q);
}

namespace {

struct RawRow {
  std::int32_t s, p, o;
  TimeKey begin;
  std::optional<TimeKey> end;
};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

std::vector<RawRow> read_split(const std::filesystem::path& file, const ParseOptions& opts,
                               Vocab& vocab) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open split file: " + file.string());
  std::vector<RawRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    const std::size_t n = fields.size();
    const bool arity_ok = opts.format == ColumnFormat::kFourColumn   ? n == 4
                          : opts.format == ColumnFormat::kFiveColumn ? n == 5
                                                                     : (n == 4 || n == 5);
    if (!arity_ok)
      throw ParseError(file.string(), lineno, "expected " +
                                                  std::string(opts.format == ColumnFormat::kFourColumn ? "4"
                                                              : opts.format == ColumnFormat::kFiveColumn ? "5"
                                                                                                         : "4 or 5") +
                                                  " tab-separated fields, got " + std::to_string(n));
    for (auto f : fields)
      if (f.empty()) throw ParseError(file.string(), lineno, "empty field");
    RawRow row{};
    row.s = vocab.entities.intern(fields[0]);
    row.p = vocab.relations.intern(fields[1]);
    row.o = vocab.entities.intern(fields[2]);
    row.begin = make_time_key(fields[3], opts.granularity);
    if (n == 5) {
      row.end = make_time_key(fields[4], opts.granularity);
      // An unreadable begin date falls back to the end date.
      if (!row.begin.known && row.end->known) row.begin = *row.end;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset parse_dataset(const std::filesystem::path& dir, const ParseOptions& opts) {
  Dataset data;
  std::vector<RawRow> raw[3];
  const char* names[3] = {"train.txt", "valid.txt", "test.txt"};
  for (int i = 0; i < 3; ++i) raw[i] = read_split(dir / names[i], opts, data.vocab);

  std::vector<TimeKey> keys;
  for (const auto& split : raw)
    for (const auto& r : split) {
      keys.push_back(r.begin);
      if (opts.keep_interval_end && r.end) keys.push_back(*r.end);
    }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  data.vocab.time_bins = keys;
  auto bin = [&](const TimeKey& k) {
    return static_cast<TimeId>(std::lower_bound(keys.begin(), keys.end(), k) - keys.begin());
  };

  std::vector<Quadruple>* outs[3] = {&data.facts.train, &data.facts.valid, &data.facts.test};
  std::optional<std::vector<TimeId>>* ends[3] = {&data.train_end, &data.valid_end, &data.test_end};
  for (int i = 0; i < 3; ++i) {
    outs[i]->reserve(raw[i].size());
    if (opts.keep_interval_end) ends[i]->emplace();
    for (const auto& r : raw[i]) {
      outs[i]->push_back({r.s, r.p, r.o, bin(r.begin)});
      if (opts.keep_interval_end) (*ends[i])->push_back(r.end ? bin(*r.end) : bin(r.begin));
    }
  }
  data.facts.rebuild_known();
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const char* names[3] = {"train.txt", "valid.txt", "test.txt"};
  const std::vector<Quadruple>* splits[3] = {&data.facts.train, &data.facts.valid, &data.facts.test};
  for (int i = 0; i < 3; ++i) {
    std::ofstream out(dir / names[i]);
    if (!out) throw std::runtime_error("cannot write " + (dir / names[i]).string());
    for (const auto& q : *splits[i])
      out << data.vocab.entities.name(q.s) << '\t' << data.vocab.relations.name(q.p) << '\t'
          << data.vocab.entities.name(q.o) << '\t' << data.vocab.time_label(q.t) << '\n';
  }
}

void write_vocab(const std::filesystem::path& dir, const Vocab& vocab) {
  std::filesystem::create_directories(dir);
  auto dump = [](const std::filesystem::path& p, const NameIndex& idx) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    for (std::size_t i = 0; i < idx.size(); ++i) out << i << '\t' << idx.names()[i] << '\n';
  };
  dump(dir / "entities.tsv", vocab.entities);
  dump(dir / "relations.tsv", vocab.relations);
}

std::vector<Quadruple> corruptions_full(const Quadruple& fact, std::size_t num_entities) {
  if (num_entities <= 1) throw EmptyCorruptionError("corruptions: need at least two entities");
  std::vector<Quadruple> out;
  out.reserve(2 * (num_entities - 1));
  for (std::size_t e = 0; e < num_entities; ++e)
    if (static_cast<EntityId>(e) != fact.s) out.push_back(substitute(fact, Side::kSubject, static_cast<EntityId>(e)));
  for (std::size_t e = 0; e < num_entities; ++e)
    if (static_cast<EntityId>(e) != fact.o) out.push_back(substitute(fact, Side::kObject, static_cast<EntityId>(e)));
  return out;
}

namespace {

// Floyd's algorithm: k distinct values from [0, n), returned in draw order.
std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k, Rng& rng) {
  k = std::min(k, n);
  std::vector<std::uint64_t> out;
  out.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  for (std::uint64_t j = n - k; j < n; ++j) {
    std::uint64_t v = rng.below(j + 1);
    if (!seen.insert(v).second) {
      v = j;
      seen.insert(v);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<Quadruple> corruptions_sampled(const Quadruple& fact, std::size_t num_entities,
                                           std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("corruptions: k must be >= 1");
  if (num_entities <= 1) throw EmptyCorruptionError("corruptions: need at least two entities");
  const std::uint64_t per_side = num_entities - 1;
  std::vector<Quadruple> out;
  for (std::uint64_t idx : sample_distinct(2 * per_side, k, rng)) {
    const Side side = idx < per_side ? Side::kSubject : Side::kObject;
    auto e = static_cast<EntityId>(idx % per_side);
    if (e >= entity_on(fact, side)) ++e;
    out.push_back(substitute(fact, side, e));
  }
  return out;
}

std::vector<EntityId> sample_other_entities(std::size_t n, EntityId skip, std::size_t k, Rng& rng) {
  std::vector<EntityId> out;
  if (n <= 1) return out;
  for (std::uint64_t idx : sample_distinct(n - 1, k, rng)) {
    auto e = static_cast<EntityId>(idx);
    if (e >= skip) ++e;
    out.push_back(e);
  }
  return out;
}

Vector TrainingBatch::label(std::size_t i) const {
  Vector g(candidates[i].entities.size(), 0.0);
  g[candidates[i].label_index] = 1.0;
  return g;
}

std::vector<TrainingBatch> make_batches(const FactStore& store, std::size_t num_entities,
                                        std::size_t batch_size, std::size_t negatives_per_positive,
                                        Rng& rng) {
  if (store.train.empty()) throw std::invalid_argument("make_batches: empty training split");
  if (batch_size == 0 || negatives_per_positive == 0)
    throw std::invalid_argument("make_batches: batch_size and negatives must be >= 1");
  std::vector<std::size_t> order(store.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<TrainingBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    TrainingBatch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    b.positives.reserve(end - start);
    b.candidates.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      const Quadruple& q = store.train[order[i]];
      CandidateSet c;
      c.side = rng.below(2) == 0 ? Side::kSubject : Side::kObject;
      const EntityId truth = entity_on(q, c.side);
      c.entities.push_back(truth);
      c.label_index = 0;
      for (EntityId e : sample_other_entities(num_entities, truth, negatives_per_positive, rng))
        c.entities.push_back(e);
      b.positives.push_back(q);
      b.candidates.push_back(std::move(c));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace tkgd
