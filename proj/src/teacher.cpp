#include "tkgd/teacher.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <omp.h>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace tkgd {

std::string to_string(LabelKind kind) { return kind == LabelKind::kEntity ? "entity" : "relation"; }

namespace {

std::string cache_key(LabelKind kind, std::string_view label) {
  std::string key = to_string(kind);
  key += '\t';
  key += label;
  return key;
}

}  // namespace

// ---------------------------------------------------------------- providers

Vector stub_embedding(std::string_view label, std::size_t dim, std::uint64_t seed) {
  std::uint64_t state = fnv1a64(label) ^ seed;
  Vector v(dim);
  for (double& x : v) x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  const double n = l2_norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

FileProvider FileProvider::load(const std::filesystem::path& path, const Vocab* vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path.string());
  FileProvider fp;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.substr(0, tab) != "dim")
      throw ParseError(path.string(), 1, "header must be 'dim<TAB>N'");
    std::size_t n = 0;
    auto rest = std::string_view(line).substr(tab + 1);
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), n);
    if (ec != std::errc() || ptr != rest.data() + rest.size() || n == 0)
      throw ParseError(path.string(), 1, "bad dim in header");
    fp.dim_ = n;
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError(path.string(), lineno, "expected 3 tab-separated fields");
    const std::string kind = line.substr(0, t1);
    if (kind != "entity" && kind != "relation")
      throw ParseError(path.string(), lineno, "record kind must be 'entity' or 'relation'");
    const std::string label = line.substr(t1 + 1, t2 - t1 - 1);
    if (label.empty()) throw ParseError(path.string(), lineno, "empty label");
    Vector values;
    values.reserve(fp.dim_);
    const char* p = line.data() + t2 + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || !std::isfinite(v)) throw ParseError(path.string(), lineno, "bad float");
      values.push_back(v);
      p = ptr;
      if (p < end) {
        if (*p != ',') throw ParseError(path.string(), lineno, "floats must be comma-separated");
        ++p;
      }
    }
    if (values.size() != fp.dim_)
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(fp.dim_) + " floats, got " + std::to_string(values.size()));
    fp.records_[kind + '\t' + label] = std::move(values);
  }
  if (vocab) {
    for (const auto& name : vocab->entities.names())
      if (!fp.records_.contains(cache_key(LabelKind::kEntity, name)))
        throw LookupError("embedding file has no entity '" + name + "'");
    for (const auto& name : vocab->relations.names())
      if (!fp.records_.contains(cache_key(LabelKind::kRelation, name)))
        throw LookupError("embedding file has no relation '" + name + "'");
  }
  return fp;
}

Vector FileProvider::embedding(LabelKind kind, std::string_view label) {
  auto it = records_.find(cache_key(kind, label));
  if (it == records_.end()) throw LookupError("no embedding for " + cache_key(kind, label));
  return it->second;
}

void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          std::span<const EmbeddingRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "dim\t" << dim << '\n';
  char buf[1100];
  for (const auto& r : records) {
    if (r.values.size() != dim) throw std::invalid_argument("write_embedding_file: record width mismatch");
    out << to_string(r.kind) << '\t' << r.label << '\t';
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), r.values[i], std::chars_format::fixed);
      if (ec != std::errc()) throw std::runtime_error("write_embedding_file: float formatting failed");
      if (i) out << ',';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

RemoteProvider::Options RemoteProvider::options_from_env() {
  Options o;
  if (const char* url = std::getenv("TKGD_PROVIDER_URL")) o.endpoint = url;
  if (const char* tok = std::getenv("TKGD_PROVIDER_TOKEN")) o.token = tok;
  if (const char* dim = std::getenv("TKGD_PROVIDER_DIM")) o.dim = static_cast<std::size_t>(std::stoul(dim));
  return o;
}

RemoteProvider::RemoteProvider(Options opts) : opts_(std::move(opts)) {
  if (opts_.dim == 0) opts_.dim = 384;
  std::string_view url = opts_.endpoint;
  constexpr std::string_view scheme = "http://";
  if (!url.starts_with(scheme)) throw std::invalid_argument("remote provider: endpoint must start with http://");
  url.remove_prefix(scheme.size());
  const auto slash = url.find('/');
  std::string_view hostport = url.substr(0, slash);
  path_ = slash == std::string_view::npos ? "/" : std::string(url.substr(slash));
  const auto colon = hostport.find(':');
  host_ = std::string(hostport.substr(0, colon));
  if (colon != std::string_view::npos) port_ = std::stoi(std::string(hostport.substr(colon + 1)));
  if (host_.empty()) throw std::invalid_argument("remote provider: missing host");
}

std::size_t RemoteProvider::dim() const { return opts_.dim; }

std::size_t RemoteProvider::fetch_count() const {
  std::lock_guard lock(mu_);
  return fetched_labels_;
}

std::vector<Vector> RemoteProvider::fetch(const std::vector<std::string>& texts) {
  nlohmann::json body = {{"texts", texts}};
  const std::string payload = body.dump();
  std::string last_error;
  const int attempts = opts_.retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(opts_.backoff * (1 << (attempt - 1)));
    httplib::Client cli(host_, port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout).count();
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts_.timeout).count() % 1000000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    httplib::Headers headers;
    if (!opts_.token.empty()) headers.emplace("Authorization", "Bearer " + opts_.token);
    auto res = cli.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      auto j = nlohmann::json::parse(res->body);
      auto rows = j.at("embeddings").get<std::vector<Vector>>();
      if (rows.size() != texts.size()) throw std::runtime_error("embedding count mismatch");
      for (const auto& r : rows)
        if (r.size() != opts_.dim || !all_finite(r)) throw std::runtime_error("embedding width or value mismatch");
      return rows;
    } catch (const std::exception& e) {
      last_error = std::string("bad response: ") + e.what();
    }
  }
  throw ProviderError("remote provider " + opts_.endpoint + ": " + last_error, attempts);
}

void RemoteProvider::prefetch(LabelKind kind, std::span<const std::string> labels) {
  std::lock_guard lock(mu_);
  std::vector<std::string> missing;
  for (const auto& l : labels)
    if (!cache_.contains(cache_key(kind, l)) &&
        std::find(missing.begin(), missing.end(), l) == missing.end())
      missing.push_back(l);
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < missing.size(); i += kChunk) {
    std::vector<std::string> chunk(missing.begin() + static_cast<std::ptrdiff_t>(i),
                                   missing.begin() + static_cast<std::ptrdiff_t>(std::min(missing.size(), i + kChunk)));
    auto rows = fetch(chunk);
    for (std::size_t k = 0; k < chunk.size(); ++k) cache_[cache_key(kind, chunk[k])] = std::move(rows[k]);
    fetched_labels_ += chunk.size();
  }
}

Vector RemoteProvider::embedding(LabelKind kind, std::string_view label) {
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(cache_key(kind, label));
    if (it != cache_.end()) return it->second;
  }
  const std::string l(label);
  prefetch(kind, std::span<const std::string>(&l, 1));
  std::lock_guard lock(mu_);
  return cache_.at(cache_key(kind, label));
}

std::unique_ptr<SemanticProvider> make_provider(const std::string& spec, const Vocab* vocab) {
  if (spec == "stub") return std::make_unique<StubProvider>();
  if (spec.starts_with("stub:")) return std::make_unique<StubProvider>(std::stoul(spec.substr(5)));
  if (spec.starts_with("file:"))
    return std::make_unique<FileProvider>(FileProvider::load(spec.substr(5), vocab));
  if (spec == "remote" || spec.starts_with("remote:")) {
    auto opts = RemoteProvider::options_from_env();
    if (spec.size() > 7) opts.endpoint = spec.substr(7);
    if (opts.endpoint.empty()) throw std::invalid_argument("remote provider: set TKGD_PROVIDER_URL or remote:<url>");
    return std::make_unique<RemoteProvider>(opts);
  }
  throw std::invalid_argument("unknown provider spec: " + spec);
}

SemanticInputs::SemanticInputs(SemanticProvider& provider, const Vocab& vocab)
    : provider_(provider),
      vocab_(vocab),
      dim_(provider.dim()),
      entity_rows_(vocab.num_entities(), provider.dim()),
      relation_rows_(vocab.num_relations(), provider.dim()),
      entity_ready_(vocab.num_entities(), 0),
      relation_ready_(vocab.num_relations(), 0) {}

void SemanticInputs::ensure_entities(std::span<const EntityId> ids) {
  std::vector<std::string> missing;
  for (EntityId id : ids)
    if (!entity_ready_.at(static_cast<std::size_t>(id))) missing.push_back(vocab_.entities.name(id));
  if (missing.empty()) return;
  provider_.prefetch(LabelKind::kEntity, missing);
  for (EntityId id : ids) {
    const auto i = static_cast<std::size_t>(id);
    if (entity_ready_[i]) continue;
    Vector v = provider_.embedding(LabelKind::kEntity, vocab_.entities.name(id));
    if (v.size() != dim_) throw ProviderError("provider returned wrong embedding width", 1);
    std::copy(v.begin(), v.end(), entity_rows_.row(i).begin());
    entity_ready_[i] = 1;
  }
}

void SemanticInputs::ensure_relation(RelationId id) {
  const auto i = static_cast<std::size_t>(id);
  if (relation_ready_.at(i)) return;
  Vector v = provider_.embedding(LabelKind::kRelation, vocab_.relations.name(id));
  if (v.size() != dim_) throw ProviderError("provider returned wrong embedding width", 1);
  std::copy(v.begin(), v.end(), relation_rows_.row(i).begin());
  relation_ready_[i] = 1;
}

void SemanticInputs::ensure_all() {
  std::vector<EntityId> ids(vocab_.num_entities());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<EntityId>(i);
  provider_.prefetch(LabelKind::kRelation, vocab_.relations.names());
  ensure_entities(ids);
  for (std::size_t r = 0; r < vocab_.num_relations(); ++r) ensure_relation(static_cast<RelationId>(r));
}

std::span<const double> SemanticInputs::entity(EntityId id) const {
  if (!entity_ready_.at(static_cast<std::size_t>(id))) throw std::logic_error("SemanticInputs: entity not fetched");
  return entity_rows_.row(static_cast<std::size_t>(id));
}

std::span<const double> SemanticInputs::relation(RelationId id) const {
  if (!relation_ready_.at(static_cast<std::size_t>(id))) throw std::logic_error("SemanticInputs: relation not fetched");
  return relation_rows_.row(static_cast<std::size_t>(id));
}

// ---------------------------------------------------------------- projection head

LlmProjectionHead LlmProjectionHead::init(std::size_t dim, std::size_t dim_llm, ModelKind family, Rng& rng) {
  LlmProjectionHead h;
  h.w_p = init_uniform(rng, dim, dim_llm, 1.0 / std::sqrt(static_cast<double>(dim_llm)));
  h.b_p.assign(dim, 0.0);
  h.w = init_uniform(rng, dim, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  h.b.assign(dim, 0.0);
  // Start with scores of order one on near-uniform projections.
  const double d = static_cast<double>(dim);
  h.log_scale = family == ModelKind::kTTransE ? std::log(d) : 3.0 * std::log(d);
  return h;
}

HeadGrads::HeadGrads(const LlmProjectionHead& h)
    : w_p(h.w_p.rows(), h.w_p.cols()), b_p(h.b_p.size(), 0.0), w(h.w.rows(), h.w.cols()), b(h.b.size(), 0.0) {}

void HeadGrads::add(const HeadGrads& o) {
  auto acc = [](std::span<double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  acc(w_p.flat(), o.w_p.flat());
  acc(b_p, o.b_p);
  acc(w.flat(), o.w.flat());
  acc(b, o.b);
  log_scale += o.log_scale;
}

Vector softmax_backward(std::span<const double> y, std::span<const double> dy) {
  const double inner = dot(y, dy);
  Vector dz(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dz[i] = y[i] * (dy[i] - inner);
  return dz;
}

namespace {

Vector affine(const Table& w, std::span<const double> bias, std::span<const double> x) {
  Vector z(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) z[r] = bias[r] + dot(w.row(r), x);
  return z;
}

// Accumulates dW += dz x^T, db += dz; returns W^T dz when want_dx.
Vector affine_backward(const Table& w, std::span<const double> x, std::span<const double> dz, Table& gw,
                       std::span<double> gb, bool want_dx) {
  Vector dx(want_dx ? w.cols() : 0, 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    gb[r] += dz[r];
    auto g = gw.row(r);
    auto wr = w.row(r);
    for (std::size_t k = 0; k < x.size(); ++k) {
      g[k] += dz[r] * x[k];
      if (want_dx) dx[k] += dz[r] * wr[k];
    }
  }
  return dx;
}

}  // namespace

Vector project_entity(const LlmProjectionHead& head, std::span<const double> x) {
  return softmax_t(affine(head.w_p, head.b_p, x), 1.0);
}

void project_entity_backward(const LlmProjectionHead& head, std::span<const double> x, std::span<const double> e_out,
                             std::span<const double> de, HeadGrads& grads) {
  const Vector dz = softmax_backward(e_out, de);
  affine_backward(head.w_p, x, dz, grads.w_p, grads.b_p, false);
}

RelationProjection project_relation(const LlmProjectionHead& head, std::span<const double> x) {
  RelationProjection r;
  r.e = project_entity(head, x);
  r.p = softmax_t(affine(head.w, head.b, r.e), 1.0);
  return r;
}

void project_relation_backward(const LlmProjectionHead& head, std::span<const double> x,
                               const RelationProjection& fwd, std::span<const double> dp, HeadGrads& grads) {
  const Vector dz = softmax_backward(fwd.p, dp);
  const Vector de = affine_backward(head.w, fwd.e, dz, grads.w, grads.b, true);
  project_entity_backward(head, x, fwd.e, de, grads);
}

RelationProjection llm_project_relation(const LlmProjectionHead& head, SemanticInputs& inputs, RelationId p) {
  inputs.ensure_relation(p);
  return project_relation(head, inputs.relation(p));
}

Vector llm_time_input(std::span<const double> row) { return softmax_t(row, 1.0); }

double llm_score_parts(ModelKind family, std::span<const double> es, std::span<const double> pp,
                       std::span<const double> eo, std::span<const double> tt, double scale) {
  double acc = 0.0;
  if (family == ModelKind::kTTransE) {
    for (std::size_t k = 0; k < es.size(); ++k) {
      const double v = es[k] + pp[k] - eo[k] + tt[k];
      acc += v * v;
    }
    return -scale * std::sqrt(acc);
  }
  for (std::size_t k = 0; k < es.size(); ++k) acc += es[k] * eo[k] * pp[k] * tt[k];
  return scale * acc;
}

namespace {

// Gradients of llm_score_parts w.r.t. es, pp, eo (tt is treated as constant).
void llm_score_parts_backward(ModelKind family, std::span<const double> es, std::span<const double> pp,
                              std::span<const double> eo, std::span<const double> tt, double scale, double dscore,
                              std::span<double> des, std::span<double> dpp, std::span<double> deo) {
  const std::size_t d = es.size();
  if (family == ModelKind::kTTransE) {
    Vector v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = es[k] + pp[k] - eo[k] + tt[k];
    const double n = l2_norm(v);
    if (n == 0.0) return;
    for (std::size_t k = 0; k < d; ++k) {
      const double dv = -scale * dscore * v[k] / n;
      des[k] += dv;
      dpp[k] += dv;
      deo[k] -= dv;
    }
    return;
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double c = scale * dscore * tt[k];
    des[k] += c * eo[k] * pp[k];
    deo[k] += c * es[k] * pp[k];
    dpp[k] += c * es[k] * eo[k];
  }
}

}  // namespace

double llm_teacher_score(const LlmProjectionHead& head, SemanticInputs& inputs, const Table& student_time,
                         const Quadruple& fact, ModelKind family) {
  const EntityId ids[2] = {fact.s, fact.o};
  inputs.ensure_entities(ids);
  const Vector es = project_entity(head, inputs.entity(fact.s));
  const Vector eo = project_entity(head, inputs.entity(fact.o));
  const RelationProjection rp = llm_project_relation(head, inputs, fact.p);
  const Vector tt = llm_time_input(student_time.row(static_cast<std::size_t>(fact.t)));
  return llm_score_parts(family, es, rp.p, eo, tt, std::exp(head.log_scale));
}

void prepare_batch(SemanticInputs& inputs, const TrainingBatch& batch) {
  std::vector<EntityId> ids;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ids.push_back(batch.positives[i].s);
    ids.push_back(batch.positives[i].o);
    ids.insert(ids.end(), batch.candidates[i].entities.begin(), batch.candidates[i].entities.end());
    inputs.ensure_relation(batch.positives[i].p);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  inputs.ensure_entities(ids);
}

double llm_batch(const LlmProjectionHead& head, const SemanticInputs& inputs, const Table& student_time,
                 ModelKind family, const TrainingBatch& batch, std::vector<Vector>& scores, HeadGrads* grads,
                 int workers) {
  const std::size_t n = batch.size();
  const std::size_t d = head.dim();
  const int threads = std::max(1, workers);
  const double scale = std::exp(head.log_scale);

  // Distinct entities / relations / times touched by the batch.
  std::map<EntityId, std::size_t> ent_slot;
  std::map<RelationId, std::size_t> rel_slot;
  std::map<TimeId, std::size_t> time_slot;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = batch.positives[i];
    ent_slot.try_emplace(q.s, 0);
    ent_slot.try_emplace(q.o, 0);
    for (EntityId e : batch.candidates[i].entities) ent_slot.try_emplace(e, 0);
    rel_slot.try_emplace(q.p, 0);
    time_slot.try_emplace(q.t, 0);
  }
  std::vector<EntityId> ents;
  for (auto& [id, slot] : ent_slot) {
    slot = ents.size();
    ents.push_back(id);
  }
  std::vector<RelationId> rels;
  for (auto& [id, slot] : rel_slot) {
    slot = rels.size();
    rels.push_back(id);
  }
  std::vector<Vector> tin;
  for (auto& [id, slot] : time_slot) {
    slot = tin.size();
    tin.push_back(llm_time_input(student_time.row(static_cast<std::size_t>(id))));
  }

  std::vector<Vector> e_proj(ents.size());
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::size_t k = 0; k < ents.size(); ++k) e_proj[k] = project_entity(head, inputs.entity(ents[k]));
  std::vector<RelationProjection> r_proj(rels.size());
  for (std::size_t k = 0; k < rels.size(); ++k) r_proj[k] = project_relation(head, inputs.relation(rels[k]));

  scores.assign(n, Vector{});
  const bool train = grads != nullptr;
  std::vector<Table> de_local(static_cast<std::size_t>(threads)), dp_local(static_cast<std::size_t>(threads));
  std::vector<double> dls_local(static_cast<std::size_t>(threads), 0.0),
      loss_local(static_cast<std::size_t>(threads), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);

#pragma omp parallel num_threads(threads)
  {
    const int tid = omp_get_thread_num();
    const int team = omp_get_num_threads();
    const auto slot = static_cast<std::size_t>(tid);
    if (train) {
      de_local[slot] = Table(ents.size(), d);
      dp_local[slot] = Table(rels.size(), d);
    }
    for (int part = tid; part < threads; part += team) {
      const std::size_t lo = n * static_cast<std::size_t>(part) / static_cast<std::size_t>(threads);
      const std::size_t hi = n * static_cast<std::size_t>(part + 1) / static_cast<std::size_t>(threads);
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& q = batch.positives[i];
        const auto& cand = batch.candidates[i];
        const bool obj = cand.side == Side::kObject;
        const std::size_t fixed = ent_slot.at(obj ? q.s : q.o);
        const std::size_t rs = rel_slot.at(q.p);
        const Vector& tt = tin[time_slot.at(q.t)];
        Vector& row = scores[i];
        row.resize(cand.entities.size());
        for (std::size_t j = 0; j < cand.entities.size(); ++j) {
          const std::size_t c = ent_slot.at(cand.entities[j]);
          row[j] = obj ? llm_score_parts(family, e_proj[fixed], r_proj[rs].p, e_proj[c], tt, scale)
                       : llm_score_parts(family, e_proj[c], r_proj[rs].p, e_proj[fixed], tt, scale);
        }
        if (!train) continue;
        Vector ds(row.size());
        loss_local[slot] += candidate_cross_entropy(row, cand.label_index, ds);
        for (std::size_t j = 0; j < row.size(); ++j) {
          const double g = ds[j] * inv_n;
          if (g == 0.0) continue;
          const std::size_t c = ent_slot.at(cand.entities[j]);
          dls_local[slot] += g * row[j];  // d(scale * x)/d log_scale = scale * x
          auto dp = dp_local[slot].row(rs);
          Vector dfixed(d, 0.0), dcand(d, 0.0);
          if (obj)
            llm_score_parts_backward(family, e_proj[fixed], r_proj[rs].p, e_proj[c], tt, scale, g, dfixed, dp, dcand);
          else
            llm_score_parts_backward(family, e_proj[c], r_proj[rs].p, e_proj[fixed], tt, scale, g, dcand, dp, dfixed);
          auto df = de_local[slot].row(fixed);
          auto dc = de_local[slot].row(c);
          for (std::size_t k = 0; k < d; ++k) {
            df[k] += dfixed[k];
            dc[k] += dcand[k];
          }
        }
      }
    }
  }
  if (!train) return 0.0;

  Table de(ents.size(), d), dp(rels.size(), d);
  double loss = 0.0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(threads); ++t) {
    loss += loss_local[t];
    grads->log_scale += dls_local[t];
    if (de_local[t].empty()) continue;
    for (std::size_t i = 0; i < de.flat().size(); ++i) de.flat()[i] += de_local[t].flat()[i];
    for (std::size_t i = 0; i < dp.flat().size(); ++i) dp.flat()[i] += dp_local[t].flat()[i];
  }
  for (std::size_t k = 0; k < ents.size(); ++k)
    project_entity_backward(head, inputs.entity(ents[k]), e_proj[k], de.row(k), *grads);
  for (std::size_t k = 0; k < rels.size(); ++k)
    project_relation_backward(head, inputs.relation(rels[k]), r_proj[k], dp.row(k), *grads);
  return loss * inv_n;
}

void adagrad_step(LlmProjectionHead& head, LlmProjectionHead& accum, const HeadGrads& g, double lr, double eps) {
  adagrad_update(head.w_p.flat(), accum.w_p.flat(), g.w_p.flat(), lr, eps);
  adagrad_update(head.b_p, accum.b_p, g.b_p, lr, eps);
  adagrad_update(head.w.flat(), accum.w.flat(), g.w.flat(), lr, eps);
  adagrad_update(head.b, accum.b, g.b, lr, eps);
  adagrad_update(std::span<double>(&head.log_scale, 1), std::span<double>(&accum.log_scale, 1),
                 std::span<const double>(&g.log_scale, 1), lr, eps);
}

}  // namespace tkgd
