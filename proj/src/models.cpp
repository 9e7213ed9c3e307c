#include "tkgd/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <omp.h>

namespace tkgd {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kTTransE ? "ttranse" : "tadistmult";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "ttranse") return ModelKind::kTTransE;
  if (name == "tadistmult") return ModelKind::kTADistMult;
  throw std::invalid_argument("unknown model kind: " + std::string(name));
}

ModelParams ModelParams::init(ModelKind kind, std::size_t num_entities, std::size_t num_relations,
                              std::size_t num_times, std::size_t dim, Rng& rng) {
  ModelParams m;
  m.kind = kind;
  m.dim = dim;
  m.entity = init_embeddings(rng, num_entities, dim);
  m.relation = init_embeddings(rng, num_relations, dim);
  m.time = init_embeddings(rng, num_times, dim);
  if (m.uses_lstm()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    m.lstm.w = init_uniform(rng, 4 * dim, dim, bound);
    m.lstm.u = init_uniform(rng, 4 * dim, dim, bound);
    m.lstm.b.assign(4 * dim, 0.0);
  }
  return m;
}

std::size_t ModelParams::parameter_count() const {
  return entity.flat().size() + relation.flat().size() + time.flat().size() + lstm.w.flat().size() +
         lstm.u.flat().size() + lstm.b.size();
}

// ---------------------------------------------------------------- LSTM

namespace {

void lstm_cell(const LstmParams& lstm, std::span<const double> x, std::span<const double> h_prev,
               std::span<const double> c_prev, Vector& gates, Vector& c, Vector& h) {
  const std::size_t d = x.size();
  gates.assign(4 * d, 0.0);
  for (std::size_t r = 0; r < 4 * d; ++r) {
    double z = lstm.b[r] + dot(lstm.w.row(r), x);
    if (!h_prev.empty()) z += dot(lstm.u.row(r), h_prev);
    gates[r] = r < 3 * d ? sigmoid(z) : std::tanh(z);
  }
  c.assign(d, 0.0);
  h.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double cp = c_prev.empty() ? 0.0 : c_prev[k];
    c[k] = gates[d + k] * cp + gates[k] * gates[3 * d + k];
    h[k] = gates[2 * d + k] * std::tanh(c[k]);
  }
}

// One cell backward. dh, dc are gradients w.r.t. this cell's h and c.
// Writes dx, and (when h_prev is non-empty) dh_prev / dc_prev.
void lstm_cell_backward(const LstmParams& lstm, std::span<const double> x, std::span<const double> h_prev,
                        std::span<const double> c_prev, const Vector& gates, const Vector& c,
                        std::span<const double> dh, std::span<const double> dc_in, LstmGrads& grads,
                        std::span<double> dx, Vector& dh_prev, Vector& dc_prev) {
  const std::size_t d = x.size();
  Vector dz(4 * d);
  dc_prev.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double i = gates[k], f = gates[d + k], o = gates[2 * d + k], g = gates[3 * d + k];
    const double tc = std::tanh(c[k]);
    const double dc = dh[k] * o * (1.0 - tc * tc) + (dc_in.empty() ? 0.0 : dc_in[k]);
    const double cp = c_prev.empty() ? 0.0 : c_prev[k];
    dz[k] = dc * g * i * (1.0 - i);
    dz[d + k] = dc * cp * f * (1.0 - f);
    dz[2 * d + k] = dh[k] * tc * o * (1.0 - o);
    dz[3 * d + k] = dc * i * (1.0 - g * g);
    dc_prev[k] = dc * f;
  }
  dh_prev.assign(d, 0.0);
  for (std::size_t r = 0; r < 4 * d; ++r) {
    const double z = dz[r];
    if (z == 0.0) continue;
    grads.b[r] += z;
    auto gw = grads.w.row(r);
    auto w = lstm.w.row(r);
    for (std::size_t k = 0; k < d; ++k) {
      gw[k] += z * x[k];
      dx[k] += z * w[k];
    }
    if (!h_prev.empty()) {
      auto gu = grads.u.row(r);
      auto u = lstm.u.row(r);
      for (std::size_t k = 0; k < d; ++k) {
        gu[k] += z * h_prev[k];
        dh_prev[k] += z * u[k];
      }
    }
  }
}

}  // namespace

LstmTrace lstm_forward(const LstmParams& lstm, std::span<const double> x1, std::span<const double> x2) {
  LstmTrace tr;
  tr.dim = x1.size();
  tr.x1.assign(x1.begin(), x1.end());
  tr.x2.assign(x2.begin(), x2.end());
  lstm_cell(lstm, tr.x1, {}, {}, tr.gates1, tr.c1, tr.h1);
  lstm_cell(lstm, tr.x2, tr.h1, tr.c1, tr.gates2, tr.c2, tr.h2);
  return tr;
}

void lstm_backward(const LstmParams& lstm, const LstmTrace& tr, std::span<const double> dh,
                   LstmGrads& grads, std::span<double> dx1, std::span<double> dx2) {
  Vector dh1, dc1, unused_h, unused_c;
  lstm_cell_backward(lstm, tr.x2, tr.h1, tr.c1, tr.gates2, tr.c2, dh, {}, grads, dx2, dh1, dc1);
  lstm_cell_backward(lstm, tr.x1, {}, {}, tr.gates1, tr.c1, dh1, dc1, grads, dx1, unused_h, unused_c);
}

Vector lstm_encode(const ModelParams& params, RelationId p, TimeId t) {
  return lstm_forward(params.lstm, params.relation.row(static_cast<std::size_t>(p)),
                      params.time.row(static_cast<std::size_t>(t)))
      .output();
}

// ---------------------------------------------------------------- scoring

double ttranse_score(const ModelParams& m, const Quadruple& q) {
  auto s = m.entity.row(static_cast<std::size_t>(q.s));
  auto o = m.entity.row(static_cast<std::size_t>(q.o));
  auto p = m.relation.row(static_cast<std::size_t>(q.p));
  auto t = m.time.row(static_cast<std::size_t>(q.t));
  double sq = 0.0;
  for (std::size_t k = 0; k < m.dim; ++k) {
    const double v = s[k] + p[k] - o[k] + t[k];
    sq += v * v;
  }
  return -std::sqrt(sq);
}

double distmult_decode(std::span<const double> s, std::span<const double> o, std::span<const double> pseq) {
  double acc = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) acc += s[k] * o[k] * pseq[k];
  return acc;
}

double tadistmult_score(const ModelParams& m, const Quadruple& q) {
  const Vector pseq = lstm_encode(m, q.p, q.t);
  return distmult_decode(m.entity.row(static_cast<std::size_t>(q.s)), m.entity.row(static_cast<std::size_t>(q.o)),
                         pseq);
}

double score(const ModelParams& params, const Quadruple& fact) {
  return params.kind == ModelKind::kTTransE ? ttranse_score(params, fact) : tadistmult_score(params, fact);
}

namespace {

// Candidate scores given a precomputed p_seq (TADistMult only; ignored otherwise).
void score_with(const ModelParams& m, const Quadruple& q, const CandidateSet& cand,
                std::span<const double> pseq, std::span<double> out) {
  const std::size_t d = m.dim;
  if (m.kind == ModelKind::kTTransE) {
    // object side: v = (s + p + t) - e ; subject side: v = e + (p + t - o)
    Vector base(d);
    auto p = m.relation.row(static_cast<std::size_t>(q.p));
    auto t = m.time.row(static_cast<std::size_t>(q.t));
    const bool obj = cand.side == Side::kObject;
    auto fixed = m.entity.row(static_cast<std::size_t>(obj ? q.s : q.o));
    for (std::size_t k = 0; k < d; ++k) base[k] = p[k] + t[k] + (obj ? fixed[k] : -fixed[k]);
    for (std::size_t j = 0; j < cand.entities.size(); ++j) {
      auto e = m.entity.row(static_cast<std::size_t>(cand.entities[j]));
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = obj ? base[k] - e[k] : base[k] + e[k];
        sq += v * v;
      }
      out[j] = -std::sqrt(sq);
    }
  } else {
    auto fixed = m.entity.row(static_cast<std::size_t>(cand.side == Side::kObject ? q.s : q.o));
    Vector w(d);
    for (std::size_t k = 0; k < d; ++k) w[k] = fixed[k] * pseq[k];
    for (std::size_t j = 0; j < cand.entities.size(); ++j)
      out[j] = dot(w, m.entity.row(static_cast<std::size_t>(cand.entities[j])));
  }
}

void add_row(SparseRows& rows, std::int32_t id, std::span<const double> v, double scale) {
  auto r = rows.row(id);
  for (std::size_t k = 0; k < v.size(); ++k) r[k] += scale * v[k];
}

// Accumulates d(sum_j dscores_j * score_j) into grads. For TADistMult the
// p_seq gradient goes to dpseq instead of through the LSTM.
void backprop_with(const ModelParams& m, const Quadruple& q, const CandidateSet& cand,
                   std::span<const double> pseq, std::span<const double> dscores, Gradients& grads,
                   std::span<double> dpseq) {
  const std::size_t d = m.dim;
  const bool obj = cand.side == Side::kObject;
  const EntityId fixed_id = obj ? q.s : q.o;
  auto fixed = m.entity.row(static_cast<std::size_t>(fixed_id));
  Vector dfixed(d, 0.0);
  if (m.kind == ModelKind::kTTransE) {
    auto p = m.relation.row(static_cast<std::size_t>(q.p));
    auto t = m.time.row(static_cast<std::size_t>(q.t));
    Vector base(d), v(d), dv_sum(d, 0.0), de(d);
    for (std::size_t k = 0; k < d; ++k) base[k] = p[k] + t[k] + (obj ? fixed[k] : -fixed[k]);
    for (std::size_t j = 0; j < cand.entities.size(); ++j) {
      if (dscores[j] == 0.0) continue;
      auto e = m.entity.row(static_cast<std::size_t>(cand.entities[j]));
      for (std::size_t k = 0; k < d; ++k) v[k] = obj ? base[k] - e[k] : base[k] + e[k];
      const double norm = l2_norm(v);
      if (norm == 0.0) continue;
      const double c = -dscores[j] / norm;  // d score / d v = -v / |v|
      for (std::size_t k = 0; k < d; ++k) {
        const double dv = c * v[k];
        dv_sum[k] += dv;
        de[k] = obj ? -dv : dv;
      }
      add_row(grads.entity, cand.entities[j], de, 1.0);
    }
    add_row(grads.relation, q.p, dv_sum, 1.0);
    add_row(grads.time, q.t, dv_sum, 1.0);
    add_row(grads.entity, fixed_id, dv_sum, obj ? 1.0 : -1.0);
  } else {
    Vector w(d), de(d);
    for (std::size_t k = 0; k < d; ++k) w[k] = fixed[k] * pseq[k];
    for (std::size_t j = 0; j < cand.entities.size(); ++j) {
      if (dscores[j] == 0.0) continue;
      auto e = m.entity.row(static_cast<std::size_t>(cand.entities[j]));
      for (std::size_t k = 0; k < d; ++k) {
        de[k] = dscores[j] * w[k];
        dfixed[k] += dscores[j] * e[k] * pseq[k];
        dpseq[k] += dscores[j] * e[k] * fixed[k];
      }
      add_row(grads.entity, cand.entities[j], de, 1.0);
    }
    add_row(grads.entity, fixed_id, dfixed, 1.0);
  }
}

struct Range {
  std::size_t begin, end;
};

Range chunk(std::size_t n, int parts, int index) {
  const auto p = static_cast<std::size_t>(parts);
  const auto i = static_cast<std::size_t>(index);
  return {n * i / p, n * (i + 1) / p};
}

}  // namespace

PseqCache::PseqCache(const ModelParams& params) : times_(params.time.rows()) {
  if (!params.uses_lstm()) return;
  table_ = Table(params.relation.rows() * times_, params.dim);
  for (std::size_t p = 0; p < params.relation.rows(); ++p)
    for (std::size_t t = 0; t < times_; ++t) {
      const Vector h = lstm_encode(params, static_cast<RelationId>(p), static_cast<TimeId>(t));
      std::copy(h.begin(), h.end(), table_.row(p * times_ + t).begin());
    }
}

Vector score_candidates(const ModelParams& params, const Quadruple& fact, const CandidateSet& cand,
                        const PseqCache* cache) {
  Vector out(cand.entities.size());
  if (!params.uses_lstm()) {
    score_with(params, fact, cand, {}, out);
  } else if (cache && !cache->empty()) {
    score_with(params, fact, cand, cache->at(fact.p, fact.t), out);
  } else {
    const Vector pseq = lstm_encode(params, fact.p, fact.t);
    score_with(params, fact, cand, pseq, out);
  }
  return out;
}

// ---------------------------------------------------------------- gradients

std::span<double> SparseRows::row(std::int32_t id) {
  auto [it, inserted] = slot_.try_emplace(id, ids_.size());
  if (inserted) {
    ids_.push_back(id);
    data_.resize(data_.size() + cols_, 0.0);
  }
  return {data_.data() + it->second * cols_, cols_};
}

std::span<const double> SparseRows::find(std::int32_t id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) return {};
  return {data_.data() + it->second * cols_, cols_};
}

void SparseRows::add(const SparseRows& other) {
  for (std::int32_t id : other.ids()) add_row(*this, id, other.find(id), 1.0);
}

void SparseRows::clear() {
  slot_.clear();
  ids_.clear();
  data_.clear();
}

Gradients::Gradients(const ModelParams& params)
    : entity(params.dim), relation(params.dim), time(params.dim) {
  lstm.w = Table(params.lstm.w.rows(), params.lstm.w.cols());
  lstm.u = Table(params.lstm.u.rows(), params.lstm.u.cols());
  lstm.b.assign(params.lstm.b.size(), 0.0);
}

void Gradients::add(const Gradients& other) {
  entity.add(other.entity);
  relation.add(other.relation);
  time.add(other.time);
  auto acc = [](std::span<double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  acc(lstm.w.flat(), other.lstm.w.flat());
  acc(lstm.u.flat(), other.lstm.u.flat());
  acc(lstm.b, other.lstm.b);
}

void Gradients::clear() {
  entity.clear();
  relation.clear();
  time.clear();
  std::fill(lstm.w.flat().begin(), lstm.w.flat().end(), 0.0);
  std::fill(lstm.u.flat().begin(), lstm.u.flat().end(), 0.0);
  std::fill(lstm.b.begin(), lstm.b.end(), 0.0);
}

ModelParams Gradients::densify(const ModelParams& shape) const {
  ModelParams g;
  g.kind = shape.kind;
  g.dim = shape.dim;
  g.entity = Table(shape.entity.rows(), shape.entity.cols());
  g.relation = Table(shape.relation.rows(), shape.relation.cols());
  g.time = Table(shape.time.rows(), shape.time.cols());
  auto fill = [](Table& dst, const SparseRows& src) {
    for (std::int32_t id : src.ids()) {
      auto from = src.find(id);
      std::copy(from.begin(), from.end(), dst.row(static_cast<std::size_t>(id)).begin());
    }
  };
  fill(g.entity, entity);
  fill(g.relation, relation);
  fill(g.time, time);
  g.lstm.w = lstm.w;
  g.lstm.u = lstm.u;
  g.lstm.b = lstm.b;
  return g;
}

double candidate_cross_entropy(std::span<const double> scores, std::size_t label_index,
                               std::span<double> dscores) {
  const Vector p = softmax_t(scores, 1.0);
  for (std::size_t j = 0; j < p.size(); ++j) dscores[j] = p[j] - (j == label_index ? 1.0 : 0.0);
  return -std::log(std::max(p[label_index], kProbFloor));
}

RowLossFn base_training_loss_fn(const TrainingBatch& batch) {
  return [&batch](std::size_t i, std::span<const double> scores, std::span<double> dscores) {
    return candidate_cross_entropy(scores, batch.candidates[i].label_index, dscores);
  };
}

double base_training_loss(const ModelParams& params, const TrainingBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("base_training_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector s = score_candidates(params, batch.positives[i], batch.candidates[i]);
    const Vector p = softmax_t(s, 1.0);
    total -= std::log(std::max(p[batch.candidates[i].label_index], kProbFloor));
  }
  return total / static_cast<double>(batch.size());
}

double model_gradients_serial(const ModelParams& params, const TrainingBatch& batch,
                              const RowLossFn& loss, Gradients& grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("model_gradients: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t d = params.dim;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Quadruple& q = batch.positives[i];
    const CandidateSet& cand = batch.candidates[i];
    LstmTrace trace;
    if (params.uses_lstm())
      trace = lstm_forward(params.lstm, params.relation.row(static_cast<std::size_t>(q.p)),
                           params.time.row(static_cast<std::size_t>(q.t)));
    Vector scores(cand.entities.size()), dscores(cand.entities.size(), 0.0);
    score_with(params, q, cand, trace.h2, scores);
    total += loss(i, scores, dscores);
    for (double& v : dscores) v *= inv_n;
    Vector dpseq(d, 0.0);
    backprop_with(params, q, cand, trace.h2, dscores, grads, dpseq);
    if (params.uses_lstm()) {
      Vector dx1(d, 0.0), dx2(d, 0.0);
      lstm_backward(params.lstm, trace, dpseq, grads.lstm, dx1, dx2);
      add_row(grads.relation, q.p, dx1, 1.0);
      add_row(grads.time, q.t, dx2, 1.0);
    }
  }
  return total * inv_n;
}

double model_gradients(const ModelParams& params, const TrainingBatch& batch, const RowLossFn& loss,
                       Gradients& grads, int workers) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("model_gradients: empty batch");
  const int threads = std::max(1, workers);
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t d = params.dim;
  const bool lstm = params.uses_lstm();

  // Distinct (relation, time) pairs, in first-appearance order.
  std::vector<std::pair<RelationId, TimeId>> pairs;
  std::vector<std::size_t> pair_of(n, 0);
  std::vector<LstmTrace> traces;
  if (lstm) {
    std::map<std::pair<RelationId, TimeId>, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
      const auto key = std::make_pair(batch.positives[i].p, batch.positives[i].t);
      auto [it, inserted] = index.try_emplace(key, pairs.size());
      if (inserted) pairs.push_back(key);
      pair_of[i] = it->second;
    }
    traces.resize(pairs.size());
#pragma omp parallel for num_threads(threads) schedule(static)
    for (std::size_t k = 0; k < pairs.size(); ++k)
      traces[k] = lstm_forward(params.lstm, params.relation.row(static_cast<std::size_t>(pairs[k].first)),
                               params.time.row(static_cast<std::size_t>(pairs[k].second)));
  }

  std::vector<Gradients> local(static_cast<std::size_t>(threads), Gradients(params));
  std::vector<Table> local_dq(static_cast<std::size_t>(threads));
  std::vector<double> local_loss(static_cast<std::size_t>(threads), 0.0);
  static const Vector kNoPseq;

#pragma omp parallel num_threads(threads)
  {
    const int tid = omp_get_thread_num();
    const int team = omp_get_num_threads();
    const auto slot = static_cast<std::size_t>(tid);
    Gradients& g = local[slot];
    Table& dq = local_dq[slot];
    if (lstm) dq = Table(pairs.size(), d);
    for (int part = tid; part < threads; part += team) {
      const Range r = chunk(n, threads, part);
      for (std::size_t i = r.begin; i < r.end; ++i) {
        const Quadruple& q = batch.positives[i];
        const CandidateSet& cand = batch.candidates[i];
        std::span<const double> pseq = lstm ? std::span<const double>(traces[pair_of[i]].h2) : kNoPseq;
        Vector scores(cand.entities.size()), dscores(cand.entities.size(), 0.0);
        score_with(params, q, cand, pseq, scores);
        local_loss[slot] += loss(i, scores, dscores);
        for (double& v : dscores) v *= inv_n;
        Vector dpseq(d, 0.0);
        backprop_with(params, q, cand, pseq, dscores, g, dpseq);
        if (lstm) {
          auto row = dq.row(pair_of[i]);
          for (std::size_t k = 0; k < d; ++k) row[k] += dpseq[k];
        }
      }
    }
  }
  // If the runtime gave fewer threads than requested, thread slots above the
  // team size stay empty; the partition above still covers every chunk.

  double total = 0.0;
  for (int t = 0; t < threads; ++t) {
    total += local_loss[static_cast<std::size_t>(t)];
    grads.add(local[static_cast<std::size_t>(t)]);
  }

  if (lstm) {
    Table dq(pairs.size(), d);
    for (const Table& part : local_dq)
      if (!part.empty())
        for (std::size_t i = 0; i < dq.flat().size(); ++i) dq.flat()[i] += part.flat()[i];
    for (auto& g : local) g.clear();
#pragma omp parallel num_threads(threads)
    {
      const int tid = omp_get_thread_num();
      const int team = omp_get_num_threads();
      Gradients& g = local[static_cast<std::size_t>(tid)];
      for (int part = tid; part < threads; part += team) {
        const Range r = chunk(pairs.size(), threads, part);
        for (std::size_t k = r.begin; k < r.end; ++k) {
          Vector dx1(d, 0.0), dx2(d, 0.0);
          lstm_backward(params.lstm, traces[k], dq.row(k), g.lstm, dx1, dx2);
          add_row(g.relation, pairs[k].first, dx1, 1.0);
          add_row(g.time, pairs[k].second, dx2, 1.0);
        }
      }
    }
    for (const auto& g : local) grads.add(g);
  }
  return total * inv_n;
}

// ---------------------------------------------------------------- Adagrad

void adagrad_update(std::span<double> theta, std::span<double> accum, std::span<const double> grad,
                    double lr, double eps) {
  if (theta.size() != accum.size() || theta.size() != grad.size())
    throw std::invalid_argument("adagrad_update: shape mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    if (g == 0.0) continue;
    accum[i] += g * g;
    theta[i] -= lr * g / (std::sqrt(accum[i]) + eps);
  }
}

OptimizerState OptimizerState::for_params(const ModelParams& p, double lr, double eps) {
  OptimizerState s;
  s.learning_rate = lr;
  s.epsilon = eps;
  s.entity = Table(p.entity.rows(), p.entity.cols());
  s.relation = Table(p.relation.rows(), p.relation.cols());
  s.time = Table(p.time.rows(), p.time.cols());
  s.lstm.w = Table(p.lstm.w.rows(), p.lstm.w.cols());
  s.lstm.u = Table(p.lstm.u.rows(), p.lstm.u.cols());
  s.lstm.b.assign(p.lstm.b.size(), 0.0);
  return s;
}

namespace {

void step_rows(Table& theta, Table& accum, const SparseRows& g, double lr, double eps) {
  if (g.ids().empty()) return;
  if (g.cols() != theta.cols() || accum.rows() != theta.rows() || accum.cols() != theta.cols())
    throw std::invalid_argument("adagrad_step: shape mismatch");
  for (std::int32_t id : g.ids()) {
    if (id < 0 || static_cast<std::size_t>(id) >= theta.rows())
      throw std::invalid_argument("adagrad_step: row out of range");
    const auto r = static_cast<std::size_t>(id);
    adagrad_update(theta.row(r), accum.row(r), g.find(id), lr, eps);
  }
}

}  // namespace

void adagrad_step(OptimizerState& s, ModelParams& p, const Gradients& g) {
  const double lr = s.learning_rate, eps = s.epsilon;
  step_rows(p.entity, s.entity, g.entity, lr, eps);
  step_rows(p.relation, s.relation, g.relation, lr, eps);
  step_rows(p.time, s.time, g.time, lr, eps);
  adagrad_update(p.lstm.w.flat(), s.lstm.w.flat(), g.lstm.w.flat(), lr, eps);
  adagrad_update(p.lstm.u.flat(), s.lstm.u.flat(), g.lstm.u.flat(), lr, eps);
  adagrad_update(p.lstm.b, s.lstm.b, g.lstm.b, lr, eps);
}

}  // namespace tkgd
