#include <algorithm>
#include <cmath>
#include <set>

#include "tkgd/distill.hpp"
#include "tkgd/eval.hpp"

namespace tkgd {

double filtered_mrr(const ModelParams& model, const FactStore& store, Split split, std::size_t max_facts,
                    int workers) {
  std::span<const Quadruple> facts = store.split(split);
  if (facts.empty()) return 0.0;
  if (max_facts > 0 && facts.size() > max_facts) facts = facts.first(max_facts);
  const ModelScorer scorer(model);
  const QueryRanks ranks = rank_split(scorer, store, facts, workers);
  return summarize(ranks.filtered, EvalSetting::kFiltered).mrr;
}

std::uint64_t student_init_seed(std::uint64_t seed) {
  std::uint64_t state = seed ^ 0x57d3e7a11ce00002ULL;
  return splitmix64(state);
}

namespace {

bool due(std::size_t epoch, std::size_t every, std::size_t last) {
  return every > 0 && (epoch % every == 0 || epoch == last);
}

// Entities of the batch's positives, de-duplicated, in first-appearance order.
std::vector<EntityId> batch_entities(const TrainingBatch& batch) {
  std::vector<EntityId> out;
  std::set<EntityId> seen;
  for (const auto& q : batch.positives)
    for (EntityId e : {q.s, q.o})
      if (seen.insert(e).second) out.push_back(e);
  return out;
}

Table gather_rows(const Table& src, std::span<const EntityId> ids) {
  Table t(ids.size(), src.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto from = src.row(static_cast<std::size_t>(ids[i]));
    std::copy(from.begin(), from.end(), t.row(i).begin());
  }
  return t;
}

// Shifts the semantic-teacher row so its mean matches the student row; the
// student mean is treated as a constant.
Vector align_row_mean(std::span<const double> llm, std::span<const double> student) {
  double diff = 0.0;
  for (std::size_t j = 0; j < llm.size(); ++j) diff += student[j] - llm[j];
  diff /= static_cast<double>(llm.size());
  Vector out(llm.begin(), llm.end());
  for (double& v : out) v += diff;
  return out;
}

LlmProjectionHead zeros_like(const LlmProjectionHead& h) {
  LlmProjectionHead z;
  z.w_p = Table(h.w_p.rows(), h.w_p.cols());
  z.b_p.assign(h.b_p.size(), 0.0);
  z.w = Table(h.w.rows(), h.w.cols());
  z.b.assign(h.b.size(), 0.0);
  z.log_scale = 0.0;
  return z;
}

}  // namespace

std::vector<EpochRecord> pretrain(ModelParams& model, const Dataset& data, std::size_t epochs,
                                  const TrainOptions& opts, std::uint64_t seed, const EpochCallback& on_epoch) {
  Rng rng(seed);
  OptimizerState opt = OptimizerState::for_params(model, opts.learning_rate);
  std::vector<EpochRecord> log;
  Gradients grads(model);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto batches =
        make_batches(data.facts, data.vocab.num_entities(), opts.batch_size, opts.negatives, rng);
    double sum = 0.0;
    for (const auto& batch : batches) {
      grads.clear();
      sum += model_gradients(model, batch, base_training_loss_fn(batch), grads, opts.workers);
      adagrad_step(opt, model, grads);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = 0;
    rec.loss.l1 = sum / static_cast<double>(batches.size());
    rec.loss.total = rec.loss.l1;
    if (due(epoch, opts.valid_every, epochs) && !data.facts.valid.empty())
      rec.valid_mrr = filtered_mrr(model, data.facts, Split::kValid, opts.valid_max_facts, opts.workers);
    if (on_epoch) on_epoch(rec);
    log.push_back(rec);
  }
  return log;
}

DistillResult two_stage_distill(const ModelParams& teacher, ModelParams student, SemanticProvider* provider,
                                const Dataset& data, const DistillConfig& config, const TrainOptions& opts,
                                std::uint64_t seed, const EpochCallback& on_epoch,
                                const std::optional<std::filesystem::path>& abort_checkpoint) {
  config.validate();
  const Method method = config.method;
  const bool uses_teacher = method != Method::kNone;
  const bool uses_llm = method == Method::kOurs;
  if (uses_teacher) {
    if (teacher.kind != student.kind) throw std::invalid_argument("teacher and student model kinds differ");
    if (teacher.entity.rows() != student.entity.rows()) throw std::invalid_argument("teacher/student vocab mismatch");
  }
  if (uses_llm && !provider) throw std::invalid_argument("method 'ours' needs a semantic provider");

  Rng rng(seed);
  // Auxiliary parameters draw from their own stream so the batch sequence is
  // the same for every method.
  std::uint64_t aux_state = seed ^ 0x5eed'a11c'e000'0001ULL;
  Rng aux(splitmix64(aux_state));

  OptimizerState opt = OptimizerState::for_params(student, opts.learning_rate);
  Gradients grads(student);
  const PseqCache teacher_pseq = uses_teacher ? PseqCache(teacher) : PseqCache();

  std::optional<SemanticInputs> inputs;
  DistillResult result{student, std::nullopt, {}};
  std::optional<LlmProjectionHead> head_accum;
  if (uses_llm) {
    inputs.emplace(*provider, data.vocab);
    result.head = LlmProjectionHead::init(student.dim, provider->dim(), student.kind, aux);
    head_accum = zeros_like(*result.head);
  }

  Table regressor, regressor_accum;
  if (method == Method::kFitNet) {
    regressor = init_uniform(aux, teacher.dim, student.dim, 1.0 / std::sqrt(static_cast<double>(student.dim)));
    regressor_accum = Table(teacher.dim, student.dim);
  }

  const std::size_t total_epochs = config.stage1_epochs + config.stage2_epochs;
  ModelParams& model = result.student;
  for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
    const int stage = epoch <= config.stage1_epochs ? 1 : 2;
    const bool llm_terms = uses_llm && stage == 2;
    const ModelParams last_completed = abort_checkpoint ? model : ModelParams{};
    const auto batches =
        make_batches(data.facts, data.vocab.num_entities(), opts.batch_size, opts.negatives, rng);
    LossBreakdown sums;
    try {
      for (const auto& batch : batches) {
        const std::size_t n = batch.size();
        std::vector<Vector> teacher_rows(uses_teacher ? n : 0), llm_rows;
        if (uses_teacher) {
#pragma omp parallel for num_threads(std::max(1, opts.workers)) schedule(static)
          for (std::size_t i = 0; i < n; ++i)
            teacher_rows[i] = score_candidates(teacher, batch.positives[i], batch.candidates[i], &teacher_pseq);
        }
        if (uses_llm) {
          prepare_batch(*inputs, batch);
          HeadGrads hg(*result.head);
          llm_batch(*result.head, *inputs, model.time, model.kind, batch, llm_rows, &hg, opts.workers);
          adagrad_step(*result.head, *head_accum, hg, opts.learning_rate);
        }

        std::vector<LossBreakdown> parts(n);
        RowLossFn row_loss = [&](std::size_t i, std::span<const double> s, std::span<double> ds) {
          if (method == Method::kNone) {
            parts[i].l1 = candidate_cross_entropy(s, batch.candidates[i].label_index, ds);
            return parts[i].l1;
          }
          const Vector label = batch.label(i);
          ScoreRow row{batch.candidates[i].entities, teacher_rows[i], s, {}};
          Vector aligned;
          if (llm_terms) {
            aligned = align_row_mean(llm_rows[i], s);
            row.llm = aligned;
          }
          LossBreakdown& p = parts[i];
          p.l1 = loss_l1(row, label, config.alpha, config.temperature, ds);
          if (!llm_terms) return p.l1;
          // Each term accumulates into ds with its objective weight.
          const bool weighted = config.objective == Objective::kLlmWeighted;
          const double w2 = weighted ? config.alpha : 1.0;
          Vector tmp(ds.size(), 0.0);
          p.l2 = loss_l2_huber(row, config.delta, tmp);
          for (std::size_t j = 0; j < ds.size(); ++j) ds[j] += w2 * tmp[j];
          if (weighted) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            p.l3_llm = loss_l3_llm(row, tmp);
            for (std::size_t j = 0; j < ds.size(); ++j) ds[j] += config.beta * tmp[j];
          }
          return p.l1 + w2 * p.l2 + (weighted ? config.beta * p.l3_llm : 0.0);
        };

        grads.clear();
        model_gradients(model, batch, row_loss, grads, opts.workers);
        LossBreakdown batch_parts;
        for (const auto& p : parts) {
          batch_parts.l1 += p.l1;
          batch_parts.l2 += p.l2;
          batch_parts.l3_llm += p.l3_llm;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        batch_parts.l1 *= inv_n;
        batch_parts.l2 *= inv_n;
        batch_parts.l3_llm *= inv_n;

        // Relation pathway supervision (relation-supervised objective only).
        if (llm_terms && config.objective == Objective::kRelationSupervised) {
          for (std::size_t i = 0; i < n; ++i) {
            const RelationId p = batch.positives[i].p;
            const RelationProjection rp = project_relation(*result.head, inputs->relation(p));
            Vector dr(model.dim, 0.0);
            batch_parts.l3_rel += inv_n * relation_supervision_loss(model.relation.row(static_cast<std::size_t>(p)),
                                                                    rp.p, dr);
            auto g = grads.relation.row(p);
            for (std::size_t k = 0; k < model.dim; ++k) g[k] += config.beta * inv_n * dr[k];
          }
        }

        // Embedding-level baselines on the batch's entities.
        double hint = 0.0;
        if (method == Method::kFitNet) {
          const auto ids = batch_entities(batch);
          Table dreg(regressor.rows(), regressor.cols());
          const double scale = config.hint_weight / static_cast<double>(ids.size());
          for (EntityId e : ids) {
            Vector dx(model.dim, 0.0);
            hint += fitnet_loss(model.entity.row(static_cast<std::size_t>(e)),
                                teacher.entity.row(static_cast<std::size_t>(e)), regressor, &dreg, dx);
            auto g = grads.entity.row(e);
            for (std::size_t k = 0; k < model.dim; ++k) g[k] += scale * dx[k];
          }
          for (double& v : dreg.flat()) v *= scale;
          hint *= 1.0 / static_cast<double>(ids.size());
          adagrad_update(regressor.flat(), regressor_accum.flat(), dreg.flat(), opts.learning_rate, 1e-10);
        } else if (method == Method::kRkd) {
          const auto ids = batch_entities(batch);
          std::vector<std::span<const EntityId>> groups;
          for (std::size_t start = 0; start < ids.size(); start += config.rkd_group) {
            const std::size_t end = std::min(ids.size(), start + config.rkd_group);
            if (end - start >= 3) groups.emplace_back(ids.data() + start, end - start);
          }
          const double scale = groups.empty() ? 0.0 : config.hint_weight / static_cast<double>(groups.size());
          for (auto group : groups) {
            const Table xs = gather_rows(model.entity, group), xt = gather_rows(teacher.entity, group);
            Table dxs(xs.rows(), xs.cols());
            hint += rkd_loss(xs, xt, config.delta, &dxs) / static_cast<double>(groups.size());
            for (std::size_t r = 0; r < group.size(); ++r) {
              auto g = grads.entity.row(group[r]);
              for (std::size_t k = 0; k < model.dim; ++k) g[k] += scale * dxs.at(r, k);
            }
          }
        }

        adagrad_step(opt, model, grads);
        LossBreakdown combined = batch_parts;
        if (llm_terms)
          combined = total_loss(batch_parts, config);
        else
          combined.total = batch_parts.l1 + config.hint_weight * hint;
        sums.l1 += combined.l1;
        sums.l2 += combined.l2;
        sums.l3_llm += combined.l3_llm;
        sums.l3_rel += combined.l3_rel;
        sums.total += combined.total;
      }
    } catch (const ProviderError&) {
      if (abort_checkpoint) save_checkpoint(*abort_checkpoint, last_completed);
      throw;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = stage;
    const double inv_b = 1.0 / static_cast<double>(batches.size());
    rec.loss = {sums.l1 * inv_b, sums.l2 * inv_b, sums.l3_llm * inv_b, sums.l3_rel * inv_b, sums.total * inv_b};
    if (due(epoch, opts.valid_every, total_epochs) && !data.facts.valid.empty())
      rec.valid_mrr = filtered_mrr(model, data.facts, Split::kValid, opts.valid_max_facts, opts.workers);
    if (on_epoch) on_epoch(rec);
    result.log.push_back(rec);
  }
  return result;
}

}  // namespace tkgd
