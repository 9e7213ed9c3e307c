#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "tkgd/core.hpp"
#include "tkgd/data.hpp"
#include "tkgd/models.hpp"
#include "tkgd/teacher.hpp"

namespace tkgd {

enum class Method { kOurs, kBkd, kFitNet, kRkd, kNone };
std::string to_string(Method m);
Method parse_method(std::string_view name);

/// Which terms form the stage-two objective.
///   kLlmWeighted:        L1 + alpha * Huber + beta * MSE(llm, student)
///   kRelationSupervised: L1 + Huber + beta * ||softmax(rel_p) - P(p)||^2
enum class Objective { kLlmWeighted, kRelationSupervised };
std::string to_string(Objective o);
Objective parse_objective(std::string_view name);

struct DistillConfig {
  double alpha = 0.5;
  double beta = 0.1;
  double delta = 1.0;
  double temperature = 7.0;
  std::size_t stage1_epochs = 50;
  std::size_t stage2_epochs = 50;
  Method method = Method::kOurs;
  Objective objective = Objective::kLlmWeighted;
  /// Weight of the FitNet hint / RKD term added to BKD.
  double hint_weight = 1.0;
  /// RKD compares distances and angles within groups of this many entities.
  std::size_t rkd_group = 16;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct ScoreRow {
  std::span<const EntityId> candidates;
  std::span<const double> teacher;  // empty when absent
  std::span<const double> student;
  std::span<const double> llm;  // empty when absent
};

struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3_llm = 0.0;
  double l3_rel = 0.0;
  double total = 0.0;
};

class InvalidStateError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Each loss optionally accumulates d loss / d student scores into `dstudent`.

/// alpha * tau^2 * KL(softmax(f_T/tau) || softmax(f_S/tau)) + (1 - alpha) * CE(g, softmax(f_S)).
double loss_l1(const ScoreRow& row, std::span<const double> label, double alpha, double temperature,
               std::span<double> dstudent = {});
/// Mean Huber(f_llm - f_S; delta) over candidates.
double loss_l2_huber(const ScoreRow& row, double delta, std::span<double> dstudent = {});
/// Mean (f_llm - f_S)^2 over candidates.
double loss_l3_llm(const ScoreRow& row, std::span<double> dstudent = {});
/// Classic softened-softmax distillation mixed with hard-label CE.
double bkd_loss(const ScoreRow& row, std::span<const double> label, double temperature, double mix,
                std::span<double> dstudent = {});

double huber(double d, double delta);
double huber_derivative(double d, double delta);

/// Combines already computed terms under the configured objective.
LossBreakdown total_loss(const LossBreakdown& parts, const DistillConfig& config);

/// 0.5 * ||W x - y||^2 with W teacher_dim x student_dim. Gradients are
/// accumulated when the output pointers are non-null.
double fitnet_loss(std::span<const double> student_hidden, std::span<const double> teacher_hidden,
                   const Table& regressor, Table* dregressor = nullptr, std::span<double> dstudent = {});

/// Distance term (Huber between mean-normalised pairwise distances) plus angle
/// term (Huber between cosines over all ordered triplets). Rows are batch
/// items. Throws std::invalid_argument with fewer than three rows.
double rkd_loss(const Table& student, const Table& teacher, double delta, Table* dstudent = nullptr);

/// softmax(student relation row) vs P(p), squared L2; gradient w.r.t. the row.
double relation_supervision_loss(std::span<const double> student_relation, std::span<const double> target,
                                 std::span<double> drelation = {});

struct TrainOptions {
  std::size_t batch_size = 1024;
  std::size_t negatives = 10;
  double learning_rate = 0.1;
  int workers = 1;
  /// Validation MRR every N epochs (0: never).
  std::size_t valid_every = 1;
  /// Cap on validation facts used per check (0: all).
  std::size_t valid_max_facts = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  int stage = 0;  // 0: teacher pretraining
  LossBreakdown loss;
  std::optional<double> valid_mrr;  // filtered, fraction
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Pretrains `model` with the base cross-entropy objective.
std::vector<EpochRecord> pretrain(ModelParams& model, const Dataset& data, std::size_t epochs,
                                  const TrainOptions& opts, std::uint64_t seed, const EpochCallback& on_epoch = {});

struct DistillResult {
  ModelParams student;
  std::optional<LlmProjectionHead> head;
  std::vector<EpochRecord> log;
};

/// Stage one minimises L1 against the frozen teacher; stage two adds the
/// semantic-teacher terms. The projection head learns from ground-truth
/// labels alongside the student; distillation terms do not update it.
/// Baseline methods run their own objective for stage1 + stage2 epochs.
/// On ProviderError the student of the last completed epoch is written to
/// `abort_checkpoint` (when set) and the error is rethrown.
DistillResult two_stage_distill(const ModelParams& teacher, ModelParams student, SemanticProvider* provider,
                                const Dataset& data, const DistillConfig& config, const TrainOptions& opts,
                                std::uint64_t seed, const EpochCallback& on_epoch = {},
                                const std::optional<std::filesystem::path>& abort_checkpoint = std::nullopt);

/// Seed of the student's initial parameters for a run seed.
std::uint64_t student_init_seed(std::uint64_t seed);

/// Filtered MRR of `model` on (a prefix of) a split.
double filtered_mrr(const ModelParams& model, const FactStore& store, Split split, std::size_t max_facts = 0,
                    int workers = 1);

}  // namespace tkgd
