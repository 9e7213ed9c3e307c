#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>

#include "tkgd/core.hpp"
#include "tkgd/data.hpp"

namespace tkgd {

enum class ModelKind : std::uint32_t { kTTransE = 0, kTADistMult = 1 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Single-layer LSTM, input width == hidden width == d.
/// Gate rows are stacked [input; forget; output; candidate], each d rows.
struct LstmParams {
  Table w;   // 4d x d, applied to the input token
  Table u;   // 4d x d, applied to the previous hidden state
  Vector b;  // 4d
  bool operator==(const LstmParams&) const = default;
};

struct ModelParams {
  ModelKind kind = ModelKind::kTTransE;
  std::size_t dim = 0;
  Table entity;
  Table relation;
  Table time;
  LstmParams lstm;  // empty for TTransE

  /// Embedding tables from init_embeddings; LSTM weights uniform in
  /// [-1/sqrt(d), 1/sqrt(d)], biases zero.
  static ModelParams init(ModelKind kind, std::size_t num_entities, std::size_t num_relations,
                          std::size_t num_times, std::size_t dim, Rng& rng);

  bool uses_lstm() const { return kind == ModelKind::kTADistMult; }
  std::size_t parameter_count() const;
  bool operator==(const ModelParams&) const = default;
};

/// Forward activations of the two-token LSTM run, kept for backprop.
struct LstmTrace {
  std::size_t dim = 0;
  Vector x1, x2;
  Vector gates1, gates2;  // post-activation [i f o g], 4d each
  Vector c1, c2, h1, h2;
  const Vector& output() const { return h2; }
};

LstmTrace lstm_forward(const LstmParams& lstm, std::span<const double> x1, std::span<const double> x2);

/// p_seq = final hidden state of the LSTM over [relation(p), time(t)].
Vector lstm_encode(const ModelParams& params, RelationId p, TimeId t);

/// -||s + p - o + t||_2
double ttranse_score(const ModelParams& params, const Quadruple& fact);
/// sum_i s_i o_i p_seq_i
double distmult_decode(std::span<const double> s, std::span<const double> o, std::span<const double> pseq);
double tadistmult_score(const ModelParams& params, const Quadruple& fact);
double score(const ModelParams& params, const Quadruple& fact);

/// Row-sparse gradient accumulator for an embedding table.
class SparseRows {
public:
  SparseRows() = default;
  explicit SparseRows(std::size_t cols) : cols_(cols) {}

  std::size_t cols() const { return cols_; }
  /// Zero-initialised on first access.
  std::span<double> row(std::int32_t id);
  std::span<const double> find(std::int32_t id) const;
  const std::vector<std::int32_t>& ids() const { return ids_; }
  void add(const SparseRows& other);
  void clear();

private:
  std::size_t cols_ = 0;
  std::unordered_map<std::int32_t, std::size_t> slot_;
  std::vector<std::int32_t> ids_;
  std::vector<double> data_;
};

struct LstmGrads {
  Table w, u;
  Vector b;
};

struct Gradients {
  SparseRows entity, relation, time;
  LstmGrads lstm;

  explicit Gradients(const ModelParams& params);
  void add(const Gradients& other);
  void clear();
  /// Dense copy laid out like ModelParams (for checks and tests).
  ModelParams densify(const ModelParams& shape) const;
};

/// Back-propagates dh (gradient w.r.t. the final hidden state) through the
/// LSTM; accumulates weight grads and returns input grads via dx1/dx2.
void lstm_backward(const LstmParams& lstm, const LstmTrace& trace, std::span<const double> dh,
                   LstmGrads& grads, std::span<double> dx1, std::span<double> dx2);

/// p_seq for every (relation, time) pair of a frozen TADistMult model.
class PseqCache {
public:
  PseqCache() = default;
  explicit PseqCache(const ModelParams& params);
  bool empty() const { return table_.empty(); }
  std::span<const double> at(RelationId p, TimeId t) const {
    return table_.row(static_cast<std::size_t>(p) * times_ + static_cast<std::size_t>(t));
  }

private:
  std::size_t times_ = 0;
  Table table_;
};

/// Scores of every candidate entity substituted on `cand.side` of `fact`.
/// With a cache (TADistMult only), p_seq is read from it instead of recomputed.
Vector score_candidates(const ModelParams& params, const Quadruple& fact, const CandidateSet& cand,
                        const PseqCache* cache = nullptr);

/// Per-item loss: given candidate scores, returns the item loss and writes
/// dloss/dscore into `dscores`. Must be safe to call concurrently.
using RowLossFn =
    std::function<double(std::size_t item, std::span<const double> scores, std::span<double> dscores)>;

/// Softmax cross-entropy (temperature 1) against the one-hot label.
double candidate_cross_entropy(std::span<const double> scores, std::size_t label_index,
                               std::span<double> dscores);

/// Mean over the batch of `loss`; accumulates the gradient of that mean into
/// `grads`. Items are split over `workers` OpenMP threads in contiguous
/// chunks and merged in thread order, so results depend only on `workers`.
/// TADistMult groups items by (relation, time) so each LSTM pass runs once.
double model_gradients(const ModelParams& params, const TrainingBatch& batch, const RowLossFn& loss,
                       Gradients& grads, int workers = 1);

/// Straightforward per-item reference for model_gradients (no grouping, no
/// threads). Kept for testing.
double model_gradients_serial(const ModelParams& params, const TrainingBatch& batch,
                              const RowLossFn& loss, Gradients& grads);

/// Cross-entropy between one-hot labels and softmax(scores), batch mean.
double base_training_loss(const ModelParams& params, const TrainingBatch& batch);
RowLossFn base_training_loss_fn(const TrainingBatch& batch);

/// Elementwise Adagrad: accum += g^2; theta -= lr * g / (sqrt(accum) + eps).
void adagrad_update(std::span<double> theta, std::span<double> accum, std::span<const double> grad,
                    double lr, double eps);

struct OptimizerState {
  double learning_rate = 0.1;
  double epsilon = 1e-10;
  Table entity, relation, time;
  LstmGrads lstm;

  static OptimizerState for_params(const ModelParams& params, double lr, double eps = 1e-10);
};

/// Throws std::invalid_argument if grads or state do not match params.
void adagrad_step(OptimizerState& state, ModelParams& params, const Gradients& grads);

/// Versioned little-endian binary container; round-trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace tkgd
