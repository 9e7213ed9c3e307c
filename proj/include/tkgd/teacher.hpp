#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "tkgd/core.hpp"
#include "tkgd/data.hpp"
#include "tkgd/models.hpp"

namespace tkgd {

enum class LabelKind { kEntity, kRelation };
std::string to_string(LabelKind kind);

class ProviderError : public std::runtime_error {
public:
  ProviderError(const std::string& what, int attempts)
      : std::runtime_error(what + " (after " + std::to_string(attempts) + " attempts)"), attempts_(attempts) {}
  int attempts() const { return attempts_; }

private:
  int attempts_;
};

class LookupError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Source of frozen text embeddings for entity and relation labels.
/// Lookups must be safe to call concurrently once warmed up.
class SemanticProvider {
public:
  virtual ~SemanticProvider() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Vector embedding(LabelKind kind, std::string_view label) = 0;
  /// Optional bulk warm-up; default does nothing.
  virtual void prefetch(LabelKind, std::span<const std::string>) {}
};

/// Deterministic unit vector for a label: splitmix64 stream seeded with
/// fnv1a64(label) ^ seed, components (u53 * 2 - 1), then L2-normalised.
Vector stub_embedding(std::string_view label, std::size_t dim, std::uint64_t seed = 0);

class StubProvider final : public SemanticProvider {
public:
  explicit StubProvider(std::size_t dim = 384, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::string kind() const override { return "stub"; }
  std::size_t dim() const override { return dim_; }
  Vector embedding(LabelKind, std::string_view label) override { return stub_embedding(label, dim_, seed_); }

private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Embedding file: header `dim<TAB>N`, then `entity|relation<TAB>label<TAB>f1,f2,...`.
class FileProvider final : public SemanticProvider {
public:
  /// When `vocab` is given, every entity and relation label must be present.
  static FileProvider load(const std::filesystem::path& path, const Vocab* vocab = nullptr);

  std::string kind() const override { return "file"; }
  std::size_t dim() const override { return dim_; }
  Vector embedding(LabelKind kind, std::string_view label) override;
  std::size_t size() const { return records_.size(); }

private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, Vector> records_;  // key: kind + '\t' + label
};

struct EmbeddingRecord {
  LabelKind kind;
  std::string label;
  Vector values;
};

void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          std::span<const EmbeddingRecord> records);

/// HTTP JSON embedding service: POST {"texts": [...]} -> {"embeddings": [[...]]}.
/// Results are cached per (kind, label); each distinct label is fetched once.
class RemoteProvider final : public SemanticProvider {
public:
  struct Options {
    std::string endpoint;  // http://host:port/path
    std::string token;     // sent as "Authorization: Bearer <token>" when non-empty
    std::size_t dim = 0;   // 0: 384
    int retries = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::milliseconds timeout{10000};
  };

  /// Endpoint from TKGD_PROVIDER_URL, token from TKGD_PROVIDER_TOKEN.
  static Options options_from_env();

  explicit RemoteProvider(Options opts);
  std::string kind() const override { return "remote"; }
  std::size_t dim() const override;
  Vector embedding(LabelKind kind, std::string_view label) override;
  void prefetch(LabelKind kind, std::span<const std::string> labels) override;
  std::size_t fetch_count() const;

private:
  std::vector<Vector> fetch(const std::vector<std::string>& texts);

  Options opts_;
  std::string host_, path_;
  int port_ = 80;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Vector> cache_;
  std::size_t fetched_labels_ = 0;
};

/// "stub", "stub:<dim>", "file:<path>", "remote" or "remote:<url>".
std::unique_ptr<SemanticProvider> make_provider(const std::string& spec, const Vocab* vocab = nullptr);

/// Lazily filled copy of the provider vectors for one vocabulary.
class SemanticInputs {
public:
  SemanticInputs(SemanticProvider& provider, const Vocab& vocab);

  std::size_t dim() const { return dim_; }
  /// Serial; fetches any missing rows from the provider (may throw ProviderError).
  void ensure_entities(std::span<const EntityId> ids);
  void ensure_relation(RelationId id);
  void ensure_all();
  std::span<const double> entity(EntityId id) const;
  std::span<const double> relation(RelationId id) const;
  std::size_t num_entities() const { return entity_rows_.rows(); }

private:
  SemanticProvider& provider_;
  const Vocab& vocab_;
  std::size_t dim_;
  Table entity_rows_, relation_rows_;
  std::vector<char> entity_ready_, relation_ready_;
};

/// Trainable projection of provider vectors into the student's space:
///   E(e) = softmax(w_p x_e + b_p)     P(p) = softmax(w E(p) + b)
/// and a scalar output scale exp(log_scale) for the score.
struct LlmProjectionHead {
  Table w_p;  // d x dim_llm
  Vector b_p;
  Table w;  // d x d
  Vector b;
  double log_scale = 0.0;

  static LlmProjectionHead init(std::size_t dim, std::size_t dim_llm, ModelKind family, Rng& rng);
  std::size_t dim() const { return b.size(); }
  std::size_t dim_llm() const { return w_p.cols(); }
  bool operator==(const LlmProjectionHead&) const = default;
};

struct HeadGrads {
  Table w_p;
  Vector b_p;
  Table w;
  Vector b;
  double log_scale = 0.0;
  explicit HeadGrads(const LlmProjectionHead& head);
  void add(const HeadGrads& other);
};

/// dz for y = softmax(z) given dy.
Vector softmax_backward(std::span<const double> y, std::span<const double> dy);

Vector project_entity(const LlmProjectionHead& head, std::span<const double> llm_vec);
void project_entity_backward(const LlmProjectionHead& head, std::span<const double> llm_vec,
                             std::span<const double> e_out, std::span<const double> de, HeadGrads& grads);

struct RelationProjection {
  Vector e;  // E(p)
  Vector p;  // P(p)
};
RelationProjection project_relation(const LlmProjectionHead& head, std::span<const double> llm_vec);
void project_relation_backward(const LlmProjectionHead& head, std::span<const double> llm_vec,
                               const RelationProjection& fwd, std::span<const double> dp, HeadGrads& grads);

RelationProjection llm_project_relation(const LlmProjectionHead& head, SemanticInputs& inputs, RelationId p);

/// Time input shared with the student: softmax of the student's time row.
Vector llm_time_input(std::span<const double> student_time_row);

/// Combine projected parts with the student's scoring family.
///   TTransE:    -scale * ||E(s) + P(p) - E(o) + T(t)||
///   TADistMult:  scale * sum_i E(s)_i E(o)_i P(p)_i T(t)_i
double llm_score_parts(ModelKind family, std::span<const double> es, std::span<const double> pp,
                       std::span<const double> eo, std::span<const double> tt, double scale);

double llm_teacher_score(const LlmProjectionHead& head, SemanticInputs& inputs, const Table& student_time,
                         const Quadruple& fact, ModelKind family);

/// Fills llm scores for every item's candidate set. With `grads`, also
/// accumulates the gradient of the mean supervised cross-entropy of those
/// scores against the labels and returns that mean; returns 0 otherwise.
/// Call ensure_* on `inputs` for the batch's entities first (see prepare_batch).
double llm_batch(const LlmProjectionHead& head, const SemanticInputs& inputs, const Table& student_time,
                 ModelKind family, const TrainingBatch& batch, std::vector<Vector>& scores, HeadGrads* grads,
                 int workers = 1);

/// Fetches every provider row the batch needs. Serial.
void prepare_batch(SemanticInputs& inputs, const TrainingBatch& batch);

void adagrad_step(LlmProjectionHead& head, LlmProjectionHead& accum, const HeadGrads& grads, double lr,
                  double eps = 1e-10);

}  // namespace tkgd
