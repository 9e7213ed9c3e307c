#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace tkgd {

using Vector = std::vector<double>;

/// Dense row-major table of fixed-width rows (embedding tables, weight matrices).
class Table {
public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool operator==(const Table&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Seeded random stream. The engine is std::mt19937_64; the real and integer
/// draws below are computed from raw engine output so that sequences are
/// identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream; does not disturb this stream's position
  /// beyond one draw.
  Rng fork();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::span<const char> bytes);

inline constexpr double kProbFloor = 1e-12;

/// Temperature softmax, max-subtracted. Throws std::invalid_argument on empty
/// or non-finite input or non-positive temperature.
Vector softmax_t(std::span<const double> logits, double temperature = 1.0);

/// -sum target_i * log(max(predicted_i, 1e-12)).
double cross_entropy(std::span<const double> target, std::span<const double> predicted);

/// KL(p || q) with the same clamping as cross_entropy.
double kl_divergence(std::span<const double> p, std::span<const double> q);

double entropy(std::span<const double> p);

/// count x dim table, entries uniform in [-6/sqrt(dim), 6/sqrt(dim)].
Table init_embeddings(Rng& rng, std::size_t count, std::size_t dim);
/// Same, with an explicit half-width.
Table init_uniform(Rng& rng, std::size_t count, std::size_t dim, double bound);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace tkgd
