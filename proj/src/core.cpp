#include "tkgd/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tkgd {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Rng Rng::fork() {
  std::uint64_t state = engine_();
  return Rng(splitmix64(state));
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Vector softmax_t(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw std::invalid_argument("softmax_t: empty input");
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax_t: temperature must be positive");
  if (!all_finite(logits)) throw std::invalid_argument("softmax_t: non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double cross_entropy(std::span<const double> target, std::span<const double> predicted) {
  if (target.size() != predicted.size())
    throw std::invalid_argument("cross_entropy: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    loss -= target[i] * std::log(std::max(predicted[i], kProbFloor));
  }
  return loss;
}

double entropy(std::span<const double> p) { return cross_entropy(p, p); }

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  return cross_entropy(p, q) - entropy(p);
}

Table init_uniform(Rng& rng, std::size_t count, std::size_t dim, double bound) {
  if (count == 0 || dim == 0) throw std::invalid_argument("init_uniform: count and dim must be >= 1");
  Table t(count, dim);
  for (double& v : t.flat()) v = rng.uniform(-bound, bound);
  return t;
}

Table init_embeddings(Rng& rng, std::size_t count, std::size_t dim) {
  return init_uniform(rng, count, dim, 6.0 / std::sqrt(static_cast<double>(dim)));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace tkgd
