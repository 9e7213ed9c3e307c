#include <cmath>

#include "tkgd/distill.hpp"

namespace tkgd {

std::string to_string(Method m) {
  switch (m) {
    case Method::kOurs: return "ours";
    case Method::kBkd: return "bkd";
    case Method::kFitNet: return "fitnet";
    case Method::kRkd: return "rkd";
    case Method::kNone: return "none";
  }
  return "none";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kOurs, Method::kBkd, Method::kFitNet, Method::kRkd, Method::kNone})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown method: " + std::string(name));
}

std::string to_string(Objective o) {
  return o == Objective::kLlmWeighted ? "llm-weighted" : "relation-supervised";
}

Objective parse_objective(std::string_view name) {
  if (name == "llm-weighted") return Objective::kLlmWeighted;
  if (name == "relation-supervised") return Objective::kRelationSupervised;
  throw std::invalid_argument("unknown objective: " + std::string(name));
}

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(hint_weight >= 0.0)) throw std::invalid_argument("hint_weight must be non-negative");
  if (rkd_group < 3) throw std::invalid_argument("rkd_group must be at least 3");
}

double huber(double d, double delta) {
  const double a = std::abs(d);
  return a <= delta ? 0.5 * d * d : delta * a - 0.5 * delta * delta;
}

double huber_derivative(double d, double delta) {
  if (std::abs(d) <= delta) return d;
  return d > 0.0 ? delta : -delta;
}

namespace {

void require_teacher(const ScoreRow& row) {
  if (row.teacher.empty()) throw InvalidStateError("loss needs teacher scores");
  if (row.teacher.size() != row.student.size()) throw std::invalid_argument("teacher/student length mismatch");
}

void require_llm(const ScoreRow& row) {
  if (row.llm.empty()) throw InvalidStateError("loss needs llm scores");
  if (row.llm.size() != row.student.size()) throw std::invalid_argument("llm/student length mismatch");
}

}  // namespace

double bkd_loss(const ScoreRow& row, std::span<const double> label, double temperature, double mix,
                std::span<double> dstudent) {
  require_teacher(row);
  if (label.size() != row.student.size()) throw std::invalid_argument("label length mismatch");
  double loss = 0.0;
  if (mix != 0.0) {
    const Vector pt = softmax_t(row.teacher, temperature);
    const Vector ps = softmax_t(row.student, temperature);
    const double t2 = temperature * temperature;
    loss += mix * t2 * kl_divergence(pt, ps);
    if (!dstudent.empty())
      for (std::size_t j = 0; j < ps.size(); ++j) dstudent[j] += mix * temperature * (ps[j] - pt[j]);
  }
  if (mix != 1.0) {
    const Vector p = softmax_t(row.student, 1.0);
    loss += (1.0 - mix) * cross_entropy(label, p);
    if (!dstudent.empty())
      for (std::size_t j = 0; j < p.size(); ++j) dstudent[j] += (1.0 - mix) * (p[j] - label[j]);
  }
  return loss;
}

double loss_l1(const ScoreRow& row, std::span<const double> label, double alpha, double temperature,
               std::span<double> dstudent) {
  return bkd_loss(row, label, temperature, alpha, dstudent);
}

double loss_l2_huber(const ScoreRow& row, double delta, std::span<double> dstudent) {
  require_llm(row);
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  const double inv_m = 1.0 / static_cast<double>(row.student.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < row.student.size(); ++j) {
    const double d = row.llm[j] - row.student[j];
    loss += huber(d, delta);
    if (!dstudent.empty()) dstudent[j] -= inv_m * huber_derivative(d, delta);
  }
  return loss * inv_m;
}

double loss_l3_llm(const ScoreRow& row, std::span<double> dstudent) {
  require_llm(row);
  const double inv_m = 1.0 / static_cast<double>(row.student.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < row.student.size(); ++j) {
    const double d = row.llm[j] - row.student[j];
    loss += d * d;
    if (!dstudent.empty()) dstudent[j] -= inv_m * 2.0 * d;
  }
  return loss * inv_m;
}

LossBreakdown total_loss(const LossBreakdown& parts, const DistillConfig& config) {
  LossBreakdown out = parts;
  if (config.objective == Objective::kLlmWeighted)
    out.total = parts.l1 + config.alpha * parts.l2 + config.beta * parts.l3_llm;
  else
    out.total = parts.l1 + parts.l2 + config.beta * parts.l3_rel;
  return out;
}

double fitnet_loss(std::span<const double> student_hidden, std::span<const double> teacher_hidden,
                   const Table& regressor, Table* dregressor, std::span<double> dstudent) {
  if (regressor.cols() != student_hidden.size() || regressor.rows() != teacher_hidden.size())
    throw std::invalid_argument("fitnet_loss: regressor shape does not match hidden widths");
  double loss = 0.0;
  for (std::size_t r = 0; r < regressor.rows(); ++r) {
    const double resid = dot(regressor.row(r), student_hidden) - teacher_hidden[r];
    loss += 0.5 * resid * resid;
    if (dregressor) {
      auto g = dregressor->row(r);
      for (std::size_t k = 0; k < student_hidden.size(); ++k) g[k] += resid * student_hidden[k];
    }
    if (!dstudent.empty()) {
      auto w = regressor.row(r);
      for (std::size_t k = 0; k < student_hidden.size(); ++k) dstudent[k] += resid * w[k];
    }
  }
  return loss;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

struct Geometry {
  std::size_t n;
  std::vector<double> dist;  // n x n
  double mean = 0.0;
};

Geometry geometry(const Table& x) {
  Geometry g{x.rows(), std::vector<double>(x.rows() * x.rows(), 0.0)};
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = i + 1; j < g.n; ++j) {
      const double d = distance(x.row(i), x.row(j));
      g.dist[i * g.n + j] = g.dist[j * g.n + i] = d;
      g.mean += d;
      ++pairs;
    }
  g.mean /= static_cast<double>(pairs);
  return g;
}

// cosine of the angle at vertex j between (i - j) and (k - j); 0 if degenerate.
double vertex_cosine(const Table& x, const Geometry& g, std::size_t i, std::size_t j, std::size_t k) {
  const double du = g.dist[i * g.n + j], dv = g.dist[k * g.n + j];
  if (du == 0.0 || dv == 0.0) return 0.0;
  double c = 0.0;
  auto xi = x.row(i), xj = x.row(j), xk = x.row(k);
  for (std::size_t q = 0; q < x.cols(); ++q) c += (xi[q] - xj[q]) * (xk[q] - xj[q]);
  return c / (du * dv);
}

}  // namespace

double rkd_loss(const Table& student, const Table& teacher, double delta, Table* dstudent) {
  const std::size_t n = student.rows();
  if (n < 3 || teacher.rows() != n) throw std::invalid_argument("rkd_loss: need equal batches of at least 3");
  const Geometry gs = geometry(student), gt = geometry(teacher);
  const std::size_t pairs = n * (n - 1) / 2;
  const std::size_t triplets = n * (n - 1) * (n - 2);
  const std::size_t d = student.cols();

  // Distance term.
  double dist_loss = 0.0;
  std::vector<double> a(n * n, 0.0);  // dL/dpsi_ij, i < j
  double a_dot_d = 0.0;
  const bool ds_ok = gs.mean > 0.0, dt_ok = gt.mean > 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double ps = ds_ok ? gs.dist[i * n + j] / gs.mean : 0.0;
      const double pt = dt_ok ? gt.dist[i * n + j] / gt.mean : 0.0;
      dist_loss += huber(ps - pt, delta);
      a[i * n + j] = huber_derivative(ps - pt, delta) / static_cast<double>(pairs);
      a_dot_d += a[i * n + j] * gs.dist[i * n + j];
    }
  dist_loss /= static_cast<double>(pairs);

  // Angle term.
  double angle_loss = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const double cs = vertex_cosine(student, gs, i, j, k);
        const double ct = vertex_cosine(teacher, gt, i, j, k);
        angle_loss += huber(cs - ct, delta);
        if (!dstudent) continue;
        const double b = huber_derivative(cs - ct, delta) / static_cast<double>(triplets);
        const double du = gs.dist[i * n + j], dv = gs.dist[k * n + j];
        if (b == 0.0 || du == 0.0 || dv == 0.0) continue;
        auto xi = student.row(i), xj = student.row(j), xk = student.row(k);
        auto gi = dstudent->row(i);
        auto gk = dstudent->row(k);
        auto gj = dstudent->row(j);
        for (std::size_t q = 0; q < d; ++q) {
          const double u = xi[q] - xj[q], v = xk[q] - xj[q];
          const double dcu = v / (du * dv) - cs * u / (du * du);
          const double dcv = u / (du * dv) - cs * v / (dv * dv);
          gi[q] += b * dcu;
          gk[q] += b * dcv;
          gj[q] -= b * (dcu + dcv);
        }
      }
    }
  angle_loss /= static_cast<double>(triplets);

  if (dstudent && ds_ok) {
    const double mu = gs.mean;
    const double shared = a_dot_d / (mu * mu * static_cast<double>(pairs));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dij = gs.dist[i * n + j];
        if (dij == 0.0) continue;
        const double dl_dd = a[i * n + j] / mu - shared;
        auto xi = student.row(i), xj = student.row(j);
        auto gi = dstudent->row(i);
        auto gj = dstudent->row(j);
        for (std::size_t q = 0; q < d; ++q) {
          const double g = dl_dd * (xi[q] - xj[q]) / dij;
          gi[q] += g;
          gj[q] -= g;
        }
      }
  }
  return dist_loss + angle_loss;
}

double relation_supervision_loss(std::span<const double> rel, std::span<const double> target,
                                 std::span<double> drelation) {
  if (rel.size() != target.size()) throw std::invalid_argument("relation_supervision_loss: width mismatch");
  const Vector y = softmax_t(rel, 1.0);
  Vector dy(y.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double r = y[k] - target[k];
    loss += r * r;
    dy[k] = 2.0 * r;
  }
  if (!drelation.empty()) {
    const Vector dz = softmax_backward(y, dy);
    for (std::size_t k = 0; k < dz.size(); ++k) drelation[k] += dz[k];
  }
  return loss;
}

}  // namespace tkgd
