#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tkgd/models.hpp"

using namespace tkgd;

namespace {

ModelParams tiny(ModelKind kind, std::size_t dim) {
  ModelParams p;
  p.kind = kind;
  p.dim = dim;
  p.entity = Table(3, dim);
  p.relation = Table(2, dim);
  p.time = Table(2, dim);
  if (kind == ModelKind::kTADistMult) {
    p.lstm.w = Table(4 * dim, dim);
    p.lstm.u = Table(4 * dim, dim);
    p.lstm.b.assign(4 * dim, 0.0);
  }
  return p;
}

void set_row(Table& t, std::size_t r, Vector v) { std::copy(v.begin(), v.end(), t.row(r).begin()); }

}  // namespace

TEST_CASE("ttranse examples") {
  ModelParams p = tiny(ModelKind::kTTransE, 2);
  set_row(p.entity, 0, {1, 0});
  set_row(p.relation, 0, {0, 1});
  set_row(p.time, 0, {0, 0});
  set_row(p.entity, 1, {1, 1});
  CHECK(ttranse_score(p, {0, 0, 1, 0}) == 0.0);

  ModelParams z = tiny(ModelKind::kTTransE, 2);
  CHECK(ttranse_score(z, {0, 0, 1, 0}) == 0.0);

  set_row(p.entity, 0, {1, 2});
  set_row(p.relation, 0, {0, 1});
  set_row(p.time, 1, {1, 0});
  set_row(p.entity, 2, {0, 0});
  CHECK(std::abs(ttranse_score(p, {0, 0, 2, 1}) + std::sqrt(13.0)) < 1e-6);
}

TEST_CASE("ttranse is invariant to a shared entity shift") {
  Rng rng(1);
  ModelParams p = ModelParams::init(ModelKind::kTTransE, 6, 2, 3, 5, rng);
  ModelParams q = p;
  Vector c(5);
  for (double& v : c) v = rng.uniform(-3, 3);
  for (std::size_t e = 0; e < 6; ++e)
    for (std::size_t k = 0; k < 5; ++k) q.entity.at(e, k) += c[k];
  for (EntityId s = 0; s < 6; ++s)
    for (EntityId o = 0; o < 6; ++o) CHECK(std::abs(ttranse_score(p, {s, 1, o, 2}) - ttranse_score(q, {s, 1, o, 2})) < 1e-12);
}

TEST_CASE("lstm with zero weights encodes to zero") {
  ModelParams p = tiny(ModelKind::kTADistMult, 3);
  set_row(p.relation, 0, {1, 2, 3});
  set_row(p.time, 1, {-1, 0.5, 4});
  for (double v : lstm_encode(p, 0, 1)) CHECK(v == 0.0);
  set_row(p.entity, 0, {1, 2, 3});
  set_row(p.entity, 1, {3, 4, 5});
  CHECK(tadistmult_score(p, {0, 0, 1, 1}) == 0.0);
}

TEST_CASE("lstm encoding is deterministic") {
  Rng rng(42);
  const ModelParams p = ModelParams::init(ModelKind::kTADistMult, 4, 2, 3, 4, rng);
  CHECK(lstm_encode(p, 1, 2) == lstm_encode(p, 1, 2));
  CHECK(std::abs(score(p, {0, 1, 2, 2}) - tadistmult_score(p, {0, 1, 2, 2})) == 0.0);
}

TEST_CASE("distmult decoder examples") {
  CHECK(distmult_decode(Vector{1, 2}, Vector{3, 4}, Vector{1, 1}) == 11.0);
  CHECK(distmult_decode(Vector{2, 0}, Vector{0, 5}, Vector{1, 1}) == 0.0);
  CHECK(distmult_decode(Vector{2, 7}, Vector{1, 5}, Vector{0, 0}) == 0.0);
  Rng rng(3);
  const ModelParams p = ModelParams::init(ModelKind::kTADistMult, 4, 2, 2, 2, rng);
  const Vector ps = lstm_encode(p, 1, 0);
  CHECK(tadistmult_score(p, {0, 1, 3, 0}) == distmult_decode(p.entity.row(0), p.entity.row(3), ps));
}

TEST_CASE("distmult decoder is linear in p_seq") {
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    Vector s(5), o(5), a(5), b(5), mix(5);
    for (auto* v : {&s, &o, &a, &b})
      for (double& x : *v) x = rng.uniform(-2, 2);
    const double u = rng.uniform(-3, 3), w = rng.uniform(-3, 3);
    for (std::size_t k = 0; k < 5; ++k) mix[k] = u * a[k] + w * b[k];
    CHECK(std::abs(distmult_decode(s, o, mix) - (u * distmult_decode(s, o, a) + w * distmult_decode(s, o, b))) < 1e-12);
  }
}

TEST_CASE("tadistmult is symmetric in subject and object") {
  Rng rng(7);
  const ModelParams p = ModelParams::init(ModelKind::kTADistMult, 8, 3, 4, 5, rng);
  for (int i = 0; i < 30; ++i) {
    const auto s = static_cast<EntityId>(rng.below(8)), o = static_cast<EntityId>(rng.below(8));
    const auto r = static_cast<RelationId>(rng.below(3));
    const auto t = static_cast<TimeId>(rng.below(4));
    CHECK(std::abs(tadistmult_score(p, {s, r, o, t}) - tadistmult_score(p, {o, r, s, t})) < 1e-12);
  }
}

TEST_CASE("lstm output gradients match finite differences") {
  Rng rng(42);
  ModelParams p = ModelParams::init(ModelKind::kTADistMult, 2, 1, 1, 2, rng);
  for (double& b : p.lstm.b) b = rng.uniform(-0.5, 0.5);
  const Vector x1(p.relation.row(0).begin(), p.relation.row(0).end());
  const Vector x2(p.time.row(0).begin(), p.time.row(0).end());
  for (std::size_t out = 0; out < 2; ++out) {
    const LstmTrace tr = lstm_forward(p.lstm, x1, x2);
    LstmGrads g{Table(8, 2), Table(8, 2), Vector(8, 0.0)};
    Vector dh(2, 0.0), dx1(2, 0.0), dx2(2, 0.0);
    dh[out] = 1.0;
    lstm_backward(p.lstm, tr, dh, g, dx1, dx2);
    Vector y1 = x1, y2 = x2;
    std::vector<oracle::Block> blocks = {{"w", p.lstm.w.flat(), g.w.flat()},
                                         {"u", p.lstm.u.flat(), g.u.flat()},
                                         {"b", p.lstm.b, g.b},
                                         {"x1", y1, dx1},
                                         {"x2", y2, dx2}};
    const auto rep = oracle::finite_difference(blocks, [&] { return lstm_forward(p.lstm, y1, y2).output()[out]; });
    INFO(rep.worst);
    CHECK(rep.ok());
  }
}

TEST_CASE("base loss gradients match finite differences") {
  for (ModelKind kind : {ModelKind::kTTransE, ModelKind::kTADistMult}) {
    oracle::Toy toy = oracle::make_toy(kind);
    const auto rep = oracle::check_model_loss(toy.params, toy.batch, base_training_loss_fn(toy.batch));
    INFO(to_string(kind), " ", rep.worst);
    CHECK(rep.ok());
    CHECK(rep.checked == toy.params.parameter_count());
  }
}

TEST_CASE("parallel gradients agree with the serial reference") {
  for (ModelKind kind : {ModelKind::kTTransE, ModelKind::kTADistMult}) {
    SyntheticSpec spec;
    spec.num_entities = 60;
    spec.num_times = 6;
    const Dataset data = generate_synthetic(spec);
    Rng rng(9);
    const ModelParams p = ModelParams::init(kind, 60, data.vocab.num_relations(), 6, 6, rng);
    const auto batches = make_batches(data.facts, 60, 256, 7, rng);
    const RowLossFn loss = base_training_loss_fn(batches[0]);
    Gradients serial(p);
    const double ls = model_gradients_serial(p, batches[0], loss, serial);
    for (int workers : {1, 2, 4}) {
      Gradients par(p);
      const double lp = model_gradients(p, batches[0], loss, par, workers);
      CHECK(std::abs(lp - ls) < 1e-12);
      const ModelParams a = serial.densify(p), b = par.densify(p);
      auto close = [](std::span<const double> x, std::span<const double> y) {
        for (std::size_t i = 0; i < x.size(); ++i)
          if (std::abs(x[i] - y[i]) > 1e-12) return false;
        return true;
      };
      CHECK(close(a.entity.flat(), b.entity.flat()));
      CHECK(close(a.relation.flat(), b.relation.flat()));
      CHECK(close(a.time.flat(), b.time.flat()));
      if (p.uses_lstm()) {
        CHECK(close(a.lstm.w.flat(), b.lstm.w.flat()));
        CHECK(close(a.lstm.u.flat(), b.lstm.u.flat()));
        CHECK(close(a.lstm.b, b.lstm.b));
      }
    }
    Gradients r1(p), r2(p);
    model_gradients(p, batches[0], loss, r1, 3);
    model_gradients(p, batches[0], loss, r2, 3);
    CHECK(r1.densify(p) == r2.densify(p));
  }
}

TEST_CASE("zero loss gives zero gradients") {
  oracle::Toy toy = oracle::make_toy(ModelKind::kTADistMult);
  Gradients g(toy.params);
  RowLossFn zero = [](std::size_t, std::span<const double>, std::span<double>) { return 0.0; };
  CHECK(model_gradients(toy.params, toy.batch, zero, g) == 0.0);
  const ModelParams d = g.densify(toy.params);
  for (double v : d.entity.flat()) CHECK(v == 0.0);
  for (double v : d.lstm.w.flat()) CHECK(v == 0.0);
}

TEST_CASE("uniform scores give ln of the candidate count") {
  ModelParams p = tiny(ModelKind::kTTransE, 2);
  p.entity = Table(20, 2);
  TrainingBatch batch;
  batch.positives.push_back({0, 0, 1, 0});
  CandidateSet c;
  c.side = Side::kObject;
  for (EntityId e = 1; e <= 11; ++e) c.entities.push_back(e);
  batch.candidates.push_back(c);
  CHECK(std::abs(base_training_loss(p, batch) - std::log(11.0)) < 1e-7);
  CHECK(base_training_loss(p, batch) == base_training_loss(p, batch));

  Vector scores = {50.0, 0.0, 0.0};
  Vector ds(3);
  CHECK(candidate_cross_entropy(scores, 0, ds) < 1e-20);
}

TEST_CASE("adagrad examples") {
  Vector theta = {0.0}, accum = {0.0};
  adagrad_update(theta, accum, Vector{1.0}, 0.1, 1e-10);
  CHECK(std::abs(theta[0] + 0.1 / (1.0 + 1e-10)) < 1e-15);
  const double before = theta[0];
  adagrad_update(theta, accum, Vector{1.0}, 0.1, 1e-10);
  CHECK(std::abs((theta[0] - before) + 0.0707107) < 1e-7);
  CHECK(accum[0] == 2.0);

  Vector t2 = {3.0}, a2 = {0.5};
  adagrad_update(t2, a2, Vector{0.0}, 0.1, 1e-10);
  CHECK(t2[0] == 3.0);
  CHECK(a2[0] == 0.5);
  CHECK_THROWS_AS(adagrad_update(t2, a2, Vector{1.0, 2.0}, 0.1, 1e-10), std::invalid_argument);
}

TEST_CASE("adagrad step over model params") {
  oracle::Toy toy = oracle::make_toy(ModelKind::kTADistMult);
  OptimizerState st = OptimizerState::for_params(toy.params, 0.0);
  Gradients g(toy.params);
  model_gradients(toy.params, toy.batch, base_training_loss_fn(toy.batch), g);
  const ModelParams before = toy.params;
  adagrad_step(st, toy.params, g);
  CHECK(toy.params == before);
  double accum_sum = 0.0;
  for (double v : st.entity.flat()) accum_sum += v;
  CHECK(accum_sum > 0.0);

  OptimizerState st2 = OptimizerState::for_params(toy.params, 0.1);
  Gradients empty(toy.params);
  adagrad_step(st2, toy.params, empty);
  CHECK(toy.params == before);

  Gradients g2(toy.params);
  model_gradients(toy.params, toy.batch, base_training_loss_fn(toy.batch), g2);
  const Table acc_before = st2.entity;
  adagrad_step(st2, toy.params, g2);
  for (std::size_t i = 0; i < acc_before.flat().size(); ++i) CHECK(st2.entity.flat()[i] >= acc_before.flat()[i]);
  CHECK_FALSE(toy.params == before);

  Rng rng(1);
  ModelParams other = ModelParams::init(ModelKind::kTADistMult, 5, 3, 4, 4, rng);
  CHECK_THROWS_AS(adagrad_step(st2, other, g2), std::invalid_argument);
}

TEST_CASE("training lowers the base loss") {
  oracle::Toy toy = oracle::make_toy(ModelKind::kTTransE);
  OptimizerState st = OptimizerState::for_params(toy.params, 0.1);
  const double first = base_training_loss(toy.params, toy.batch);
  for (int i = 0; i < 30; ++i) {
    Gradients g(toy.params);
    model_gradients(toy.params, toy.batch, base_training_loss_fn(toy.batch), g);
    adagrad_step(st, toy.params, g);
  }
  CHECK(base_training_loss(toy.params, toy.batch) < first);
}

TEST_CASE("checkpoint round trip is bit exact") {
  testutil::TempDir dir;
  for (ModelKind kind : {ModelKind::kTTransE, ModelKind::kTADistMult}) {
    Rng rng(42);
    ModelParams p = ModelParams::init(kind, 13, 4, 6, 5, rng);
    p.entity.at(0, 0) = -0.0;
    p.entity.at(1, 1) = 1e-310;
    const auto path = dir / ("m" + to_string(kind) + ".ckpt");
    save_checkpoint(path, p);
    const ModelParams q = load_checkpoint(path);
    CHECK(q == p);
    CHECK(std::signbit(q.entity.at(0, 0)));
  }
  testutil::write_file(dir / "junk.ckpt", "not a checkpoint");
  CHECK_THROWS(load_checkpoint(dir / "junk.ckpt"));
  CHECK_THROWS(load_checkpoint(dir / "absent.ckpt"));
}

TEST_CASE("model kind names") {
  CHECK(parse_model_kind("ttranse") == ModelKind::kTTransE);
  CHECK(parse_model_kind("tadistmult") == ModelKind::kTADistMult);
  CHECK(to_string(ModelKind::kTADistMult) == "tadistmult");
  CHECK_THROWS_AS(parse_model_kind("rescal"), std::invalid_argument);
}

TEST_CASE("pseq cache matches direct scoring") {
  Rng rng(2);
  const ModelParams p = ModelParams::init(ModelKind::kTADistMult, 10, 3, 4, 4, rng);
  const PseqCache cache(p);
  CandidateSet c;
  c.side = Side::kSubject;
  c.entities = {0, 3, 5, 9};
  const Quadruple f{0, 2, 4, 3};
  const Vector a = score_candidates(p, f, c);
  const Vector b = score_candidates(p, f, c, &cache);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) < 1e-12);
    CHECK(std::abs(a[i] - score(p, substitute(f, Side::kSubject, c.entities[i]))) < 1e-12);
  }
}
