// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "dmesr/error.hpp"
#include "dmesr/ops.hpp"
#include "dmesr/optim.hpp"
#include "dmesr/training.hpp"
#include "gradcheck.hpp"
#include "toy_model.hpp"

using namespace dmesr;
using dmesr::testing::random_semantics;
using dmesr::testing::randomize;
using dmesr::testing::toy_config;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Matrix product(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Matrix transposed(const Matrix& a) {
  Matrix t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

Matrix plus_row(Matrix a, const Matrix& row) {
  for (auto& r : a)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += row[0][j];
  return a;
}

double dot_rows(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent restatement of the model equations with plain loops: adapters,
// causal bidirectional cross-attention, a one-layer GRU shared by both views,
// dot-product scores, pairwise BCE and the four-way alignment loss.
struct Reference {
  std::map<std::string, Matrix> p;
  const SemanticTable& sem;
  std::size_t d;

  Matrix adapt(const std::string& route, Route r, const std::vector<ItemId>& items) const {
    Matrix x;
    for (ItemId i : items) {
      const auto row = sem.route(r).row(i);
      x.emplace_back(row.begin(), row.end());
    }
    const std::string s = "adapter." + route;
    const Matrix h = plus_row(product(x, transposed(p.at(s + ".down"))), p.at(s + ".down_bias"));
    return plus_row(product(h, transposed(p.at(s + ".up"))), p.at(s + ".up_bias"));
  }

  Matrix attend(const Matrix& qs, const Matrix& kvs, const std::string& scope) const {
    const Matrix q = product(qs, p.at(scope + ".query"));
    const Matrix k = product(kvs, p.at(scope + ".key"));
    const Matrix v = product(kvs, p.at(scope + ".value"));
    Matrix out(q.size(), std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> w(i + 1);
      double total = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        w[j] = std::exp(dot_rows(q[i], k[j]) / std::sqrt(static_cast<double>(d)));
        total += w[j];
      }
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t c = 0; c < d; ++c) out[i][c] += w[j] / total * v[j][c];
    }
    return out;
  }

  Matrix gru(const Matrix& x) const {
    const std::string s = "backbone.cell0";
    std::vector<double> h(d, 0.0);
    Matrix out;
    for (const auto& xt : x) {
      std::vector<double> z(d), r(d), n(d), next(d);
      for (std::size_t j = 0; j < d; ++j) {
        double az = p.at(s + ".bias_update")[0][j], ar = p.at(s + ".bias_reset")[0][j];
        for (std::size_t k = 0; k < d; ++k) {
          az += xt[k] * p.at(s + ".input_update")[k][j] + h[k] * p.at(s + ".state_update")[k][j];
          ar += xt[k] * p.at(s + ".input_reset")[k][j] + h[k] * p.at(s + ".state_reset")[k][j];
        }
        z[j] = logistic(az);
        r[j] = logistic(ar);
      }
      for (std::size_t j = 0; j < d; ++j) {
        double an = p.at(s + ".bias_candidate")[0][j];
        for (std::size_t k = 0; k < d; ++k) {
          an += xt[k] * p.at(s + ".input_candidate")[k][j] + r[k] * h[k] * p.at(s + ".state_candidate")[k][j];
        }
        n[j] = std::tanh(an);
      }
      for (std::size_t j = 0; j < d; ++j) next[j] = (1 - z[j]) * n[j] + z[j] * h[j];
      h = next;
      out.push_back(h);
    }
    return out;
  }

  static double directed(const Matrix& a, const Matrix& b, double tau) {
    const std::size_t n = a.size();
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n);
      for (std::size_t j = 0; j < n; ++j) {
        logits[j] = dot_rows(a[i], b[j]) / std::sqrt(dot_rows(a[i], a[i]) * dot_rows(b[j], b[j])) / tau;
      }
      double m = -1e300;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) m = std::max(m, logits[j]);
      double s = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) s += std::exp(logits[j] - m);
      total += logits[i] - (m + std::log(s));
    }
    return -total / static_cast<double>(n);
  }

  LossBreakdown loss(const std::vector<TrainExample>& batch, double alpha, double tau) const {
    LossBreakdown out;
    std::vector<ItemId> seen;
    for (const auto& ex : batch) {
      const Matrix coarse = adapt("text", Route::text, ex.inputs);
      const Matrix fine = adapt("orig", Route::original_text, ex.inputs);
      const Matrix hc = gru(attend(fine, coarse, "fusion.coarse"));
      const Matrix hf = gru(attend(coarse, fine, "fusion.fine"));
      const Matrix pc = adapt("text", Route::text, ex.positives), pf = adapt("orig", Route::original_text, ex.positives);
      const Matrix nc = adapt("text", Route::text, ex.negatives), nf = adapt("orig", Route::original_text, ex.negatives);
      for (std::size_t k = 0; k < ex.inputs.size(); ++k) {
        const double sp = dot_rows(hc[k], pc[k]) + dot_rows(hf[k], pf[k]);
        const double sn = dot_rows(hc[k], nc[k]) + dot_rows(hf[k], nf[k]);
        out.srs -= std::log(std::clamp(logistic(sp), 1e-7, 1 - 1e-7)) +
                   std::log(std::clamp(1 - logistic(sn), 1e-7, 1 - 1e-7));
      }
      for (ItemId i : ex.inputs)
        if (std::find(seen.begin(), seen.end(), i) == seen.end()) seen.push_back(i);
    }
    const Matrix t = adapt("text", Route::text, seen);
    const Matrix v = adapt("visual", Route::visual, seen);
    const Matrix h = adapt("hybrid", Route::hybrid, seen);
    out.align = directed(t, v, tau) + directed(v, t, tau) + directed(t, h, tau) + directed(h, t, tau);
    out.total = out.srs + alpha * out.align;
    return out;
  }
};

std::vector<TrainExample> toy_batch() {
  TrainExample a{0, {0, 3, 1}, {3, 1, 4}, {2, 2, 0}};
  TrainExample b{1, {4, 2}, {2, 0}, {1, 3}};
  return {a, b};
}

}  // namespace

TEST_CASE("pairwise BCE closed forms") {
  auto pair_loss = [](double pos, double neg) {
    return srs_loss(constant(Tensor::scalar(pos)), constant(Tensor::scalar(neg))).item();
  };
  CHECK(std::abs(pair_loss(0, 0) - 2 * std::log(2.0)) < 1e-12);
  CHECK(pair_loss(1, -1) == doctest::Approx(0.62652).epsilon(1e-5));
  CHECK(pair_loss(1, -1) == doctest::Approx(-2 * std::log(logistic(1.0))).epsilon(1e-12));
  // Saturated scores hit the clamp instead of log(0).
  CHECK(pair_loss(1e4, -1e4) == doctest::Approx(-2 * std::log(1 - 1e-7)).epsilon(1e-9));
  CHECK(pair_loss(-1e4, 1e4) == doctest::Approx(-2 * std::log(1e-7)).epsilon(1e-9));

  const Tensor pos = Tensor::from_rows({{0.5}, {-1.0}, {2.0}});
  const Tensor neg = Tensor::from_rows({{0.1}, {0.3}, {-0.7}});
  double manual = 0;
  for (std::size_t i = 0; i < 3; ++i) manual += pair_loss(pos[i], neg[i]);
  CHECK(srs_loss(constant(pos), constant(neg)).item() == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("training examples shift targets by one and avoid the sequence") {
  std::mt19937_64 rng(1);
  const TrainSequence seq{7, {4, 9, 2, 6, 1}};
  for (int trial = 0; trial < 50; ++trial) {
    const auto ex = make_example(seq, 12, 200, rng);
    CHECK(ex.user == 7);
    CHECK(ex.inputs == std::vector<ItemId>{4, 9, 2, 6});
    CHECK(ex.positives == std::vector<ItemId>{9, 2, 6, 1});
    REQUIRE(ex.negatives.size() == 4);
    for (ItemId n : ex.negatives) {
      CHECK(n < 12);
      CHECK(std::find(seq.items.begin(), seq.items.end(), n) == seq.items.end());
    }
  }
  const auto cut = make_example(seq, 12, 2, rng);
  CHECK(cut.inputs == std::vector<ItemId>{2, 6});
  CHECK(cut.positives == std::vector<ItemId>{6, 1});
  CHECK_THROWS_AS(make_example({1, {3}}, 12, 200, rng), Error);
}

TEST_CASE("negatives are resampled between epochs") {
  std::mt19937_64 rng(3);
  const TrainSequence seq{0, {0, 1, 2, 3, 4, 5, 6, 7}};
  std::set<std::vector<ItemId>> draws;
  for (int i = 0; i < 5; ++i) draws.insert(make_example(seq, 400, 200, rng).negatives);
  CHECK(draws.size() == 5);
}

TEST_CASE("batch loss matches a straight-line reference") {
  const auto sem = random_semantics(5, 8, 21);
  DmesrModel model(toy_config(5, 8, 4, BackboneKind::recurrent), sem);
  randomize(model.parameters(), 22);
  Reference ref{{}, *sem, 4};
  for (Parameter* p : model.parameters()) ref.p[p->name()] = to_matrix(p->value());

  TrainConfig cfg;
  cfg.alpha = 0.3;
  cfg.tau = 1.5;
  const auto batch = toy_batch();
  const BatchLoss got = forward_batch(model, batch, cfg, nullptr);
  const LossBreakdown want = ref.loss(batch, cfg.alpha, cfg.tau);
  CHECK(got.parts.srs == doctest::Approx(want.srs).epsilon(1e-10));
  CHECK(got.parts.align == doctest::Approx(want.align).epsilon(1e-10));
  CHECK(got.parts.total == doctest::Approx(want.total).epsilon(1e-10));
  CHECK(got.total.item() == doctest::Approx(want.total).epsilon(1e-10));
  CHECK(std::abs(got.parts.total - (got.parts.srs + cfg.alpha * got.parts.align)) < 1e-9);
}

TEST_CASE("alpha zero leaves the total equal to the sequence loss") {
  const auto sem = random_semantics(5, 8, 31);
  DmesrModel model(toy_config(5, 8, 4, BackboneKind::self_attention), sem);
  TrainConfig cfg;
  cfg.alpha = 0.0;
  const BatchLoss got = forward_batch(model, toy_batch(), cfg, nullptr);
  CHECK(got.parts.align > 0);
  CHECK(got.parts.total == got.parts.srs);
  CHECK(got.total.item() == got.parts.srs);
}

TEST_CASE("no_cl reports zero alignment and ignores the visual and hybrid adapters") {
  auto model_cfg = toy_config(5, 8, 4, BackboneKind::self_attention);
  model_cfg.ablations.no_cl = true;
  DmesrModel model(model_cfg, random_semantics(5, 8, 41));
  TrainConfig cfg;
  cfg.alpha = 1.0;
  const auto batch = toy_batch();
  const BatchLoss before = forward_batch(model, batch, cfg, nullptr);
  CHECK(before.parts.align == 0.0);
  randomize(model.adapter(Route::visual).parameters(), 42, 3.0);
  randomize(model.adapter(Route::hybrid).parameters(), 43, 3.0);
  const BatchLoss after = forward_batch(model, batch, cfg, nullptr);
  CHECK(after.parts.total == before.parts.total);

  backward(after.total);
  for (Route r : {Route::visual, Route::hybrid}) {
    for (Parameter* p : model.adapter(r).parameters()) {
      for (double g : p->grad().data()) CHECK(g == 0.0);
    }
  }
  zero_grad(model.parameters());
}

TEST_CASE("whole-model gradients match finite differences") {
  // Three users, five items, encoder width 8, model width 4.
  const std::vector<TrainExample> batch{{0, {0, 3, 1}, {3, 1, 4}, {2, 2, 0}},
                                        {1, {4, 2}, {2, 0}, {1, 3}},
                                        {2, {1, 0, 2}, {0, 2, 3}, {4, 4, 3}}};
  for (BackboneKind kind : {BackboneKind::self_attention, BackboneKind::recurrent}) {
    CAPTURE(backbone_name(kind));
    DmesrModel model(toy_config(5, 8, 4, kind), random_semantics(5, 8, 51));
    randomize(model.parameters(), 52);
    TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.tau = 1.0;
    const auto result = dmesr::testing::check_gradients(
        model.parameters(), [&] { return forward_batch(model, batch, cfg, nullptr).total; });
    CAPTURE(result.worst);
    CHECK(result.max_rel_error <= 1e-4);
    CHECK(result.checked > 400);
  }
}

TEST_CASE("early stopping trace") {
  EarlyStopping s(2);
  CHECK(s.update(0.5));
  CHECK_FALSE(s.should_stop());
  CHECK_FALSE(s.update(0.4));
  CHECK_FALSE(s.should_stop());
  CHECK_FALSE(s.update(0.3));
  CHECK(s.should_stop());
  CHECK(s.best_epoch() == 1);
  CHECK(s.best_metric() == 0.5);

  EarlyStopping t(1);
  t.update(0.1);
  CHECK(t.update(0.2));
  CHECK_FALSE(t.update(0.2));  // ties do not count as improvement
  CHECK(t.should_stop());
  CHECK(t.best_epoch() == 2);
  CHECK_THROWS_AS(EarlyStopping(0), Error);
}

namespace {

struct ToyRun {
  std::vector<TrainSequence> train;
  std::vector<EvalInstance> valid;
};

ToyRun toy_run() {
  ToyRun r;
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<ItemId> item(0, 11);
  for (UserId u = 0; u < 6; ++u) {
    TrainSequence s{u, {}};
    for (int k = 0; k < 5; ++k) s.items.push_back(item(rng));
    r.train.push_back(s);
    EvalInstance e{u, s.items, item(rng), {}};
    for (int k = 0; k < 100; ++k) e.negatives.push_back(item(rng));
    r.valid.push_back(e);
  }
  return r;
}

}  // namespace

TEST_CASE("fit is deterministic and restores the best epoch") {
  const auto run = toy_run();
  const auto sem = random_semantics(12, 8, 62);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 4;
  cfg.max_epochs = 6;
  cfg.patience = 3;
  auto model_cfg = toy_config(12, 8, 4, BackboneKind::self_attention);
  model_cfg.backbone.dropout = 0.2;

  auto train_once = [&](FitResult& out) {
    auto model = std::make_unique<DmesrModel>(model_cfg, sem);
    out = fit(*model, run.train, run.valid, cfg);
    return model;
  };
  FitResult a, b;
  auto ma = train_once(a);
  auto mb = train_once(b);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss.srs == b.log[i].loss.srs);
    CHECK(a.log[i].loss.align == b.log[i].loss.align);
    CHECK(a.log[i].valid_ndcg == b.log[i].valid_ndcg);
    CHECK(std::abs(a.log[i].loss.total - (a.log[i].loss.srs + cfg.alpha * a.log[i].loss.align)) < 1e-9);
  }
  CHECK(a.best_epoch >= 1);
  double best = 0;
  for (const auto& rec : a.log) best = std::max(best, rec.valid_ndcg);
  CHECK(a.best_valid_ndcg == best);
}

TEST_CASE("training lowers the sequence loss") {
  const auto run = toy_run();
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 6;
  cfg.max_epochs = 30;
  cfg.patience = 30;
  DmesrModel model(toy_config(12, 8, 4, BackboneKind::recurrent), random_semantics(12, 8, 63));
  const auto result = fit(model, run.train, run.valid, cfg);
  REQUIRE(result.log.size() == 30);
  CHECK(result.log.back().loss.srs < result.log.front().loss.srs);
}

TEST_CASE("non-finite losses abort with diagnostics") {
  const auto run = toy_run();
  DmesrModel model(toy_config(12, 8, 4, BackboneKind::recurrent), random_semantics(12, 8, 64));
  model.adapter(Route::text).up_bias.mutable_value()[0] = std::nan("");
  TrainConfig cfg;
  cfg.max_epochs = 2;
  try {
    fit(model, run.train, run.valid, cfg);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.epoch == 1);
    CHECK(e.batch == 1);
    CHECK(std::string(e.what()).find("L_SRS=") != std::string::npos);
    CHECK(std::string(e.what()).find("L_align=") != std::string::npos);
  }
}

TEST_CASE("epoch records serialize as single-line JSON") {
  EpochRecord r;
  r.epoch = 3;
  r.loss = {1.5, 0.25, 1.525};
  r.valid_hr = 0.5;
  r.valid_ndcg = 0.25;
  r.seconds = 0.125;
  const std::string j = r.to_json();
  CHECK(j.find('\n') == std::string::npos);
  CHECK(j == "{\"epoch\":3,\"L_SRS\":1.5,\"L_align\":0.25,\"total\":1.525,\"valid_HR@10\":0.5,"
             "\"valid_N@10\":0.25,\"seconds\":0.125}");
}

TEST_CASE("run configuration parses every setting and rejects unknown keys") {
  RunConfig base;
  base.model.num_items = 30;
  const auto rc = run_config_from_map({{"learning_rate", "0.005"},
                                       {"batch_size", "16"},
                                       {"max_epochs", "40"},
                                       {"patience", "5"},
                                       {"alpha", "0.5"},
                                       {"tau", "1.5"},
                                       {"seed", "9"},
                                       {"backbone", "recurrent"},
                                       {"width", "16"},
                                       {"dropout", "0.1"},
                                       {"ablate", "no_ca"}},
                                      base);
  CHECK(rc.train.learning_rate == 0.005);
  CHECK(rc.train.batch_size == 16);
  CHECK(rc.train.max_epochs == 40);
  CHECK(rc.train.patience == 5);
  CHECK(rc.train.alpha == 0.5);
  CHECK(rc.train.tau == 1.5);
  CHECK(rc.train.seed == 9);
  CHECK(rc.model.seed == 9);
  CHECK(rc.model.backbone.kind == BackboneKind::recurrent);
  CHECK(rc.model.backbone.layers == 1);
  CHECK(rc.model.width == 16);
  CHECK(rc.model.num_items == 30);
  CHECK(rc.model.ablations.no_ca);

  const auto again = run_config_from_map(run_config_to_map(rc), base);
  CHECK(run_config_to_map(again) == run_config_to_map(rc));

  CHECK_THROWS_WITH_AS(run_config_from_map({{"learning_rat", "1"}}), doctest::Contains("learning_rat"), Error);
  CHECK_THROWS_WITH_AS(run_config_from_map({{"patience", "0"}}), doctest::Contains("patience"), Error);
  CHECK_THROWS_WITH_AS(run_config_from_map({{"alpha", "-1"}}), doctest::Contains("alpha"), Error);
}
