// SPDX-License-Identifier: Apache-2.0
// Runs the eight acceptance checks and prints one PASS/FAIL line for each.
// Exits non-zero when any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "alignment_descent.hpp"
#include "dmesr/dataset.hpp"
#include "dmesr/enhancement.hpp"
#include "dmesr/evaluation.hpp"
#include "dmesr/fixture.hpp"
#include "dmesr/fusion.hpp"
#include "dmesr/training.hpp"
#include "gradcheck.hpp"
#include "toy_model.hpp"

using namespace dmesr;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  // Three users over eight items, one batch of three.
  const std::vector<TrainExample> batch{{0, {0, 3, 1, 6}, {3, 1, 6, 4}, {2, 7, 0, 5}},
                                        {1, {4, 2}, {2, 7}, {1, 3}},
                                        {2, {5, 0, 2}, {0, 2, 3}, {7, 4, 6}}};
  double worst = 0.0;
  std::size_t checked = 0;
  std::string where;
  for (BackboneKind kind : {BackboneKind::self_attention, BackboneKind::recurrent}) {
    DmesrModel model(testing::toy_config(8, 8, 4, kind), testing::random_semantics(8, 8, 71));
    testing::randomize(model.parameters(), 72);
    TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.tau = 1.0;
    const auto r = testing::check_gradients(model.parameters(),
                                            [&] { return forward_batch(model, batch, cfg, nullptr).total; });
    checked += r.checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = std::string(backbone_name(kind)) + " " + r.worst;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 30.0, std::to_string(checked) + " entries, max relative error " + sci(worst) +
                                            " (" + where + "), " + num(secs, 1) + " s"};
}

Verdict equation_oracles() {
  const Var eye = constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  const double align = alignment_loss_directed(eye, eye, 1.0).item();
  const double pair = srs_loss(constant(Tensor::from_rows({{0}})), constant(Tensor::from_rows({{0}}))).item();

  std::mt19937_64 rng(3);
  AttentionProjections p("p", 3, rng);
  for (Parameter* w : p.parameters()) {
    auto& m = w->mutable_value();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) m.at(i, j) = i == j ? 1.0 : 0.0;
  }
  const Tensor x = Tensor::from_rows({{0.3, -1.2, 2.0}});
  const Tensor fused = cross_attend(constant(x), constant(x), p).value();
  double fusion_err = 0.0;
  for (std::size_t j = 0; j < 3; ++j) fusion_err = std::max(fusion_err, std::abs(fused[j] - x[j]));

  const double align_err = std::abs(align + 1.0), pair_err = std::abs(pair - 2.0 * std::log(2.0));
  return {align_err <= 1e-9 && pair_err <= 1e-12 && fusion_err <= 1e-9,
          "alignment " + sci(align_err) + ", pair loss " + sci(pair_err) + ", fusion identity " + sci(fusion_err)};
}

Verdict metric_oracle() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> level(0, 20);  // coarse levels produce ties
  std::uniform_int_distribution<std::size_t> slot(0, kCandidateCount - 1);
  std::size_t hr_mismatch = 0;
  double ndcg_err = 0.0;
  for (int n = 0; n < 1000; ++n) {
    std::vector<double> s(kCandidateCount);
    for (double& v : s) v = level(rng);
    const std::size_t pos = slot(rng);
    std::size_t at_least = 0;
    for (std::size_t j = 0; j < s.size(); ++j) at_least += j != pos && s[j] >= s[pos];
    const std::size_t brute_rank = 1 + at_least;
    const double brute_hr = brute_rank <= 10 ? 1.0 : 0.0;
    const double brute_ndcg = brute_rank <= 10 ? 1.0 / std::log2(static_cast<double>(brute_rank) + 1.0) : 0.0;
    const std::size_t rank = rank_positive(s, pos);
    hr_mismatch += hr_at_k(rank, 10) != brute_hr;
    ndcg_err = std::max(ndcg_err, std::abs(ndcg_at_k(rank, 10) - brute_ndcg));
  }

  const std::size_t n = 4000;
  std::vector<EvalInstance> instances(n);
  for (std::size_t i = 0; i < n; ++i) {
    instances[i].user = static_cast<UserId>(i);
    instances[i].target = 0;
    instances[i].negatives.assign(kCandidateCount - 1, 1);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto report = evaluate(instances, [&](const EvalInstance&) {
    std::vector<double> s(kCandidateCount);
    for (double& v : s) v = normal(rng);
    return s;
  });
  const double p = 10.0 / 101.0, sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  const double z = (report.overall.hr - p) / sigma;
  return {hr_mismatch == 0 && ndcg_err <= 1e-9 && std::abs(z) <= 3.0,
          "HR mismatches " + std::to_string(hr_mismatch) + ", NDCG error " + sci(ndcg_err) + ", random HR@10 " +
              num(report.overall.hr) + " over " + std::to_string(n) + " (z = " + num(z, 2) + ")"};
}

Verdict dataset_table() {
  struct Row {
    const char* name;
    std::size_t users, items, interactions;
    const char* avg;
    const char* sparsity;
  };
  const Row rows[] = {{"MovieLens", 610, 9722, 100808, "165.26", "98.30%"},
                      {"Games", 26574, 11752, 227774, "8.57", "99.93%"},
                      {"Yelp", 31350, 10562, 171835, "5.48", "99.95%"}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    const auto s = dataset_stats(r.users, r.items, r.interactions);
    ok = ok && s.avg_seq_len_text() == r.avg && s.sparsity_text() == r.sparsity;
    detail += std::string(detail.empty() ? "" : "; ") + r.name + " " + s.avg_seq_len_text() + " " + s.sparsity_text();
  }
  return {ok, detail};
}

Verdict alignment_descent() {
  const auto out = testing::run_alignment_descent(8, 4, 50);
  const bool ok = out.text_visual_after.positive > out.text_visual_before.positive &&
                  out.text_visual_after.negative < out.text_visual_before.negative &&
                  out.text_hybrid_after.positive > out.text_hybrid_before.positive &&
                  out.text_hybrid_after.negative < out.text_hybrid_before.negative;
  return {ok, "t-v positive " + num(out.text_visual_before.positive) + " -> " + num(out.text_visual_after.positive) +
                  ", negative " + num(out.text_visual_before.negative) + " -> " +
                  num(out.text_visual_after.negative) + "; t-h positive " + num(out.text_hybrid_before.positive) +
                  " -> " + num(out.text_hybrid_after.positive) + ", negative " +
                  num(out.text_hybrid_before.negative) + " -> " + num(out.text_hybrid_after.negative)};
}

// Settings for the fixture runs: 50 epochs at most.
RunConfig fixture_run(const Fixture& fx, const FixtureConfig& fc, BackboneKind kind, std::uint64_t seed,
                      const std::string& ablate) {
  RunConfig base;
  base.model.num_items = fx.dataset.num_items();
  base.model.input_dim = fc.semantics.dimension;
  return run_config_from_map({{"backbone", std::string(backbone_name(kind))},
                              {"width", "32"},
                              {"learning_rate", "0.01"},
                              {"batch_size", "32"},
                              {"max_epochs", "50"},
                              {"max_len", "20"},
                              {"dropout", "0.2"},
                              {"alpha", "0.1"},
                              {"tau", "2"},
                              {"seed", std::to_string(seed)},
                              {"ablate", ablate}},
                             base);
}

struct FixtureOutcome {
  FitResult fit;
  EvalReport test;
};

FixtureOutcome train_on(const Fixture& fx, const RunConfig& rc) {
  DmesrModel model(rc.model, fx.semantics);
  FixtureOutcome out;
  out.fit = fit(model, fx.split.train, fx.split.valid, rc.train);
  out.test = evaluate(model, fx.split.test, rc.train.eval_k, true);
  return out;
}

Verdict end_to_end() {
  const auto t0 = Clock::now();
  FixtureConfig fc;
  const Fixture fx = make_fixture(fc);
  bool ok = true;
  std::string detail;
  for (BackboneKind kind : {BackboneKind::self_attention, BackboneKind::recurrent}) {
    const auto out = train_on(fx, fixture_run(fx, fc, kind, 1, "none"));
    const double first = out.fit.log.front().loss.srs, last = out.fit.log.back().loss.srs;
    ok = ok && out.test.overall.hr >= 0.30 && last < first;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(backbone_name(kind)) + " test HR@10 " +
              num(out.test.overall.hr) + ", L_SRS " + num(first, 2) + " -> " + num(last, 2) + " in " +
              std::to_string(out.fit.log.size()) + " epochs";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 600.0, detail + ", " + num(secs, 1) + " s"};
}

Verdict ablation_ordering() {
  FixtureConfig fc;
  // Descriptions keep the cluster but lose most item detail; the original
  // text keeps it.
  fc.semantics.description_detail = 0.3;
  const Fixture fx = make_fixture(fc);
  double full = 0, no_ori = 0, no_cl = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    full += train_on(fx, fixture_run(fx, fc, BackboneKind::self_attention, seed, "none")).test.overall.hr / 3;
    no_ori += train_on(fx, fixture_run(fx, fc, BackboneKind::self_attention, seed, "no_ori_view")).test.overall.hr / 3;
    no_cl += train_on(fx, fixture_run(fx, fc, BackboneKind::self_attention, seed, "no_cl")).test.overall.hr / 3;
  }
  return {full >= no_ori && full >= no_cl, "mean test HR@10 over seeds 1-3: full " + num(full) + ", no_ori_view " +
                                                num(no_ori) + ", no_cl " + num(no_cl)};
}

Verdict determinism() {
  FixtureConfig fc;
  const Fixture fx = make_fixture(fc);
  auto rc = fixture_run(fx, fc, BackboneKind::self_attention, 9, "none");
  rc.train.max_epochs = 5;
  const auto a = train_on(fx, rc), b = train_on(fx, rc);
  bool logs = a.fit.log.size() == b.fit.log.size() && a.fit.best_epoch == b.fit.best_epoch;
  for (std::size_t i = 0; logs && i < a.fit.log.size(); ++i) {
    EpochRecord x = a.fit.log[i], y = b.fit.log[i];
    x.seconds = y.seconds = 0.0;  // wall time is the one field allowed to differ
    logs = x.to_json() == y.to_json();
  }
  bool reports = a.test.overall.hr == b.test.overall.hr && a.test.overall.ndcg == b.test.overall.ndcg &&
                 a.test.outcomes.size() == b.test.outcomes.size();
  for (std::size_t i = 0; reports && i < a.test.outcomes.size(); ++i) {
    const auto &x = a.test.outcomes[i], &y = b.test.outcomes[i];
    reports = x.user == y.user && x.target == y.target && x.rank == y.rank && x.scores == y.scores;
  }
  return {logs && reports, std::string("epoch logs ") + (logs ? "identical" : "differ") + ", reports " +
                               (reports ? "identical" : "differ") + " over " + std::to_string(a.fit.log.size()) +
                               " epochs and " + std::to_string(a.test.outcomes.size()) + " instances"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient suite", gradient_suite},
      {"equation oracles", equation_oracles},
      {"metric oracle", metric_oracle},
      {"dataset statistics", dataset_table},
      {"alignment descent", alignment_descent},
      {"end-to-end smoke", end_to_end},
      {"ablation ordering", ablation_ordering},
      {"determinism", determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %zu %-20s %s  %s\n", i + 1, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
