// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "dmesr/checkpoint.hpp"
#include "dmesr/error.hpp"
#include "dmesr/ops.hpp"
#include "dmesr/optim.hpp"
#include "gradcheck.hpp"

using namespace dmesr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({r, c});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Independent triple-loop product used as the oracle for matmul.
std::vector<std::vector<double>> triple_loop(const std::vector<std::vector<double>>& a,
                                             const std::vector<std::vector<double>>& b) {
  std::vector<std::vector<double>> c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Tensor b = Tensor::from_rows({{3, 4}, {5, 6}});
  const Tensor id = Tensor::identity(2);
  const Var out = matmul(constant(id), constant(b));
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.value()[i] == b[i]);

  const Var zero = matmul(constant(Tensor::zeros(2, 2)), constant(b));
  for (double v : zero.value().data()) CHECK(v == 0.0);

  const std::vector<std::vector<double>> a_rows{{0.3, -1.2, 2.0}, {1.5, 0.7, -0.4}};
  const std::vector<std::vector<double>> b_rows{{1.1, -0.5}, {0.2, 0.9}, {-1.3, 0.6}};
  const auto expected = triple_loop(a_rows, b_rows);
  const Tensor a = Tensor::from_rows({{0.3, -1.2, 2.0}, {1.5, 0.7, -0.4}});
  const Tensor bb = Tensor::from_rows({{1.1, -0.5}, {0.2, 0.9}, {-1.3, 0.6}});
  const Var got = matmul(constant(a), constant(bb));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(got.value().at(i, j) == doctest::Approx(expected[i][j]).epsilon(1e-15));
}

TEST_CASE("matmul rejects mismatched shapes and reports both") {
  try {
    matmul(constant(Tensor::zeros(2, 3)), constant(Tensor::zeros(2, 3)));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax_rows examples") {
  const Tensor s = softmax_rows(Tensor::from_rows({{0, 0, 0, 0}}));
  for (double v : s.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor t = softmax_rows(Tensor::from_rows({{std::log(2.0), 0.0}}));
  CHECK(t[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(t[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const Tensor m = softmax_rows(Tensor::from_rows({{-kInf, 0.0}}));
  CHECK(m[0] == 0.0);
  CHECK(m[1] == 1.0);

  const Tensor all_masked = softmax_rows(Tensor::from_rows({{-kInf, -kInf, -kInf}}));
  for (double v : all_masked.data()) CHECK(v == 0.0);
}

TEST_CASE("softmax_rows properties on random rows") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 9;
    Tensor x = random_tensor(3, n, rng, -20, 20);
    const Tensor y = softmax_rows(x);
    Tensor shifted = x;
    for (std::size_t c = 0; c < n; ++c) shifted.at(1, c) += 13.75;
    const Tensor ys = softmax_rows(shifted);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        CHECK(y.at(r, c) >= 0.0);
        total += y.at(r, c);
        CHECK(ys.at(r, c) == doctest::Approx(y.at(r, c)).epsilon(1e-9));
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("cosine_sim examples and properties") {
  const std::vector<double> a{1.5, -2.0, 0.5};
  CHECK(cosine_sim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{1, 1}) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(cosine_sim(std::vector<double>{0, 0}, std::vector<double>{0, 0}) == 0.0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3), pos(0.01, 50);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(5), y(5);
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = u(rng);
    const double s = cosine_sim(x, y);
    CHECK(s == doctest::Approx(cosine_sim(y, x)).epsilon(1e-15));
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s >= -1.0 - 1e-12);
    const double alpha = pos(rng);
    std::vector<double> xs = x;
    for (auto& v : xs) v *= alpha;
    CHECK(std::abs(cosine_sim(xs, y) - s) <= 1e-9);
  }
}

TEST_CASE("backward on x^2") {
  Parameter x("x", Tensor::scalar(3.0));
  backward(mul(x.var(), x.var()));
  CHECK(x.grad().item() == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Parameter x("x", Tensor::zeros(2, 2));
  CHECK_THROWS_AS(backward(x.var()), ShapeError);
}

TEST_CASE("sum(softmax_rows(W x)) matches finite differences") {
  std::mt19937_64 rng(3);
  Parameter w("W", random_tensor(4, 3, rng));
  Parameter x("x", random_tensor(3, 2, rng));
  // Weight the softmax outputs so the loss is not trivially constant.
  const Var weights = constant(random_tensor(4, 2, rng));
  auto loss = [&] { return sum(mul(softmax_rows(transpose(matmul(w.var(), x.var()))), transpose(weights))); };
  const auto res = testing::check_gradients({&w, &x}, loss);
  CHECK_MESSAGE(res.max_rel_error <= 1e-4, res.worst);
}

TEST_CASE("gradient fidelity of every primitive on random shapes") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t m = 1 + trial % 3, n = 2 + trial % 4, k = 1 + (trial * 7) % 5;
    Parameter a("a", random_tensor(m, n, rng));
    Parameter b("b", random_tensor(n, k, rng));
    Parameter c("c", random_tensor(m, n, rng));
    Parameter row("row", random_tensor(1, n, rng));
    Parameter col("col", random_tensor(m, 1, rng));
    Parameter pos("pos", random_tensor(m, n, rng, 0.5, 2.0));
    Parameter gain("gain", random_tensor(1, n, rng, 0.5, 1.5));
    Parameter bias("bias", random_tensor(1, n, rng));
    const Var probe = constant(random_tensor(m, n, rng));
    const std::vector<std::size_t> idx{m - 1, 0, m - 1};
    auto weighted = [&](const Var& v) {
      // Random linear functional of a m x n result.
      return sum(mul(v, probe));
    };

    const std::vector<std::pair<std::string, std::function<Var()>>> cases{
        {"matmul", [&] { return sum(matmul(a.var(), b.var())); }},
        {"matmul_nt", [&] { return sum(mul(matmul_nt(a.var(), c.var()), matmul_nt(c.var(), a.var()))); }},
        {"add_row", [&] { return weighted(mul(add(a.var(), row.var()), a.var())); }},
        {"sub_col", [&] { return weighted(mul(sub(a.var(), col.var()), c.var())); }},
        {"mul", [&] { return weighted(mul(a.var(), c.var())); }},
        {"sigmoid", [&] { return weighted(sigmoid(a.var())); }},
        {"tanh", [&] { return weighted(tanh(a.var())); }},
        {"relu", [&] { return weighted(relu(a.var())); }},
        {"exp", [&] { return weighted(exp(a.var())); }},
        {"log", [&] { return weighted(log(pos.var())); }},
        {"log_clamped", [&] { return weighted(log_clamped(pos.var(), 0.1, 10.0)); }},
        {"softmax", [&] { return weighted(softmax_rows(a.var())); }},
        {"logsumexp", [&] { return sum(mul(logsumexp_rows(a.var()), col.var())); }},
        {"mean", [&] { return mean(mul(a.var(), a.var())); }},
        {"row_sums", [&] { return sum(mul(row_sums(mul(a.var(), c.var())), col.var())); }},
        {"concat", [&] { return sum(mul(concat_cols(a.var(), c.var()), concat_cols(c.var(), a.var()))); }},
        {"stack", [&] { return sum(mul(stack_rows({a.var(), row.var()}), stack_rows({c.var(), row.var()}))); }},
        {"gather", [&] { return sum(mul(gather_rows(a.var(), idx), gather_rows(c.var(), idx))); }},
        {"slice_rows", [&] { return sum(mul(slice_rows(a.var(), m - 1, 1), row.var())); }},
        {"slice_cols", [&] { return sum(mul(slice_cols(a.var(), 1, n - 1), slice_cols(c.var(), 0, n - 1))); }},
        {"diagonal", [&] { return sum(mul(diagonal(matmul_nt(a.var(), c.var())), col.var())); }},
        {"layer_norm", [&] { return weighted(layer_norm_rows(a.var(), gain.var(), bias.var())); }},
        {"cosine", [&] { return sum(mul(cosine_matrix(a.var(), c.var()), matmul_nt(c.var(), a.var()))); }},
        {"scale_shift", [&] { return weighted(add_scalar(scale(a.var(), -2.5), 0.3)); }},
    };
    for (const auto& [name, fn] : cases) {
      CAPTURE(name);
      const auto res = testing::check_gradients({&a, &b, &c, &row, &col, &pos, &gain, &bias}, fn);
      CHECK_MESSAGE(res.max_rel_error <= 1e-4, name << ": " << res.worst);
    }
  }
}

TEST_CASE("masked softmax passes no gradient to masked entries") {
  Parameter a("a", Tensor::from_rows({{0.2, 0.7, -0.1}}));
  const Var mask = constant(Tensor::from_rows({{0.0, -kInf, 0.0}}));
  backward(sum(mul(softmax_rows(add(a.var(), mask)), constant(Tensor::from_rows({{1.0, 2.0, 3.0}})))));
  CHECK(a.grad()[1] == 0.0);
  CHECK(a.grad()[0] != 0.0);
}

TEST_CASE("adam_step examples") {
  Parameter p("p", Tensor::scalar(1.25));
  adam_step({&p}, AdamConfig{0.1});
  CHECK(p.value().item() == 1.25);

  Parameter q("q", Tensor::scalar(2.0));
  q.mutable_grad()[0] = 1.0;
  adam_step({&q}, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  CHECK(q.value().item() == doctest::Approx(1.9).epsilon(1e-6));
  CHECK(q.grad().item() == 0.0);

  Parameter x("x", Tensor::scalar(5.0));
  for (int i = 0; i < 200; ++i) {
    backward(mul(x.var(), x.var()));
    adam_step({&x}, AdamConfig{0.1});
  }
  CHECK(std::abs(x.value().item()) < 0.1);
}

TEST_CASE("gradient clipping bounds the joint norm") {
  Parameter a("a", Tensor::zeros(1, 2));
  Parameter b("b", Tensor::zeros(1, 1));
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  b.mutable_grad()[0] = 12.0;
  CHECK(clip_grad_norm({&a, &b}, 5.0) == doctest::Approx(13.0));
  CHECK(a.grad()[0] == doctest::Approx(15.0 / 13.0));
  CHECK(b.grad()[0] == doctest::Approx(60.0 / 13.0));
}

TEST_CASE("forward values are bit-identical for identical seeds") {
  auto run = [] {
    std::mt19937_64 rng(99);
    const Var a = constant(random_tensor(4, 5, rng));
    const Var b = constant(random_tensor(5, 3, rng));
    return dropout(softmax_rows(matmul(a, b)), 0.3, rng).value();
  };
  const Tensor x = run(), y = run();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
}

TEST_CASE("checkpoint round trip and corruption") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "dmesr_test_checkpoint";
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  Parameter w("adapter.text.W1", Tensor::from_rows({{0.5, -1.25}, {2.0, 3.5}}));
  Parameter bvec("adapter.text.b1", Tensor({3}, {1.0, 2.0, 3.0}));
  Checkpoint cp = snapshot({&w, &bvec});
  cp.metadata["backbone.kind"] = "recurrent";
  save_checkpoint(path, cp);

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.metadata.at("backbone.kind") == "recurrent");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[1].second.shape() == std::vector<std::size_t>{3});

  Parameter w2("adapter.text.W1", Tensor::zeros(2, 2));
  Parameter b2("adapter.text.b1", Tensor({3}));
  restore({&w2, &b2}, back);
  for (std::size_t i = 0; i < 4; ++i) CHECK(w2.value()[i] == w.value()[i]);

  Parameter wrong("adapter.text.W1", Tensor::zeros(3, 2));
  CHECK_THROWS_AS(restore({&wrong}, back), ShapeError);

  auto bytes = std::filesystem::file_size(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(bytes / 2));
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_checkpoint(path), CorruptRecord);
  fs::resize_file(path, 10);
  CHECK_THROWS_AS(load_checkpoint(path), CorruptRecord);
  fs::remove_all(dir);
}
