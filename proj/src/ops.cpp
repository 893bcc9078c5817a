// SPDX-License-Identifier: Apache-2.0
#include "dmesr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmesr/error.hpp"

namespace dmesr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kCosineEps = 1e-12;

std::string shapes(const Var& a, const Var& b) {
  return a.value().shape_string() + " and " + b.value().shape_string();
}

// Broadcast kinds for the second operand of a binary op.
enum class Broadcast { same, row, col, scalar };

Broadcast classify(const Tensor& a, const Tensor& b, const char* op) {
  const auto m = a.rows(), n = a.cols(), br = b.rows(), bc = b.cols();
  if (br == m && bc == n) return Broadcast::same;
  if (br == 1 && bc == 1) return Broadcast::scalar;
  if (br == 1 && bc == n) return Broadcast::row;
  if (br == m && bc == 1) return Broadcast::col;
  throw ShapeError(std::string(op) + ": cannot broadcast " + b.shape_string() + " onto " + a.shape_string());
}

inline std::size_t bindex(Broadcast kind, std::size_t r, std::size_t c, std::size_t n) {
  switch (kind) {
    case Broadcast::same: return r * n + c;
    case Broadcast::row: return c;
    case Broadcast::col: return r;
    case Broadcast::scalar: return 0;
  }
  return 0;
}

template <typename Fwd, typename DA, typename DB>
Var binary(const Var& a, const Var& b, const char* op, Fwd fwd, DA da, DB db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto kind = classify(av, bv, op);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = fwd(av[r * n + c], bv[bindex(kind, r, c, n)]);
    }
  }
  return Var::from_op(std::move(out), {a, b},
                      [a, b, kind, m, n, da, db](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                        const Tensor& av = a.value();
                        const Tensor& bv = b.value();
                        for (std::size_t r = 0; r < m; ++r) {
                          for (std::size_t c = 0; c < n; ++c) {
                            const std::size_t i = r * n + c;
                            const std::size_t j = bindex(kind, r, c, n);
                            if (grads[0]) (*grads[0])[i] += g[i] * da(av[i], bv[j]);
                            if (grads[1]) (*grads[1])[j] += g[i] * db(av[i], bv[j]);
                          }
                        }
                      });
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out({av.rows(), av.cols()});
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return Var::from_op(std::move(out), {a},
                      [a, deriv](const Tensor& out, const Tensor& g, std::span<Tensor* const> grads) {
                        const Tensor& av = a.value();
                        for (std::size_t i = 0; i < av.size(); ++i) (*grads[0])[i] += g[i] * deriv(av[i], out[i]);
                      });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul inner extents disagree: " + shapes(a, b));
  Tensor out = matmul(a.value(), b.value());
  return Var::from_op(std::move(out), {a, b}, [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (grads[0]) {  // dA = G B^T
      Tensor& ga = *grads[0];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (grads[1]) {  // dB = A^T G
      Tensor& gb = *grads[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt column extents disagree: " + shapes(a, b));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = dot(av.row(i), bv.row(j));
  return Var::from_op(std::move(out), {a, b},
                      [a, b, m, k, n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                        const Tensor& av = a.value();
                        const Tensor& bv = b.value();
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j) {
                            const double gij = g[i * n + j];
                            if (gij == 0.0) continue;
                            if (grads[0])
                              for (std::size_t p = 0; p < k; ++p) (*grads[0])[i * k + p] += gij * bv[j * k + p];
                            if (grads[1])
                              for (std::size_t p = 0; p < k; ++p) (*grads[1])[j * k + p] += gij * av[i * k + p];
                          }
                      });
}

Var transpose(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return Var::from_op(std::move(out), {a}, [m, n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*grads[0])[i * n + j] += g[j * m + i];
  });
}

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(const Var& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var log_clamped(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::log(std::clamp(x, lo, hi)); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 / x : 0.0; });
}

Var softmax_rows(const Var& a) {
  Tensor out = softmax_rows(a.value());
  return Var::from_op(std::move(out), {a}, [](const Tensor& y, const Tensor& g, std::span<Tensor* const> grads) {
    const std::size_t m = y.rows(), n = y.cols();
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) (*grads[0])[r * n + c] += y[r * n + c] * (g[r * n + c] - s);
    }
  });
}

Var logsumexp_rows(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    auto row = av.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    if (mx == kNegInf) {
      out[r] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (double v : row) s += v == kNegInf ? 0.0 : std::exp(v - mx);
    out[r] = mx + std::log(s);
  }
  return Var::from_op(std::move(out), {a}, [a, m, n](const Tensor& y, const Tensor& g, std::span<Tensor* const> grads) {
    const Tensor& av = a.value();
    for (std::size_t r = 0; r < m; ++r) {
      if (y[r] == kNegInf) continue;
      for (std::size_t c = 0; c < n; ++c) {
        const double v = av[r * n + c];
        if (v != kNegInf) (*grads[0])[r * n + c] += g[r] * std::exp(v - y[r]);
      }
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Var::from_op(Tensor::scalar(s), {a}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
    for (auto& v : grads[0]->data()) v += g[0];
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sums(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, 1});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r] += av[r * n + c];
  return Var::from_op(std::move(out), {a}, [m, n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) (*grads[0])[r * n + c] += g[r];
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols row extents disagree: " + shapes(a, b));
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
  Tensor out({m, na + nb});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(a.value().row(r).begin(), na, out.row(r).begin());
    std::copy_n(b.value().row(r).begin(), nb, out.row(r).begin() + static_cast<std::ptrdiff_t>(na));
  }
  return Var::from_op(std::move(out), {a, b},
                      [m, na, nb](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                        const std::size_t n = na + nb;
                        for (std::size_t r = 0; r < m; ++r) {
                          if (grads[0])
                            for (std::size_t c = 0; c < na; ++c) (*grads[0])[r * na + c] += g[r * n + c];
                          if (grads[1])
                            for (std::size_t c = 0; c < nb; ++c) (*grads[1])[r * nb + c] += g[r * n + na + c];
                        }
                      });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows of an empty list");
  const std::size_t n = rows.front().cols();
  std::size_t m = 0;
  for (const auto& r : rows) {
    if (r.cols() != n) throw ShapeError("stack_rows column extents disagree: " + shapes(rows.front(), r));
    m += r.rows();
  }
  Tensor out({m, n});
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& r : rows) {
    offsets.push_back(at);
    std::copy(r.value().data().begin(), r.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += r.value().size();
  }
  return Var::from_op(std::move(out), rows,
                      [offsets](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                        for (std::size_t i = 0; i < grads.size(); ++i) {
                          if (!grads[i]) continue;
                          auto& gi = *grads[i];
                          for (std::size_t j = 0; j < gi.size(); ++j) gi[j] += g[offsets[i] + j];
                        }
                      });
}

Var gather_rows(const Var& a, std::span<const std::size_t> indices) {
  const Tensor& av = a.value();
  const std::size_t n = av.cols();
  if (indices.empty()) throw ShapeError("gather_rows with no indices");
  Tensor out({indices.size(), n});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.rows()) {
      throw ShapeError("gather_rows index " + std::to_string(indices[i]) + " out of range for " + av.shape_string());
    }
    std::copy_n(av.row(indices[i]).begin(), n, out.row(i).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Var::from_op(std::move(out), {a}, [idx, n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) (*grads[0])[idx[i] * n + c] += g[i * n + c];
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || begin + count > av.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                     av.shape_string());
  }
  const std::size_t n = av.cols();
  Tensor out({count, n});
  std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(begin * n), count * n, out.data().begin());
  return Var::from_op(std::move(out), {a},
                      [begin, n](const Tensor& y, const Tensor& g, std::span<Tensor* const> grads) {
                        for (std::size_t i = 0; i < y.size(); ++i) (*grads[0])[begin * n + i] += g[i];
                      });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || begin + count > av.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                     av.shape_string());
  }
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, count});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = av[r * n + begin + c];
  return Var::from_op(std::move(out), {a},
                      [m, n, begin, count](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                        for (std::size_t r = 0; r < m; ++r)
                          for (std::size_t c = 0; c < count; ++c) (*grads[0])[r * n + begin + c] += g[r * count + c];
                      });
}

Var diagonal(const Var& a) {
  const Tensor& av = a.value();
  if (av.rows() != av.cols()) throw ShapeError("diagonal of non-square " + av.shape_string());
  const std::size_t n = av.rows();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i * n + i];
  return Var::from_op(std::move(out), {a}, [n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < n; ++i) (*grads[0])[i * n + i] += g[i];
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ShapeError("layer_norm_rows: gain/bias " + shapes(gain, bias) + " for input " + av.shape_string());
  }
  Tensor normed({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    auto row = av.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) normed[r * n + c] = (row[c] - mu) * inv_std[r];
  }
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out[r * n + c] = normed[r * n + c] * gain.value()[c] + bias.value()[c];
  return Var::from_op(
      std::move(out), {a, gain, bias},
      [gain, normed = std::move(normed), inv_std = std::move(inv_std), m, n](
          const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        const Tensor& gv = gain.value();
        for (std::size_t r = 0; r < m; ++r) {
          if (grads[0]) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double gg = g[r * n + c] * gv[c];
              mean_g += gg;
              mean_gx += gg * normed[r * n + c];
            }
            mean_g /= static_cast<double>(n);
            mean_gx /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const double gg = g[r * n + c] * gv[c];
              (*grads[0])[r * n + c] += inv_std[r] * (gg - mean_g - normed[r * n + c] * mean_gx);
            }
          }
          for (std::size_t c = 0; c < n; ++c) {
            if (grads[1]) (*grads[1])[c] += g[r * n + c] * normed[r * n + c];
            if (grads[2]) (*grads[2])[c] += g[r * n + c];
          }
        }
      });
}

Var dropout(const Var& a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw Error("dropout rate must be below 1");
  const Tensor& av = a.value();
  Tensor mask({av.rows(), av.cols()});
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (auto& v : mask.data()) v = keep(rng) ? s : 0.0;
  return mul(a, constant(std::move(mask)));
}

Var cosine_matrix(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("cosine_matrix width mismatch: " + shapes(a, b));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), n = bv.rows(), d = av.cols();
  std::vector<double> na(m), nb(n);
  for (std::size_t i = 0; i < m; ++i) na[i] = norm(av.row(i));
  for (std::size_t k = 0; k < n; ++k) nb[k] = norm(bv.row(k));
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < n; ++k) out[i * n + k] = dot(av.row(i), bv.row(k)) / (na[i] * nb[k] + kCosineEps);
  return Var::from_op(
      std::move(out), {a, b},
      [a, b, na = std::move(na), nb = std::move(nb), m, n, d](const Tensor& s, const Tensor& g,
                                                              std::span<Tensor* const> grads) {
        // dS/da = b / D - S * |b| * a / (|a| D), with D = |a||b| + eps.
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const double gik = g[i * n + k];
            if (gik == 0.0) continue;
            const double denom = na[i] * nb[k] + kCosineEps;
            const double sik = s[i * n + k];
            if (grads[0]) {
              const double ca = na[i] > 0 ? sik * nb[k] / (na[i] * denom) : 0.0;
              for (std::size_t p = 0; p < d; ++p)
                (*grads[0])[i * d + p] += gik * (bv[k * d + p] / denom - ca * av[i * d + p]);
            }
            if (grads[1]) {
              const double cb = nb[k] > 0 ? sik * na[i] / (nb[k] * denom) : 0.0;
              for (std::size_t p = 0; p < d; ++p)
                (*grads[1])[k * d + p] += gik * (av[i * d + p] / denom - cb * bv[k * d + p]);
            }
          }
      });
}

}  // namespace dmesr
