#include "mmer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace mmer::nn {

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                              shape_str(b));
}

// ---------------------------------------------------------------- kernels

// c (M,N) = a (M,K) * b (K,N)
template <class S>
void mm(const S* a, const S* b, S* c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    S* ci = c + i * N;
    std::fill(ci, ci + N, S(0));
    const S* ai = a + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const S aik = ai[k];
      const S* bk = b + k * N;
      for (int64_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c (M,N) += a (M,K) * b (K,N)
template <class S>
void mm_acc(const S* a, const S* b, S* c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    S* ci = c + i * N;
    const S* ai = a + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const S aik = ai[k];
      const S* bk = b + k * N;
      for (int64_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c (M,K) += a (M,N) * b^T where b is (K,N)
template <class S>
void mm_bt_acc(const S* a, const S* b, S* c, int64_t M, int64_t N, int64_t K) {
  for (int64_t i = 0; i < M; ++i) {
    const S* ai = a + i * N;
    S* ci = c + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const S* bk = b + k * N;
      S acc = S(0);
      for (int64_t j = 0; j < N; ++j) acc += ai[j] * bk[j];
      ci[k] += acc;
    }
  }
}

template <class S>
void transpose2d(const S* a, S* at, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
}

// ------------------------------------------------------------ broadcasting

struct BcastPlan {
  Shape out;
  std::vector<int64_t> stride_a, stride_b;  // per output dim; 0 marks broadcast
  int64_t numel = 0;
  bool same_shape = false;
};

BcastPlan make_bcast(const char* op, const Shape& a, const Shape& b) {
  BcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.numel = shape_numel(a);
    plan.same_shape = true;
    return plan;
  }
  const size_t rank = std::max(a.size(), b.size());
  plan.out.resize(rank);
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);

  // Right-aligned dims; compute row-major strides then zero the broadcast
  // ones.
  std::vector<int64_t> full_a(rank, 1), full_b(rank, 1);
  std::copy(a.begin(), a.end(), full_a.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), full_b.begin() + (rank - b.size()));
  for (size_t i = 0; i < rank; ++i) {
    if (full_a[i] != full_b[i] && full_a[i] != 1 && full_b[i] != 1) shape_error(op, a, b);
    plan.out[i] = std::max(full_a[i], full_b[i]);
  }
  int64_t sa = 1, sb = 1;
  for (size_t i = rank; i-- > 0;) {
    plan.stride_a[i] = full_a[i] == 1 ? 0 : sa;
    plan.stride_b[i] = full_b[i] == 1 ? 0 : sb;
    sa *= full_a[i];
    sb *= full_b[i];
  }
  plan.numel = shape_numel(plan.out);
  return plan;
}

// Calls fn(flat_out, flat_a, flat_b) over the whole broadcast output.
template <class F>
void bcast_foreach(const BcastPlan& plan, F&& fn) {
  const size_t rank = plan.out.size();
  std::vector<int64_t> counter(rank, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < plan.numel; ++i) {
    fn(i, ia, ib);
    for (size_t d = rank; d-- > 0;) {
      ++counter[d];
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (counter[d] < plan.out[d]) break;
      counter[d] = 0;
      ia -= plan.stride_a[d] * plan.out[d];
      ib -= plan.stride_b[d] * plan.out[d];
    }
  }
}

enum class BinOp { add, sub, mul };

template <class S>
TensorT<S> binary_broadcast(const char* name, BinOp op, const TensorT<S>& a, const TensorT<S>& b) {
  const BcastPlan plan = make_bcast(name, a.shape(), b.shape());
  std::vector<S> out(plan.numel);
  const auto& da = a.data();
  const auto& db = b.data();

  if (plan.same_shape) {
    switch (op) {
      case BinOp::add:
        for (int64_t i = 0; i < plan.numel; ++i) out[i] = da[i] + db[i];
        break;
      case BinOp::sub:
        for (int64_t i = 0; i < plan.numel; ++i) out[i] = da[i] - db[i];
        break;
      case BinOp::mul:
        for (int64_t i = 0; i < plan.numel; ++i) out[i] = da[i] * db[i];
        break;
    }
  } else {
    bcast_foreach(plan, [&](int64_t i, int64_t ia, int64_t ib) {
      switch (op) {
        case BinOp::add: out[i] = da[ia] + db[ib]; break;
        case BinOp::sub: out[i] = da[ia] - db[ib]; break;
        case BinOp::mul: out[i] = da[ia] * db[ib]; break;
      }
    });
  }

  Shape out_shape = plan.out;
  return TensorT<S>::make_node(
      std::move(out_shape), std::move(out), {a, b},
      [name, op, a, b, plan](typename TensorT<S>::Node& o) mutable {
        const auto& g = o.grad;
        if (plan.same_shape) {
          if (a.requires_grad()) {
            auto& ga = a.grad();
            if (op == BinOp::mul) {
              const auto& db2 = b.data();
              for (int64_t i = 0; i < plan.numel; ++i) ga[i] += g[i] * db2[i];
            } else {
              for (int64_t i = 0; i < plan.numel; ++i) ga[i] += g[i];
            }
          }
          if (b.requires_grad()) {
            auto& gb = b.grad();
            switch (op) {
              case BinOp::add:
                for (int64_t i = 0; i < plan.numel; ++i) gb[i] += g[i];
                break;
              case BinOp::sub:
                for (int64_t i = 0; i < plan.numel; ++i) gb[i] -= g[i];
                break;
              case BinOp::mul: {
                const auto& da2 = a.data();
                for (int64_t i = 0; i < plan.numel; ++i) gb[i] += g[i] * da2[i];
                break;
              }
            }
          }
          return;
        }
        const bool need_a = a.requires_grad();
        const bool need_b = b.requires_grad();
        auto* ga = need_a ? &a.grad() : nullptr;
        auto* gb = need_b ? &b.grad() : nullptr;
        const auto& da2 = a.data();
        const auto& db2 = b.data();
        bcast_foreach(plan, [&](int64_t i, int64_t ia, int64_t ib) {
          switch (op) {
            case BinOp::add:
              if (need_a) (*ga)[ia] += g[i];
              if (need_b) (*gb)[ib] += g[i];
              break;
            case BinOp::sub:
              if (need_a) (*ga)[ia] += g[i];
              if (need_b) (*gb)[ib] -= g[i];
              break;
            case BinOp::mul:
              if (need_a) (*ga)[ia] += g[i] * db2[ib];
              if (need_b) (*gb)[ib] += g[i] * da2[ia];
              break;
          }
        });
      });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ------------------------------------------------------------- elementwise

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_broadcast("add", BinOp::add, a, b);
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_broadcast("sub", BinOp::sub, a, b);
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_broadcast("mul", BinOp::mul, a, b);
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S factor) {
  std::vector<S> out(a.data());
  for (auto& v : out) v *= factor;
  return TensorT<S>::make_node(a.shape(), std::move(out), {a},
                               [a, factor](typename TensorT<S>::Node& o) mutable {
                                 if (!a.requires_grad()) return;
                                 auto& ga = a.grad();
                                 for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * factor;
                               });
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  std::vector<S> out(a.data());
  for (auto& v : out) v = std::max(v, S(0));
  return TensorT<S>::make_node(a.shape(), std::move(out), {a},
                               [a](typename TensorT<S>::Node& o) mutable {
                                 if (!a.requires_grad()) return;
                                 auto& ga = a.grad();
                                 const auto& da = a.data();
                                 for (size_t i = 0; i < ga.size(); ++i)
                                   if (da[i] > S(0)) ga[i] += o.grad[i];
                               });
}

template <class S>
TensorT<S> gelu(const TensorT<S>& a) {
  std::vector<S> out(a.data());
  for (auto& v : out) {
    const double x = static_cast<double>(v);
    v = static_cast<S>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
  }
  return TensorT<S>::make_node(
      a.shape(), std::move(out), {a}, [a](typename TensorT<S>::Node& o) mutable {
        if (!a.requires_grad()) return;
        auto& ga = a.grad();
        const auto& da = a.data();
        for (size_t i = 0; i < ga.size(); ++i) {
          const double x = static_cast<double>(da[i]);
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          ga[i] += o.grad[i] * static_cast<S>(cdf + x * pdf);
        }
      });
}

template <class S>
TensorT<S> softmax_lastdim(const TensorT<S>& a) {
  const int64_t d = a.shape().back();
  const int64_t rows = a.numel() / d;
  std::vector<S> out(a.data());
  for (int64_t r = 0; r < rows; ++r) {
    S* row = out.data() + r * d;
    S mx = row[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, row[i]);
    S sum = S(0);
    for (int64_t i = 0; i < d; ++i) {
      row[i] = std::exp(row[i] - mx);
      sum += row[i];
    }
    const S inv = S(1) / sum;
    for (int64_t i = 0; i < d; ++i) row[i] *= inv;
  }
  return TensorT<S>::make_node(a.shape(), std::move(out), {a},
                               [a, d, rows](typename TensorT<S>::Node& o) mutable {
                                 if (!a.requires_grad()) return;
                                 auto& ga = a.grad();
                                 for (int64_t r = 0; r < rows; ++r) {
                                   const S* y = o.data.data() + r * d;
                                   const S* g = o.grad.data() + r * d;
                                   S dot = S(0);
                                   for (int64_t i = 0; i < d; ++i) dot += g[i] * y[i];
                                   S* gr = ga.data() + r * d;
                                   for (int64_t i = 0; i < d; ++i) gr[i] += (g[i] - dot) * y[i];
                                 }
                               });
}

template <class S>
TensorT<S> layer_norm_lastdim(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                              S eps) {
  const int64_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw std::invalid_argument("layer_norm: affine params must have " + std::to_string(d) +
                                " entries, got " + shape_str(gamma.shape()) + " and " +
                                shape_str(beta.shape()));
  const int64_t rows = x.numel() / d;

  std::vector<S> out(x.numel());
  // Saved statistics for the backward pass.
  auto inv_std = std::make_shared<std::vector<S>>(rows);
  auto means = std::make_shared<std::vector<S>>(rows);
  const auto& dx = x.data();
  const auto& g = gamma.data();
  const auto& b = beta.data();
  for (int64_t r = 0; r < rows; ++r) {
    const S* row = dx.data() + r * d;
    S mean = S(0);
    for (int64_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (int64_t i = 0; i < d; ++i) {
      const S c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S is = S(1) / std::sqrt(var + eps);
    (*means)[r] = mean;
    (*inv_std)[r] = is;
    S* orow = out.data() + r * d;
    for (int64_t i = 0; i < d; ++i) orow[i] = (row[i] - mean) * is * g[i] + b[i];
  }

  return TensorT<S>::make_node(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, means, inv_std, d, rows](typename TensorT<S>::Node& o) mutable {
        const auto& dx2 = x.data();
        const auto& gm = gamma.data();
        const bool need_x = x.requires_grad();
        auto* gx = need_x ? &x.grad() : nullptr;
        auto* gg = gamma.requires_grad() ? &gamma.grad() : nullptr;
        auto* gb = beta.requires_grad() ? &beta.grad() : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
          const S* row = dx2.data() + r * d;
          const S* go = o.grad.data() + r * d;
          const S mean = (*means)[r];
          const S is = (*inv_std)[r];
          // dxhat and the two reduction terms of the standard formula.
          S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
          for (int64_t i = 0; i < d; ++i) {
            const S xhat = (row[i] - mean) * is;
            const S dxhat = go[i] * gm[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (gg) (*gg)[i] += go[i] * xhat;
            if (gb) (*gb)[i] += go[i];
          }
          if (need_x) {
            S* grow = gx->data() + r * d;
            const S inv_d = S(1) / static_cast<S>(d);
            for (int64_t i = 0; i < d; ++i) {
              const S xhat = (row[i] - mean) * is;
              const S dxhat = go[i] * gm[i];
              grow[i] += is * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
            }
          }
        }
      });
}

// ------------------------------------------------------------------ shape

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  std::vector<S> out(a.data());
  return TensorT<S>::make_node(std::move(shape), std::move(out), {a},
                               [a](typename TensorT<S>::Node& o) mutable {
                                 if (!a.requires_grad()) return;
                                 auto& ga = a.grad();
                                 for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
                               });
}

namespace {

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (size_t i = shape.size() - 1; i-- > 0;) strides[i] = strides[i + 1] * shape[i + 1];
  return strides;
}

}  // namespace

template <class S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<size_t>& dims) {
  const auto& in_shape = a.shape();
  if (dims.size() != in_shape.size())
    throw std::invalid_argument("permute: rank mismatch for " + shape_str(in_shape));
  Shape out_shape(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) out_shape[i] = in_shape[dims[i]];

  const auto in_strides = row_major_strides(in_shape);
  // stride in the input for each output dim
  std::vector<int64_t> strides(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) strides[i] = in_strides[dims[i]];

  const int64_t n = a.numel();
  std::vector<S> out(n);
  const auto& da = a.data();
  const size_t rank = dims.size();
  std::vector<int64_t> counter(rank, 0);
  int64_t src = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = da[src];
    for (size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += strides[d];
      if (counter[d] < out_shape[d]) break;
      counter[d] = 0;
      src -= strides[d] * out_shape[d];
    }
  }

  return TensorT<S>::make_node(
      std::move(out_shape), std::move(out), {a},
      [a, strides](typename TensorT<S>::Node& o) mutable {
        if (!a.requires_grad()) return;
        auto& ga = a.grad();
        const size_t rank2 = o.shape.size();
        std::vector<int64_t> counter2(rank2, 0);
        int64_t src = 0;
        const int64_t n2 = static_cast<int64_t>(o.grad.size());
        for (int64_t i = 0; i < n2; ++i) {
          ga[src] += o.grad[i];
          for (size_t d = rank2; d-- > 0;) {
            ++counter2[d];
            src += strides[d];
            if (counter2[d] < o.shape[d]) break;
            counter2[d] = 0;
            src -= strides[d] * o.shape[d];
          }
        }
      });
}

template <class S>
TensorT<S> concat_lastdim(const TensorT<S>& a, const TensorT<S>& b) {
  Shape lead_a(a.shape().begin(), a.shape().end() - 1);
  Shape lead_b(b.shape().begin(), b.shape().end() - 1);
  if (lead_a != lead_b) shape_error("concat_lastdim", a.shape(), b.shape());
  const int64_t da = a.shape().back(), db = b.shape().back();
  const int64_t rows = a.numel() / da;

  Shape out_shape = a.shape();
  out_shape.back() = da + db;
  std::vector<S> out(rows * (da + db));
  for (int64_t r = 0; r < rows; ++r) {
    std::memcpy(out.data() + r * (da + db), a.data().data() + r * da, da * sizeof(S));
    std::memcpy(out.data() + r * (da + db) + da, b.data().data() + r * db, db * sizeof(S));
  }
  return TensorT<S>::make_node(std::move(out_shape), std::move(out), {a, b},
                               [a, b, rows, da, db](typename TensorT<S>::Node& o) mutable {
                                 const int64_t stride = da + db;
                                 if (a.requires_grad()) {
                                   auto& ga = a.grad();
                                   for (int64_t r = 0; r < rows; ++r)
                                     for (int64_t i = 0; i < da; ++i)
                                       ga[r * da + i] += o.grad[r * stride + i];
                                 }
                                 if (b.requires_grad()) {
                                   auto& gb = b.grad();
                                   for (int64_t r = 0; r < rows; ++r)
                                     for (int64_t i = 0; i < db; ++i)
                                       gb[r * db + i] += o.grad[r * stride + da + i];
                                 }
                               });
}

template <class S>
TensorT<S> slice_lastdim(const TensorT<S>& a, int64_t start, int64_t length) {
  const int64_t d = a.shape().back();
  if (start < 0 || length <= 0 || start + length > d)
    throw std::invalid_argument("slice_lastdim: [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") out of " + std::to_string(d));
  const int64_t rows = a.numel() / d;
  Shape out_shape = a.shape();
  out_shape.back() = length;
  std::vector<S> out(rows * length);
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * length, a.data().data() + r * d + start, length * sizeof(S));
  return TensorT<S>::make_node(std::move(out_shape), std::move(out), {a},
                               [a, rows, d, start, length](typename TensorT<S>::Node& o) mutable {
                                 if (!a.requires_grad()) return;
                                 auto& ga = a.grad();
                                 for (int64_t r = 0; r < rows; ++r)
                                   for (int64_t i = 0; i < length; ++i)
                                     ga[r * d + start + i] += o.grad[r * length + i];
                               });
}

// ------------------------------------------------------------ grid helpers

template <class S>
TensorT<S> roll_grid(const TensorT<S>& x, int64_t shift_h, int64_t shift_w) {
  if (x.rank() != 4) throw std::invalid_argument("roll_grid: expected (B,H,W,C)");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto wrap = [](int64_t v, int64_t n) { return ((v % n) + n) % n; };
  std::vector<S> out(x.numel());
  const auto& dx = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < H; ++i) {
      const int64_t oi = wrap(i + shift_h, H);
      for (int64_t j = 0; j < W; ++j) {
        const int64_t oj = wrap(j + shift_w, W);
        std::memcpy(out.data() + ((b * H + oi) * W + oj) * C,
                    dx.data() + ((b * H + i) * W + j) * C, C * sizeof(S));
      }
    }
  return TensorT<S>::make_node(
      x.shape(), std::move(out), {x},
      [x, B, H, W, C, shift_h, shift_w, wrap](typename TensorT<S>::Node& o) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t i = 0; i < H; ++i) {
            const int64_t oi = wrap(i + shift_h, H);
            for (int64_t j = 0; j < W; ++j) {
              const int64_t oj = wrap(j + shift_w, W);
              const S* src = o.grad.data() + ((b * H + oi) * W + oj) * C;
              S* dst = gx.data() + ((b * H + i) * W + j) * C;
              for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
            }
          }
      });
}

template <class S>
TensorT<S> pad_grid(const TensorT<S>& x, int64_t pad_h, int64_t pad_w) {
  if (x.rank() != 4) throw std::invalid_argument("pad_grid: expected (B,H,W,C)");
  if (pad_h == 0 && pad_w == 0) return x;
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int64_t Ho = H + pad_h, Wo = W + pad_w;
  std::vector<S> out(B * Ho * Wo * C, S(0));
  const auto& dx = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < H; ++i)
      std::memcpy(out.data() + ((b * Ho + i) * Wo) * C, dx.data() + ((b * H + i) * W) * C,
                  W * C * sizeof(S));
  return TensorT<S>::make_node({B, Ho, Wo, C}, std::move(out), {x},
                               [x, B, H, W, C, Ho, Wo](typename TensorT<S>::Node& o) mutable {
                                 if (!x.requires_grad()) return;
                                 auto& gx = x.grad();
                                 for (int64_t b = 0; b < B; ++b)
                                   for (int64_t i = 0; i < H; ++i) {
                                     const S* src = o.grad.data() + ((b * Ho + i) * Wo) * C;
                                     S* dst = gx.data() + ((b * H + i) * W) * C;
                                     for (int64_t k = 0; k < W * C; ++k) dst[k] += src[k];
                                   }
                               });
}

template <class S>
TensorT<S> crop_grid(const TensorT<S>& x, int64_t out_h, int64_t out_w) {
  if (x.rank() != 4) throw std::invalid_argument("crop_grid: expected (B,H,W,C)");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (out_h == H && out_w == W) return x;
  if (out_h > H || out_w > W)
    throw std::invalid_argument("crop_grid: crop larger than input grid");
  std::vector<S> out(B * out_h * out_w * C);
  const auto& dx = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < out_h; ++i)
      std::memcpy(out.data() + ((b * out_h + i) * out_w) * C, dx.data() + ((b * H + i) * W) * C,
                  out_w * C * sizeof(S));
  return TensorT<S>::make_node({B, out_h, out_w, C}, std::move(out), {x},
                               [x, B, H, W, C, out_h, out_w](typename TensorT<S>::Node& o) mutable {
                                 if (!x.requires_grad()) return;
                                 auto& gx = x.grad();
                                 for (int64_t b = 0; b < B; ++b)
                                   for (int64_t i = 0; i < out_h; ++i) {
                                     const S* src = o.grad.data() + ((b * out_h + i) * out_w) * C;
                                     S* dst = gx.data() + ((b * H + i) * W) * C;
                                     for (int64_t k = 0; k < out_w * C; ++k) dst[k] += src[k];
                                   }
                               });
}

template <class S>
TensorT<S> index_rows(const TensorT<S>& table, const std::vector<int64_t>& indices) {
  if (table.rank() != 2) throw std::invalid_argument("index_rows: table must be 2-d");
  const int64_t R = table.dim(0), C = table.dim(1);
  for (int64_t idx : indices)
    if (idx < 0 || idx >= R)
      throw std::invalid_argument("index_rows: index " + std::to_string(idx) + " out of " +
                                  std::to_string(R));
  const int64_t N = static_cast<int64_t>(indices.size());
  std::vector<S> out(N * C);
  for (int64_t n = 0; n < N; ++n)
    std::memcpy(out.data() + n * C, table.data().data() + indices[n] * C, C * sizeof(S));
  return TensorT<S>::make_node({N, C}, std::move(out), {table},
                               [table, indices, N, C](typename TensorT<S>::Node& o) mutable {
                                 if (!table.requires_grad()) return;
                                 auto& gt = table.grad();
                                 for (int64_t n = 0; n < N; ++n) {
                                   S* dst = gt.data() + indices[n] * C;
                                   const S* src = o.grad.data() + n * C;
                                   for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
                                 }
                               });
}

// ----------------------------------------------------------------- matmul

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() < 2 || b.rank() < 2) shape_error("matmul", a.shape(), b.shape());
  const int64_t M = a.shape()[a.rank() - 2];
  const int64_t K = a.shape()[a.rank() - 1];
  const int64_t Kb = b.shape()[b.rank() - 2];
  const int64_t N = b.shape()[b.rank() - 1];
  if (K != Kb) shape_error("matmul", a.shape(), b.shape());

  const bool b_is_weight = b.rank() == 2 && a.rank() > 2;
  if (!b_is_weight && a.rank() != b.rank()) shape_error("matmul", a.shape(), b.shape());
  if (!b_is_weight)
    for (size_t i = 0; i + 2 < a.rank(); ++i)
      if (a.shape()[i] != b.shape()[i]) shape_error("matmul", a.shape(), b.shape());

  const int64_t batch = a.numel() / (M * K);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(N);

  std::vector<S> out(batch * M * N);
  const S* pa = a.data().data();
  const S* pb = b.data().data();
  for (int64_t t = 0; t < batch; ++t)
    mm(pa + t * M * K, b_is_weight ? pb : pb + t * K * N, out.data() + t * M * N, M, K, N);

  return TensorT<S>::make_node(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, M, K, N, batch, b_is_weight](typename TensorT<S>::Node& o) mutable {
        const S* g = o.grad.data();
        if (a.requires_grad()) {
          auto& ga = a.grad();
          const S* pb2 = b.data().data();
          for (int64_t t = 0; t < batch; ++t)
            mm_bt_acc(g + t * M * N, b_is_weight ? pb2 : pb2 + t * K * N, ga.data() + t * M * K, M,
                      N, K);
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          const S* pa2 = a.data().data();
          std::vector<S> at(M * K);
          for (int64_t t = 0; t < batch; ++t) {
            transpose2d(pa2 + t * M * K, at.data(), M, K);
            mm_acc(at.data(), g + t * M * N, b_is_weight ? gb.data() : gb.data() + t * K * N, K, M,
                   N);
          }
        }
      });
}

// ----------------------------------------------------------------- conv

namespace {

template <class S>
void im2col(const S* x, S* col, int64_t Cin, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t sh, int64_t sw, int64_t ph, int64_t pw, int64_t Ho, int64_t Wo) {
  const int64_t cols = Ho * Wo;
  int64_t row = 0;
  for (int64_t c = 0; c < Cin; ++c) {
    const S* xc = x + c * H * W;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj, ++row) {
        S* dst = col + row * cols;
        for (int64_t oi = 0; oi < Ho; ++oi) {
          const int64_t ii = oi * sh - ph + ki;
          if (ii < 0 || ii >= H) {
            std::fill(dst + oi * Wo, dst + (oi + 1) * Wo, S(0));
            continue;
          }
          const S* src = xc + ii * W;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            const int64_t jj = oj * sw - pw + kj;
            dst[oi * Wo + oj] = (jj < 0 || jj >= W) ? S(0) : src[jj];
          }
        }
      }
    }
  }
}

template <class S>
void col2im_acc(const S* col, S* dx, int64_t Cin, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t sh, int64_t sw, int64_t ph, int64_t pw, int64_t Ho, int64_t Wo) {
  const int64_t cols = Ho * Wo;
  int64_t row = 0;
  for (int64_t c = 0; c < Cin; ++c) {
    S* xc = dx + c * H * W;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj, ++row) {
        const S* src = col + row * cols;
        for (int64_t oi = 0; oi < Ho; ++oi) {
          const int64_t ii = oi * sh - ph + ki;
          if (ii < 0 || ii >= H) continue;
          S* dst = xc + ii * W;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            const int64_t jj = oj * sw - pw + kj;
            if (jj >= 0 && jj < W) dst[jj] += src[oi * Wo + oj];
          }
        }
      }
    }
  }
}

}  // namespace

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                  int64_t stride_h, int64_t stride_w, int64_t pad_h, int64_t pad_w) {
  if (x.rank() != 4 || w.rank() != 4) shape_error("conv2d", x.shape(), w.shape());
  const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Cin) shape_error("conv2d", x.shape(), w.shape());
  const int64_t Ho = (H + 2 * pad_h - kh) / stride_h + 1;
  const int64_t Wo = (W + 2 * pad_w - kw) / stride_w + 1;
  if (Ho <= 0 || Wo <= 0)
    throw std::invalid_argument("conv2d: empty output for input " + shape_str(x.shape()) +
                                " kernel " + shape_str(w.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != Cout) shape_error("conv2d bias", w.shape(), bias.shape());

  const int64_t ckk = Cin * kh * kw;
  const int64_t cols = Ho * Wo;
  std::vector<S> col(ckk * cols);
  std::vector<S> out(N * Cout * cols);
  for (int64_t n = 0; n < N; ++n) {
    im2col(x.data().data() + n * Cin * H * W, col.data(), Cin, H, W, kh, kw, stride_h, stride_w,
           pad_h, pad_w, Ho, Wo);
    S* on = out.data() + n * Cout * cols;
    mm(w.data().data(), col.data(), on, Cout, ckk, cols);
    if (has_bias)
      for (int64_t c = 0; c < Cout; ++c) {
        const S bv = bias.data()[c];
        for (int64_t i = 0; i < cols; ++i) on[c * cols + i] += bv;
      }
  }

  std::vector<TensorT<S>> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return TensorT<S>::make_node(
      {N, Cout, Ho, Wo}, std::move(out), std::move(parents),
      [x, w, bias, has_bias, N, Cin, H, W, Cout, kh, kw, stride_h, stride_w, pad_h, pad_w, Ho, Wo,
       ckk, cols](typename TensorT<S>::Node& o) mutable {
        std::vector<S> col2(ckk * cols);
        std::vector<S> wt;
        const bool need_x = x.requires_grad();
        const bool need_w = w.requires_grad();
        const bool need_b = has_bias && bias.requires_grad();
        if (need_x) {
          wt.resize(ckk * Cout);
          transpose2d(w.data().data(), wt.data(), Cout, ckk);
        }
        std::vector<S> dcol(need_x ? ckk * cols : 0);
        for (int64_t n = 0; n < N; ++n) {
          const S* gn = o.grad.data() + n * Cout * cols;
          if (need_w || need_x) {
            if (need_w) {
              im2col(x.data().data() + n * Cin * H * W, col2.data(), Cin, H, W, kh, kw, stride_h,
                     stride_w, pad_h, pad_w, Ho, Wo);
              mm_bt_acc(gn, col2.data(), w.grad().data(), Cout, cols, ckk);
            }
            if (need_x) {
              mm(wt.data(), gn, dcol.data(), ckk, Cout, cols);
              col2im_acc(dcol.data(), x.grad().data() + n * Cin * H * W, Cin, H, W, kh, kw,
                         stride_h, stride_w, pad_h, pad_w, Ho, Wo);
            }
          }
          if (need_b) {
            auto& gb = bias.grad();
            for (int64_t c = 0; c < Cout; ++c) {
              S acc = S(0);
              for (int64_t i = 0; i < cols; ++i) acc += gn[c * cols + i];
              gb[c] += acc;
            }
          }
        }
      });
}

template <class S>
TensorT<S> conv1d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias, int64_t stride,
                  int64_t pad) {
  if (x.rank() != 3 || w.rank() != 3) shape_error("conv1d", x.shape(), w.shape());
  // Reuse conv2d with a singleton height axis.
  auto x4 = reshape(x, {x.dim(0), x.dim(1), int64_t(1), x.dim(2)});
  auto w4 = reshape(w, {w.dim(0), w.dim(1), int64_t(1), w.dim(2)});
  auto y = conv2d(x4, w4, bias, 1, stride, 0, pad);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

// -------------------------------------------------- fused attention biases

template <class S>
TensorT<S> add_window_bias(const TensorT<S>& scores, const TensorT<S>& bias,
                           const TensorT<S>& mask) {
  if (scores.rank() != 4 || bias.rank() != 3)
    throw std::invalid_argument("add_window_bias: scores must be (B*nW,h,T,T), bias (h,T,T)");
  const int64_t BW = scores.dim(0), h = scores.dim(1), T = scores.dim(2);
  if (bias.dim(0) != h || bias.dim(1) != T || bias.dim(2) != T)
    shape_error("add_window_bias", scores.shape(), bias.shape());
  const bool has_mask = mask.defined();
  int64_t nW = 0;
  if (has_mask) {
    nW = mask.dim(0);
    if (mask.rank() != 3 || mask.dim(1) != T || mask.dim(2) != T || BW % nW != 0)
      shape_error("add_window_bias mask", scores.shape(), mask.shape());
  }

  const int64_t plane = T * T;
  std::vector<S> out(scores.data());
  for (int64_t b = 0; b < BW; ++b) {
    const S* mk = has_mask ? mask.data().data() + (b % nW) * plane : nullptr;
    for (int64_t hh = 0; hh < h; ++hh) {
      S* dst = out.data() + (b * h + hh) * plane;
      const S* bi = bias.data().data() + hh * plane;
      if (mk)
        for (int64_t i = 0; i < plane; ++i) dst[i] += bi[i] + mk[i];
      else
        for (int64_t i = 0; i < plane; ++i) dst[i] += bi[i];
    }
  }
  return TensorT<S>::make_node(scores.shape(), std::move(out), {scores, bias},
                               [scores, bias, BW, h, plane](typename TensorT<S>::Node& o) mutable {
                                 if (scores.requires_grad()) {
                                   auto& gs = scores.grad();
                                   for (size_t i = 0; i < gs.size(); ++i) gs[i] += o.grad[i];
                                 }
                                 if (bias.requires_grad()) {
                                   auto& gb = bias.grad();
                                   for (int64_t b = 0; b < BW; ++b)
                                     for (int64_t hh = 0; hh < h; ++hh) {
                                       const S* src = o.grad.data() + (b * h + hh) * plane;
                                       S* dst = gb.data() + hh * plane;
                                       for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                                     }
                                 }
                               });
}

// ------------------------------------------------------------- reductions

template <class S>
TensorT<S> mean_lastdim(const TensorT<S>& a) {
  const int64_t d = a.shape().back();
  const int64_t rows = a.numel() / d;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<S> out(rows);
  const auto& da = a.data();
  const S inv = S(1) / static_cast<S>(d);
  for (int64_t r = 0; r < rows; ++r) {
    S acc = S(0);
    for (int64_t i = 0; i < d; ++i) acc += da[r * d + i];
    out[r] = acc * inv;
  }
  return TensorT<S>::make_node(std::move(out_shape), std::move(out), {a},
                               [a, rows, d, inv](typename TensorT<S>::Node& o) mutable {
                                 if (!a.requires_grad()) return;
                                 auto& ga = a.grad();
                                 for (int64_t r = 0; r < rows; ++r) {
                                   const S g = o.grad[r] * inv;
                                   for (int64_t i = 0; i < d; ++i) ga[r * d + i] += g;
                                 }
                               });
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& a) {
  S acc = S(0);
  for (S v : a.data()) acc += v;
  return TensorT<S>::make_node({1}, {acc}, {a}, [a](typename TensorT<S>::Node& o) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (auto& v : ga) v += o.grad[0];
  });
}

template <class S>
TensorT<S> cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be (B,K), got " +
                                shape_str(logits.shape()));
  const int64_t B = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(B));
  for (int label : labels)
    if (label < 0 || label >= K)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                  " out of [0," + std::to_string(K) + ")");

  auto probs = std::make_shared<std::vector<S>>(logits.data());
  S loss = S(0);
  for (int64_t b = 0; b < B; ++b) {
    S* row = probs->data() + b * K;
    S mx = row[0];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    S sum = S(0);
    for (int64_t k = 0; k < K; ++k) {
      row[k] = std::exp(row[k] - mx);
      sum += row[k];
    }
    const S inv = S(1) / sum;
    for (int64_t k = 0; k < K; ++k) row[k] *= inv;
    loss -= std::log(std::max(row[labels[b]], std::numeric_limits<S>::min()));
  }
  loss /= static_cast<S>(B);

  return TensorT<S>::make_node({1}, {loss}, {logits},
                               [logits, probs, labels, B, K](typename TensorT<S>::Node& o) mutable {
                                 if (!logits.requires_grad()) return;
                                 auto& gl = logits.grad();
                                 const S g = o.grad[0] / static_cast<S>(B);
                                 for (int64_t b = 0; b < B; ++b) {
                                   const S* p = probs->data() + b * K;
                                   S* dst = gl.data() + b * K;
                                   for (int64_t k = 0; k < K; ++k) dst[k] += g * p[k];
                                   dst[labels[b]] -= g;
                                 }
                               });
}

template <class S>
bool has_nan(const TensorT<S>& a) {
  for (S v : a.data())
    if (std::isnan(v)) return true;
  return false;
}

// -------------------------------------------------- explicit instantiation

#define MMER_INSTANTIATE_OPS(S)                                                                  \
  template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                             \
  template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&);                             \
  template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                             \
  template TensorT<S> scale<S>(const TensorT<S>&, S);                                           \
  template TensorT<S> relu<S>(const TensorT<S>&);                                               \
  template TensorT<S> gelu<S>(const TensorT<S>&);                                               \
  template TensorT<S> softmax_lastdim<S>(const TensorT<S>&);                                    \
  template TensorT<S> layer_norm_lastdim<S>(const TensorT<S>&, const TensorT<S>&,               \
                                            const TensorT<S>&, S);                              \
  template TensorT<S> reshape<S>(const TensorT<S>&, Shape);                                     \
  template TensorT<S> permute<S>(const TensorT<S>&, const std::vector<size_t>&);                \
  template TensorT<S> concat_lastdim<S>(const TensorT<S>&, const TensorT<S>&);                  \
  template TensorT<S> slice_lastdim<S>(const TensorT<S>&, int64_t, int64_t);                    \
  template TensorT<S> roll_grid<S>(const TensorT<S>&, int64_t, int64_t);                        \
  template TensorT<S> pad_grid<S>(const TensorT<S>&, int64_t, int64_t);                         \
  template TensorT<S> crop_grid<S>(const TensorT<S>&, int64_t, int64_t);                        \
  template TensorT<S> index_rows<S>(const TensorT<S>&, const std::vector<int64_t>&);            \
  template TensorT<S> matmul<S>(const TensorT<S>&, const TensorT<S>&);                          \
  template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,        \
                                int64_t, int64_t, int64_t, int64_t);                            \
  template TensorT<S> conv1d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,        \
                                int64_t, int64_t);                                              \
  template TensorT<S> add_window_bias<S>(const TensorT<S>&, const TensorT<S>&,                  \
                                         const TensorT<S>&);                                    \
  template TensorT<S> mean_lastdim<S>(const TensorT<S>&);                                       \
  template TensorT<S> sum_all<S>(const TensorT<S>&);                                            \
  template TensorT<S> cross_entropy<S>(const TensorT<S>&, const std::vector<int>&);             \
  template bool has_nan<S>(const TensorT<S>&);

MMER_INSTANTIATE_OPS(float)
MMER_INSTANTIATE_OPS(double)

}  // namespace mmer::nn
