#pragma once

#include <vector>

#include "mmer/tensor.hpp"

namespace mmer::nn {

// Elementwise with numpy-style right-aligned broadcasting (dims equal or 1).
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b);
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);
template <class S>
TensorT<S> scale(const TensorT<S>& a, S factor);

template <class S>
TensorT<S> relu(const TensorT<S>& a);
template <class S>
TensorT<S> gelu(const TensorT<S>& a);  // exact erf form
template <class S>
TensorT<S> softmax_lastdim(const TensorT<S>& a);
template <class S>
TensorT<S> layer_norm_lastdim(const TensorT<S>& x, const TensorT<S>& gamma,
                              const TensorT<S>& beta, S eps = S(1e-5));

// Shape manipulation (all produce copies; backward routes gradients back).
template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape);
template <class S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<size_t>& dims);
template <class S>
TensorT<S> concat_lastdim(const TensorT<S>& a, const TensorT<S>& b);
template <class S>
TensorT<S> slice_lastdim(const TensorT<S>& a, int64_t start, int64_t length);

// Grid helpers on (B, H, W, C) token grids.
template <class S>
TensorT<S> roll_grid(const TensorT<S>& x, int64_t shift_h, int64_t shift_w);
template <class S>
TensorT<S> pad_grid(const TensorT<S>& x, int64_t pad_h, int64_t pad_w);  // zeros at bottom/right
template <class S>
TensorT<S> crop_grid(const TensorT<S>& x, int64_t out_h, int64_t out_w);  // top-left corner

// Row gather; backward scatter-adds (used for relative position bias).
template <class S>
TensorT<S> index_rows(const TensorT<S>& table, const std::vector<int64_t>& indices);

// a (.., M, K) x b either (K, N) or (.., K, N) with matching leading dims.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b);

// x (N, Cin, H, W), w (Cout, Cin, kh, kw), optional bias (Cout).
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                  int64_t stride_h, int64_t stride_w, int64_t pad_h, int64_t pad_w);
// x (N, Cin, L), w (Cout, Cin, k).
template <class S>
TensorT<S> conv1d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                  int64_t stride, int64_t pad);

// Fused bias/mask add for windowed attention scores:
// scores (B*nW, heads, T, T) + bias (heads, T, T) [+ mask (nW, T, T)].
template <class S>
TensorT<S> add_window_bias(const TensorT<S>& scores, const TensorT<S>& bias,
                           const TensorT<S>& mask);

// Reductions. mean_lastdim drops the reduced axis.
template <class S>
TensorT<S> mean_lastdim(const TensorT<S>& a);
template <class S>
TensorT<S> sum_all(const TensorT<S>& a);

// Mean over the batch of -log softmax(logits)[label]; max-subtraction
// stabilized. logits (B, K).
template <class S>
TensorT<S> cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels);

template <class S>
bool has_nan(const TensorT<S>& a);

}  // namespace mmer::nn
