#pragma once

#include <utility>
#include <vector>

#include "origami/tensor.hpp"

// Differentiable ops.  All take/return NCHW-style row-major tensors and
// record backward closures when gradients are enabled.

namespace origami {

struct Stride2 {
    int h = 1;
    int w = 1;
};

// input [N,Cin,H,W] * kernel [Cout,Cin,kh,kw] + bias [Cout] -> [N,Cout,H',W']
// H' = (H + 2*pad.h - kh)/stride.h + 1 (floor), same for W'.  Zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Stride2 stride = {1, 1}, Stride2 pad = {0, 0});

// Max over window; ties resolve to the first element in row-major window
// order.  No padding: output is floor((H - win.h)/stride.h) + 1 per axis and
// trailing rows/cols that do not fill a window are dropped.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, Stride2 win, Stride2 stride);

// Bilinear resize over the last two axes with the half-pixel convention
// src = (dst + 0.5) * in/out - 0.5, clamped to the valid range.  Exact
// identity when the size does not change.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w);

// Parameter-free layer norm over all axes but the first (per-sample),
// epsilon 1e-5, biased variance.
template <class T>
Tensor<T> static_layer_norm(const Tensor<T>& input);

// Mean over one axis; the axis disappears from the shape.
template <class T>
Tensor<T> mean_over_axis(const Tensor<T>& input, int axis);

// Elementwise; shapes must match exactly unless one side has a single
// element, which broadcasts against the other.
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> add(const Tensor<T>& a, T b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, T b);

template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <class T>
Tensor<T> tanh(const Tensor<T>& x);

// log softmax along `axis` (negative axes allowed), stable via max-shift.
template <class T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis);

// Sum of all elements -> scalar.
template <class T>
Tensor<T> sum(const Tensor<T>& x);

// Same data, new shape; element count must match.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Axis permutation: out axis i is input axis perm[i].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);

// x[index] along axis 0; the axis disappears.
template <class T>
Tensor<T> slice_axis0(const Tensor<T>& x, std::int64_t index);

// Single element as a scalar tensor (differentiable gather of one value).
template <class T>
Tensor<T> pick(const Tensor<T>& x, const std::vector<std::int64_t>& idx);

}  // namespace origami
