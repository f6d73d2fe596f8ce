#include "origami/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "origami/kernels.hpp"

namespace origami {

namespace {

using i64 = std::int64_t;

int normalize_axis(int axis, int ndim, const char* op) {
    int a = axis < 0 ? axis + ndim : axis;
    if (a < 0 || a >= ndim)
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(ndim));
    return a;
}

// cols is [Cin*kh*kw, Ho*Wo]; row r = (ci,dy,dx), column = (oy,ox).
template <class T>
void im2col(const T* in, i64 Cin, i64 H, i64 W, i64 kh, i64 kw, Stride2 stride, Stride2 pad,
            i64 Ho, i64 Wo, T* cols) {
    i64 r = 0;
    for (i64 ci = 0; ci < Cin; ++ci)
        for (i64 dy = 0; dy < kh; ++dy)
            for (i64 dx = 0; dx < kw; ++dx, ++r) {
                T* dst = cols + r * Ho * Wo;
                for (i64 oy = 0; oy < Ho; ++oy) {
                    const i64 iy = oy * stride.h - pad.h + dy;
                    T* row = dst + oy * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(row, row + Wo, T(0));
                        continue;
                    }
                    const T* src = in + (ci * H + iy) * W;
                    for (i64 ox = 0; ox < Wo; ++ox) {
                        const i64 ix = ox * stride.w - pad.w + dx;
                        row[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
}

template <class T>
void col2im_add(const T* cols, i64 Cin, i64 H, i64 W, i64 kh, i64 kw, Stride2 stride, Stride2 pad,
                i64 Ho, i64 Wo, T* out) {
    i64 r = 0;
    for (i64 ci = 0; ci < Cin; ++ci)
        for (i64 dy = 0; dy < kh; ++dy)
            for (i64 dx = 0; dx < kw; ++dx, ++r) {
                const T* src = cols + r * Ho * Wo;
                for (i64 oy = 0; oy < Ho; ++oy) {
                    const i64 iy = oy * stride.h - pad.h + dy;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = out + (ci * H + iy) * W;
                    const T* row = src + oy * Wo;
                    for (i64 ox = 0; ox < Wo; ++ox) {
                        const i64 ix = ox * stride.w - pad.w + dx;
                        if (ix >= 0 && ix < W) dst[ix] += row[ox];
                    }
                }
            }
}

// Half-pixel sample positions for one axis.
template <class T>
struct LerpTable {
    std::vector<i64> lo, hi;
    std::vector<T> w_hi;  // weight of hi; lo gets 1 - w_hi
};

template <class T>
LerpTable<T> lerp_table(i64 in, i64 out) {
    LerpTable<T> t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.w_hi.resize(out);
    for (i64 o = 0; o < out; ++o) {
        double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) /
                       static_cast<double>(out) -
                   0.5;
        s = std::min(std::max(s, 0.0), static_cast<double>(in - 1));
        i64 lo = static_cast<i64>(s);
        if (lo > in - 1) lo = in - 1;
        i64 hi = std::min(lo + 1, in - 1);
        t.lo[o] = lo;
        t.hi[o] = hi;
        t.w_hi[o] = static_cast<T>(s - static_cast<double>(lo));
    }
    return t;
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Stride2 stride, Stride2 pad) {
    if (input.ndim() != 4)
        throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
    if (kernel.ndim() != 4)
        throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw], got " +
                         shape_str(kernel.shape()));
    if (bias.ndim() != 1)
        throw ShapeError("conv2d: bias must be [Cout], got " + shape_str(bias.shape()));
    if (stride.h < 1 || stride.w < 1)
        throw ConfigError("conv2d: stride must be >= 1");
    if (pad.h < 0 || pad.w < 0)
        throw ConfigError("conv2d: padding must be >= 0");

    const i64 N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const i64 Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != Cin)
        throw ShapeError("conv2d: kernel wants " + std::to_string(kernel.dim(1)) +
                         " input channels, input has " + std::to_string(Cin));
    if (bias.dim(0) != Cout)
        throw ShapeError("conv2d: bias has " + std::to_string(bias.dim(0)) + " channels, kernel " +
                         std::to_string(Cout));
    if (H + 2 * pad.h < kh || W + 2 * pad.w < kw)
        throw ShapeError("conv2d: window " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " exceeds padded input " + std::to_string(H + 2 * pad.h) + "x" +
                         std::to_string(W + 2 * pad.w));

    const i64 Ho = (H + 2 * pad.h - kh) / stride.h + 1;
    const i64 Wo = (W + 2 * pad.w - kw) / stride.w + 1;
    const i64 K = Cin * kh * kw;
    const i64 L = Ho * Wo;

    auto xi = input.impl();
    auto ki = kernel.impl();
    auto bi = bias.impl();
    auto out = make_op_output<T>(
        "conv2d", {N, Cout, Ho, Wo}, {xi, ki, bi},
        [=](TensorImpl<T>& o) {
            const T* gy = o.grad.data();
            const bool need_x = xi->requires_grad;
            const bool need_k = ki->requires_grad;
            const bool need_b = bi->requires_grad;
            std::vector<T> cols(need_k ? static_cast<std::size_t>(K * L) : 0);
            std::vector<T> dcols(need_x ? static_cast<std::size_t>(K * L) : 0);
            if (need_x) xi->ensure_grad();
            if (need_k) ki->ensure_grad();
            if (need_b) bi->ensure_grad();
            for (i64 n = 0; n < N; ++n) {
                const T* gyn = gy + n * Cout * L;
                if (need_k) {
                    im2col(xi->data.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho,
                           Wo, cols.data());
                    kern::gemm_nt(static_cast<int>(Cout), static_cast<int>(K), static_cast<int>(L),
                                  gyn, cols.data(), ki->grad.data(), true);
                }
                if (need_b)
                    for (i64 c = 0; c < Cout; ++c)
                        bi->grad[static_cast<std::size_t>(c)] += kern::reduce_sum(gyn + c * L, L);
                if (need_x) {
                    kern::gemm_tn(static_cast<int>(K), static_cast<int>(L), static_cast<int>(Cout),
                                  ki->data.data(), gyn, dcols.data(), false);
                    col2im_add(dcols.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                               xi->grad.data() + n * Cin * H * W);
                }
            }
        });

    std::vector<T> cols(static_cast<std::size_t>(K * L));
    T* op = out.impl()->data.data();
    for (i64 n = 0; n < N; ++n) {
        im2col(xi->data.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
               cols.data());
        T* on = op + n * Cout * L;
        kern::gemm_nn(static_cast<int>(Cout), static_cast<int>(L), static_cast<int>(K),
                      ki->data.data(), cols.data(), on, false);
        for (i64 c = 0; c < Cout; ++c) {
            const T b = bi->data[static_cast<std::size_t>(c)];
            T* row = on + c * L;
            for (i64 l = 0; l < L; ++l) row[l] += b;
        }
    }
    return out;
}

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, Stride2 win, Stride2 stride) {
    if (input.ndim() != 4)
        throw ShapeError("maxpool2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
    if (win.h < 1 || win.w < 1 || stride.h < 1 || stride.w < 1)
        throw ConfigError("maxpool2d: window and stride must be >= 1");
    const i64 N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H < win.h || W < win.w)
        throw ShapeError("maxpool2d: window " + std::to_string(win.h) + "x" +
                         std::to_string(win.w) + " exceeds input " + std::to_string(H) + "x" +
                         std::to_string(W));
    const i64 Ho = (H - win.h) / stride.h + 1;
    const i64 Wo = (W - win.w) / stride.w + 1;

    auto xi = input.impl();
    // Flat source index (into the whole input buffer) of each output's max.
    auto arg = std::make_shared<std::vector<i64>>(static_cast<std::size_t>(N * C * Ho * Wo));
    auto out = make_op_output<T>("maxpool2d", {N, C, Ho, Wo}, {xi}, [xi, arg](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const T* gy = o.grad.data();
        const auto& a = *arg;
        for (std::size_t i = 0; i < a.size(); ++i)
            xi->grad[static_cast<std::size_t>(a[i])] += gy[i];
    });

    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    i64 oi = 0;
    for (i64 n = 0; n < N; ++n)
        for (i64 c = 0; c < C; ++c) {
            const i64 plane = (n * C + c) * H * W;
            for (i64 oy = 0; oy < Ho; ++oy)
                for (i64 ox = 0; ox < Wo; ++ox, ++oi) {
                    const i64 iy0 = oy * stride.h, ix0 = ox * stride.w;
                    i64 best = plane + iy0 * W + ix0;
                    T bv = in[best];
                    for (i64 dy = 0; dy < win.h; ++dy) {
                        const i64 row = plane + (iy0 + dy) * W + ix0;
                        for (i64 dx = 0; dx < win.w; ++dx)
                            if (in[row + dx] > bv) {  // strict: first wins ties
                                bv = in[row + dx];
                                best = row + dx;
                            }
                    }
                    op[oi] = bv;
                    (*arg)[static_cast<std::size_t>(oi)] = best;
                }
        }
    return out;
}

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& input, i64 out_h, i64 out_w) {
    if (input.ndim() < 2)
        throw ShapeError("bilinear_resize: need at least 2 axes, got " +
                         shape_str(input.shape()));
    if (out_h < 1 || out_w < 1)
        throw ConfigError("bilinear_resize: target size must be >= 1, got " +
                          std::to_string(out_h) + "x" + std::to_string(out_w));
    const i64 H = input.dim(-2), W = input.dim(-1);
    const i64 B = input.numel() / (H * W);

    Shape oshape = input.shape();
    oshape[oshape.size() - 2] = out_h;
    oshape[oshape.size() - 1] = out_w;

    auto ty = std::make_shared<LerpTable<T>>(lerp_table<T>(H, out_h));
    auto tx = std::make_shared<LerpTable<T>>(lerp_table<T>(W, out_w));

    auto xi = input.impl();
    auto out = make_op_output<T>(
        "bilinear_resize", oshape, {xi}, [xi, ty, tx, B, H, W, out_h, out_w](TensorImpl<T>& o) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            const T* gy = o.grad.data();
            T* gx = xi->grad.data();
            for (i64 b = 0; b < B; ++b) {
                const T* g = gy + b * out_h * out_w;
                T* x = gx + b * H * W;
                for (i64 oy = 0; oy < out_h; ++oy) {
                    const T fy = ty->w_hi[oy];
                    const i64 y0 = ty->lo[oy] * W, y1 = ty->hi[oy] * W;
                    for (i64 ox = 0; ox < out_w; ++ox) {
                        const T fx = tx->w_hi[ox];
                        const i64 x0 = tx->lo[ox], x1 = tx->hi[ox];
                        const T v = g[oy * out_w + ox];
                        x[y0 + x0] += (T(1) - fy) * (T(1) - fx) * v;
                        x[y0 + x1] += (T(1) - fy) * fx * v;
                        x[y1 + x0] += fy * (T(1) - fx) * v;
                        x[y1 + x1] += fy * fx * v;
                    }
                }
            }
        });

    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    for (i64 b = 0; b < B; ++b) {
        const T* x = in + b * H * W;
        T* o = op + b * out_h * out_w;
        for (i64 oy = 0; oy < out_h; ++oy) {
            const T fy = ty->w_hi[oy];
            const i64 y0 = ty->lo[oy] * W, y1 = ty->hi[oy] * W;
            for (i64 ox = 0; ox < out_w; ++ox) {
                const T fx = tx->w_hi[ox];
                const i64 x0 = tx->lo[ox], x1 = tx->hi[ox];
                const T top = (T(1) - fx) * x[y0 + x0] + fx * x[y0 + x1];
                const T bot = (T(1) - fx) * x[y1 + x0] + fx * x[y1 + x1];
                o[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> static_layer_norm(const Tensor<T>& input) {
    if (input.ndim() < 1 || input.numel() == 0)
        throw ShapeError("static_layer_norm: need a non-empty tensor, got " +
                         shape_str(input.shape()));
    constexpr T kEps = T(1e-5);
    const i64 M = input.dim(0);
    const i64 K = input.numel() / M;

    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(M));
    auto xi = input.impl();
    auto out = make_op_output<T>(
        "static_layer_norm", input.shape(), {xi}, [xi, inv_std, M, K](TensorImpl<T>& o) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            // d/dx of (x - m) * inv: route through mean and variance.
            for (i64 s = 0; s < M; ++s) {
                const T* g = o.grad.data() + s * K;
                const T* xh = o.data.data() + s * K;  // normalized activations
                T* gx = xi->grad.data() + s * K;
                T mg = 0, mgx = 0;
                for (i64 j = 0; j < K; ++j) {
                    mg += g[j];
                    mgx += g[j] * xh[j];
                }
                mg /= static_cast<T>(K);
                mgx /= static_cast<T>(K);
                const T inv = (*inv_std)[static_cast<std::size_t>(s)];
                for (i64 j = 0; j < K; ++j) gx[j] += inv * (g[j] - mg - xh[j] * mgx);
            }
        });

    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    for (i64 s = 0; s < M; ++s) {
        const T* x = in + s * K;
        T m = kern::reduce_sum(x, K) / static_cast<T>(K);
        T var = 0;
        for (i64 j = 0; j < K; ++j) {
            const T d = x[j] - m;
            var += d * d;
        }
        var /= static_cast<T>(K);
        const T inv = T(1) / std::sqrt(var + kEps);
        (*inv_std)[static_cast<std::size_t>(s)] = inv;
        T* o = op + s * K;
        for (i64 j = 0; j < K; ++j) o[j] = (x[j] - m) * inv;
    }
    return out;
}

template <class T>
Tensor<T> mean_over_axis(const Tensor<T>& input, int axis) {
    const int nd = input.ndim();
    const int a = normalize_axis(axis, nd, "mean_over_axis");
    const auto& s = input.shape();
    const i64 alen = s[static_cast<std::size_t>(a)];
    if (alen == 0) throw ShapeError("mean_over_axis: axis " + std::to_string(axis) + " is empty");
    i64 outer = 1, inner = 1;
    for (int d = 0; d < a; ++d) outer *= s[static_cast<std::size_t>(d)];
    for (int d = a + 1; d < nd; ++d) inner *= s[static_cast<std::size_t>(d)];
    Shape oshape;
    for (int d = 0; d < nd; ++d)
        if (d != a) oshape.push_back(s[static_cast<std::size_t>(d)]);

    auto xi = input.impl();
    const T invn = T(1) / static_cast<T>(alen);
    auto out = make_op_output<T>("mean_over_axis", oshape, {xi},
                                 [xi, outer, alen, inner, invn](TensorImpl<T>& o) {
                                     if (!xi->requires_grad) return;
                                     xi->ensure_grad();
                                     const T* gy = o.grad.data();
                                     for (i64 ou = 0; ou < outer; ++ou)
                                         for (i64 j = 0; j < alen; ++j)
                                             kern::axpy(invn, gy + ou * inner,
                                                        xi->grad.data() + (ou * alen + j) * inner,
                                                        inner);
                                 });

    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    for (i64 ou = 0; ou < outer; ++ou) {
        T* o = op + ou * inner;
        for (i64 j = 0; j < alen; ++j) kern::axpy(T(1), in + (ou * alen + j) * inner, o, inner);
        kern::scale(o, invn, o, inner);
    }
    return out;
}

namespace {

enum class Broadcast { none, left, right };  // which operand is the single element

template <class T>
Broadcast binary_mode(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) return Broadcast::none;
    if (b.numel() == 1) return Broadcast::right;
    if (a.numel() == 1) return Broadcast::left;
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not match");
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const Broadcast mode = binary_mode("add", a, b);
    auto ai = a.impl();
    auto bi = b.impl();
    const Shape& oshape = mode == Broadcast::left ? b.shape() : a.shape();
    const i64 n = numel_of(oshape);
    auto out = make_op_output<T>("add", oshape, {ai, bi}, [ai, bi, mode, n](TensorImpl<T>& o) {
        const T* gy = o.grad.data();
        auto scatter = [&](const std::shared_ptr<TensorImpl<T>>& t, bool is_scalar) {
            if (!t->requires_grad) return;
            t->ensure_grad();
            if (is_scalar)
                t->grad[0] += kern::reduce_sum(gy, n);
            else
                kern::axpy(T(1), gy, t->grad.data(), n);
        };
        scatter(ai, mode == Broadcast::left);
        scatter(bi, mode == Broadcast::right);
    });
    T* op = out.impl()->data.data();
    if (mode == Broadcast::none) {
        kern::add(ai->data.data(), bi->data.data(), op, n);
    } else {
        const bool left = mode == Broadcast::left;
        const T s = (left ? ai : bi)->data[0];
        const T* x = (left ? bi : ai)->data.data();
        for (i64 i = 0; i < n; ++i) op[i] = x[i] + s;
    }
    return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    const Broadcast mode = binary_mode("mul", a, b);
    auto ai = a.impl();
    auto bi = b.impl();
    const Shape& oshape = mode == Broadcast::left ? b.shape() : a.shape();
    const i64 n = numel_of(oshape);
    auto out = make_op_output<T>("mul", oshape, {ai, bi}, [ai, bi, mode, n](TensorImpl<T>& o) {
        const T* gy = o.grad.data();
        auto scatter = [&](const std::shared_ptr<TensorImpl<T>>& t,
                           const std::shared_ptr<TensorImpl<T>>& other, bool is_scalar,
                           bool other_scalar) {
            if (!t->requires_grad) return;
            t->ensure_grad();
            if (is_scalar) {
                T acc = 0;
                for (i64 i = 0; i < n; ++i) acc += gy[i] * other->data[static_cast<std::size_t>(i)];
                t->grad[0] += acc;
            } else if (other_scalar) {
                kern::axpy(other->data[0], gy, t->grad.data(), n);
            } else {
                T* g = t->grad.data();
                const T* ov = other->data.data();
                for (i64 i = 0; i < n; ++i) g[i] += gy[i] * ov[i];
            }
        };
        scatter(ai, bi, mode == Broadcast::left, mode == Broadcast::right);
        scatter(bi, ai, mode == Broadcast::right, mode == Broadcast::left);
    });
    T* op = out.impl()->data.data();
    if (mode == Broadcast::none) {
        kern::mul(ai->data.data(), bi->data.data(), op, n);
    } else {
        const bool left = mode == Broadcast::left;
        const T s = (left ? ai : bi)->data[0];
        const T* x = (left ? bi : ai)->data.data();
        for (i64 i = 0; i < n; ++i) op[i] = x[i] * s;
    }
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, T b) {
    auto ai = a.impl();
    const i64 n = a.numel();
    auto out = make_op_output<T>("add_const", a.shape(), {ai}, [ai, n](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        kern::axpy(T(1), o.grad.data(), ai->grad.data(), n);
    });
    const T* x = ai->data.data();
    T* op = out.impl()->data.data();
    for (i64 i = 0; i < n; ++i) op[i] = x[i] + b;
    return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, T b) {
    auto ai = a.impl();
    const i64 n = a.numel();
    auto out = make_op_output<T>("mul_const", a.shape(), {ai}, [ai, b, n](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        kern::axpy(b, o.grad.data(), ai->grad.data(), n);
    });
    const T* x = ai->data.data();
    T* op = out.impl()->data.data();
    for (i64 i = 0; i < n; ++i) op[i] = x[i] * b;
    return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    auto xi = x.impl();
    const i64 n = x.numel();
    auto out = make_op_output<T>("relu", x.shape(), {xi}, [xi, n](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        kern::relu_bwd(xi->data.data(), o.grad.data(), xi->grad.data(), n);
    });
    kern::relu_fwd(xi->data.data(), out.impl()->data.data(), n);
    return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    auto xi = x.impl();
    const i64 n = x.numel();
    auto out = make_op_output<T>("sigmoid", x.shape(), {xi}, [xi, n](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const T* y = o.data.data();
        const T* gy = o.grad.data();
        T* gx = xi->grad.data();
        for (i64 i = 0; i < n; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
    });
    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    for (i64 i = 0; i < n; ++i) {
        const T v = in[i];
        if (v >= T(0)) {
            const T e = std::exp(-v);
            op[i] = T(1) / (T(1) + e);
        } else {
            const T e = std::exp(v);
            op[i] = e / (T(1) + e);
        }
    }
    return out;
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
    auto xi = x.impl();
    const i64 n = x.numel();
    auto out = make_op_output<T>("tanh", x.shape(), {xi}, [xi, n](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const T* y = o.data.data();
        const T* gy = o.grad.data();
        T* gx = xi->grad.data();
        for (i64 i = 0; i < n; ++i) gx[i] += gy[i] * (T(1) - y[i] * y[i]);
    });
    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    for (i64 i = 0; i < n; ++i) op[i] = std::tanh(in[i]);
    return out;
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis) {
    const int nd = x.ndim();
    const int a = normalize_axis(axis, nd, "log_softmax");
    const auto& s = x.shape();
    const i64 alen = s[static_cast<std::size_t>(a)];
    if (alen == 0) throw ShapeError("log_softmax: axis " + std::to_string(axis) + " is empty");
    i64 outer = 1, inner = 1;
    for (int d = 0; d < a; ++d) outer *= s[static_cast<std::size_t>(d)];
    for (int d = a + 1; d < nd; ++d) inner *= s[static_cast<std::size_t>(d)];

    auto xi = x.impl();
    auto out = make_op_output<T>(
        "log_softmax", x.shape(), {xi}, [xi, outer, alen, inner](TensorImpl<T>& o) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (i64 ou = 0; ou < outer; ++ou)
                for (i64 in = 0; in < inner; ++in) {
                    const i64 base = ou * alen * inner + in;
                    T sg = 0;
                    for (i64 j = 0; j < alen; ++j) sg += o.grad[base + j * inner];
                    for (i64 j = 0; j < alen; ++j) {
                        const i64 k = base + j * inner;
                        xi->grad[k] += o.grad[k] - std::exp(o.data[k]) * sg;
                    }
                }
        });

    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    for (i64 ou = 0; ou < outer; ++ou)
        for (i64 ii = 0; ii < inner; ++ii) {
            const i64 base = ou * alen * inner + ii;
            T m = in[base];
            for (i64 j = 1; j < alen; ++j) m = std::max(m, in[base + j * inner]);
            T acc = 0;
            for (i64 j = 0; j < alen; ++j) acc += std::exp(in[base + j * inner] - m);
            const T shift = m + std::log(acc);
            for (i64 j = 0; j < alen; ++j) {
                const i64 k = base + j * inner;
                op[k] = in[k] - shift;
            }
        }
    return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    auto xi = x.impl();
    const i64 n = x.numel();
    auto out = make_op_output<T>("sum", Shape{}, {xi}, [xi, n](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const T g = o.grad[0];
        T* gx = xi->grad.data();
        for (i64 i = 0; i < n; ++i) gx[i] += g;
    });
    out.impl()->data[0] = kern::reduce_sum(xi->data.data(), n);
    return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel_of(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    auto xi = x.impl();
    const i64 n = x.numel();
    auto out = make_op_output<T>("reshape", std::move(shape), {xi}, [xi, n](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        accumulate_grad(*xi, o.grad.data(), n);
    });
    out.impl()->data = xi->data;
    return out;
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    const int nd = x.ndim();
    if (static_cast<int>(perm.size()) != nd)
        throw ShapeError("permute: got " + std::to_string(perm.size()) + " axes for rank " +
                         std::to_string(nd));
    std::vector<bool> seen(static_cast<std::size_t>(nd), false);
    for (int p : perm) {
        if (p < 0 || p >= nd || seen[static_cast<std::size_t>(p)])
            throw ShapeError("permute: invalid permutation");
        seen[static_cast<std::size_t>(p)] = true;
    }
    const auto& s = x.shape();
    Shape oshape(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) oshape[d] = s[static_cast<std::size_t>(perm[d])];

    // Strides of the input, gathered in output-axis order.
    std::vector<i64> in_strides(static_cast<std::size_t>(nd), 1);
    for (int d = nd - 2; d >= 0; --d) in_strides[d] = in_strides[d + 1] * s[d + 1];
    auto step = std::make_shared<std::vector<i64>>(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) (*step)[d] = in_strides[static_cast<std::size_t>(perm[d])];
    auto osh = std::make_shared<Shape>(oshape);

    auto xi = x.impl();
    const i64 n = x.numel();
    auto out =
        make_op_output<T>("permute", oshape, {xi}, [xi, step, osh, n, nd](TensorImpl<T>& o) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            std::vector<i64> idx(static_cast<std::size_t>(nd), 0);
            i64 src = 0;
            for (i64 f = 0; f < n; ++f) {
                xi->grad[static_cast<std::size_t>(src)] += o.grad[static_cast<std::size_t>(f)];
                for (int d = nd - 1; d >= 0; --d) {
                    src += (*step)[d];
                    if (++idx[d] < (*osh)[d]) break;
                    src -= (*step)[d] * (*osh)[d];
                    idx[d] = 0;
                }
            }
        });

    const T* in = xi->data.data();
    T* op = out.impl()->data.data();
    std::vector<i64> idx(static_cast<std::size_t>(nd), 0);
    i64 src = 0;
    for (i64 f = 0; f < n; ++f) {
        op[f] = in[src];
        for (int d = nd - 1; d >= 0; --d) {
            src += (*step)[d];
            if (++idx[d] < oshape[d]) break;
            src -= (*step)[d] * oshape[d];
            idx[d] = 0;
        }
    }
    return out;
}

template <class T>
Tensor<T> slice_axis0(const Tensor<T>& x, i64 index) {
    if (x.ndim() < 1) throw ShapeError("slice_axis0: scalar input");
    const i64 d0 = x.dim(0);
    if (index < 0 || index >= d0)
        throw ShapeError("slice_axis0: index " + std::to_string(index) + " out of range for " +
                         shape_str(x.shape()));
    Shape oshape(x.shape().begin() + 1, x.shape().end());
    const i64 block = x.numel() / d0;
    auto xi = x.impl();
    auto out =
        make_op_output<T>("slice_axis0", oshape, {xi}, [xi, index, block](TensorImpl<T>& o) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            kern::axpy(T(1), o.grad.data(), xi->grad.data() + index * block, block);
        });
    std::memcpy(out.impl()->data.data(), xi->data.data() + index * block,
                static_cast<std::size_t>(block) * sizeof(T));
    return out;
}

template <class T>
Tensor<T> pick(const Tensor<T>& x, const std::vector<i64>& idx) {
    const auto& s = x.shape();
    if (idx.size() != s.size())
        throw ShapeError("pick: rank " + std::to_string(idx.size()) + " index into " +
                         shape_str(s));
    i64 flat = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= s[i])
            throw ShapeError("pick: component " + std::to_string(i) + "=" +
                             std::to_string(idx[i]) + " out of range for " + shape_str(s));
        flat = flat * s[i] + idx[i];
    }
    auto xi = x.impl();
    auto out = make_op_output<T>("pick", Shape{}, {xi}, [xi, flat](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        xi->grad[static_cast<std::size_t>(flat)] += o.grad[0];
    });
    out.impl()->data[0] = xi->data[static_cast<std::size_t>(flat)];
    return out;
}

#define ORIGAMI_INSTANTIATE_OPS(T)                                                               \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Stride2, \
                                 Stride2);                                                       \
    template Tensor<T> maxpool2d<T>(const Tensor<T>&, Stride2, Stride2);                         \
    template Tensor<T> bilinear_resize<T>(const Tensor<T>&, i64, i64);                          \
    template Tensor<T> static_layer_norm<T>(const Tensor<T>&);                                   \
    template Tensor<T> mean_over_axis<T>(const Tensor<T>&, int);                                 \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> add<T>(const Tensor<T>&, T);                                              \
    template Tensor<T> mul<T>(const Tensor<T>&, T);                                              \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                             \
    template Tensor<T> tanh<T>(const Tensor<T>&);                                                \
    template Tensor<T> log_softmax<T>(const Tensor<T>&, int);                                    \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                    \
    template Tensor<T> slice_axis0<T>(const Tensor<T>&, i64);                                    \
    template Tensor<T> pick<T>(const Tensor<T>&, const std::vector<i64>&);

ORIGAMI_INSTANTIATE_OPS(float)
ORIGAMI_INSTANTIATE_OPS(double)

}  // namespace origami
