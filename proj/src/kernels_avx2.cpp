#include "kernels_internal.hpp"

#if defined(__x86_64__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma;
// nothing here runs unless the dispatcher verified CPU support first.

namespace origami::kern::avx2_impl {

namespace {

template <class T> struct vec;

template <> struct vec<float> {
    using reg = __m256;
    static constexpr int width = 8;
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg set1(float x) { return _mm256_set1_ps(x); }
    static reg zero() { return _mm256_setzero_ps(); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
    static reg gt_mask(reg a, reg b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
    static reg mask_and(reg a, reg m) { return _mm256_and_ps(a, m); }
    static float hsum(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_add_ps(lo, hi);
        lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
        lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
        return _mm_cvtss_f32(lo);
    }
    static float hmax(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_max_ps(lo, hi);
        lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
        lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
        return _mm_cvtss_f32(lo);
    }
};

template <> struct vec<double> {
    using reg = __m256d;
    static constexpr int width = 4;
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg set1(double x) { return _mm256_set1_pd(x); }
    static reg zero() { return _mm256_setzero_pd(); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
    static reg gt_mask(reg a, reg b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
    static reg mask_and(reg a, reg m) { return _mm256_and_pd(a, m); }
    static double hsum(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_add_pd(lo, hi);
        lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
        return _mm_cvtsd_f64(lo);
    }
    static double hmax(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_max_pd(lo, hi);
        lo = _mm_max_sd(lo, _mm_unpackhi_pd(lo, lo));
        return _mm_cvtsd_f64(lo);
    }
};

// C[M,N] (+)= op(A) * B with op(A) either A[M,K] or A[K,M] transposed.
// Register tile: 4 rows of C by 2 vectors, K in the inner loop so the A
// broadcasts amortize over both column vectors.
template <class T, bool a_trans>
void gemm_bcast(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    using V = vec<T>;
    using reg = typename V::reg;
    constexpr int W = V::width;
    constexpr int NR = 2 * W;

    auto a_at = [&](int i, int p) -> T {
        return a_trans ? a[static_cast<std::int64_t>(p) * m + i]
                       : a[static_cast<std::int64_t>(i) * k + p];
    };

    if (!acc) std::fill(c, c + static_cast<std::int64_t>(m) * n, T(0));

    for (int i0 = 0; i0 < m; i0 += 4) {
        const int rows = std::min(4, m - i0);
        int j = 0;
        for (; j + NR <= n; j += NR) {
            reg acc0[4], acc1[4];
            for (int r = 0; r < rows; ++r) {
                acc0[r] = V::load(c + static_cast<std::int64_t>(i0 + r) * n + j);
                acc1[r] = V::load(c + static_cast<std::int64_t>(i0 + r) * n + j + W);
            }
            for (int p = 0; p < k; ++p) {
                const reg b0 = V::load(b + static_cast<std::int64_t>(p) * n + j);
                const reg b1 = V::load(b + static_cast<std::int64_t>(p) * n + j + W);
                for (int r = 0; r < rows; ++r) {
                    const reg av = V::set1(a_at(i0 + r, p));
                    acc0[r] = V::fmadd(av, b0, acc0[r]);
                    acc1[r] = V::fmadd(av, b1, acc1[r]);
                }
            }
            for (int r = 0; r < rows; ++r) {
                V::store(c + static_cast<std::int64_t>(i0 + r) * n + j, acc0[r]);
                V::store(c + static_cast<std::int64_t>(i0 + r) * n + j + W, acc1[r]);
            }
        }
        for (; j + W <= n; j += W) {
            reg accv[4];
            for (int r = 0; r < rows; ++r)
                accv[r] = V::load(c + static_cast<std::int64_t>(i0 + r) * n + j);
            for (int p = 0; p < k; ++p) {
                const reg b0 = V::load(b + static_cast<std::int64_t>(p) * n + j);
                for (int r = 0; r < rows; ++r)
                    accv[r] = V::fmadd(V::set1(a_at(i0 + r, p)), b0, accv[r]);
            }
            for (int r = 0; r < rows; ++r)
                V::store(c + static_cast<std::int64_t>(i0 + r) * n + j, accv[r]);
        }
        for (; j < n; ++j) {
            for (int r = 0; r < rows; ++r) {
                T sum = c[static_cast<std::int64_t>(i0 + r) * n + j];
                for (int p = 0; p < k; ++p)
                    sum += a_at(i0 + r, p) * b[static_cast<std::int64_t>(p) * n + j];
                c[static_cast<std::int64_t>(i0 + r) * n + j] = sum;
            }
        }
    }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T, vectorized dot products over K.
template <class T>
void gemm_dot(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    using V = vec<T>;
    using reg = typename V::reg;
    constexpr int W = V::width;

    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::int64_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::int64_t>(j) * k;
            reg accv = V::zero();
            int p = 0;
            for (; p + W <= k; p += W)
                accv = V::fmadd(V::load(arow + p), V::load(brow + p), accv);
            T sum = V::hsum(accv);
            for (; p < k; ++p) sum += arow[p] * brow[p];
            T* cp = c + static_cast<std::int64_t>(i) * n + j;
            *cp = acc ? *cp + sum : sum;
        }
    }
}

} // namespace

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
    gemm_bcast<float, false>(m, n, k, a, b, c, acc);
}
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
    gemm_bcast<float, true>(m, n, k, a, b, c, acc);
}
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
    gemm_dot<float>(m, n, k, a, b, c, acc);
}
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool acc) {
    gemm_bcast<double, false>(m, n, k, a, b, c, acc);
}
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool acc) {
    gemm_bcast<double, true>(m, n, k, a, b, c, acc);
}
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool acc) {
    gemm_dot<double>(m, n, k, a, b, c, acc);
}

template <class T>
void add(const T* a, const T* b, T* out, std::int64_t n) {
    using V = vec<T>;
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width)
        V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, std::int64_t n) {
    using V = vec<T>;
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width)
        V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::int64_t n) {
    using V = vec<T>;
    const auto av = V::set1(alpha);
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width)
        V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(const T* x, T alpha, T* out, std::int64_t n) {
    using V = vec<T>;
    const auto av = V::set1(alpha);
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width)
        V::store(out + i, V::mul(av, V::load(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

template <class T>
void relu_fwd(const T* x, T* y, std::int64_t n) {
    using V = vec<T>;
    const auto z = V::zero();
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width)
        V::store(y + i, V::max(V::load(x + i), z));
    for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* x, const T* gy, T* gx, std::int64_t n) {
    using V = vec<T>;
    const auto z = V::zero();
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width) {
        const auto mask = V::gt_mask(V::load(x + i), z);
        const auto g = V::mask_and(V::load(gy + i), mask);
        V::store(gx + i, V::add(V::load(gx + i), g));
    }
    for (; i < n; ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
}

template <class T>
T reduce_sum(const T* x, std::int64_t n) {
    using V = vec<T>;
    auto accv = V::zero();
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width) accv = V::add(accv, V::load(x + i));
    T s = V::hsum(accv);
    for (; i < n; ++i) s += x[i];
    return s;
}

template <class T>
T reduce_max(const T* x, std::int64_t n) {
    using V = vec<T>;
    T best = x[0];
    std::int64_t i = 0;
    if (n >= V::width) {
        auto accv = V::load(x);
        i = V::width;
        for (; i + V::width <= n; i += V::width) accv = V::max(accv, V::load(x + i));
        best = V::hmax(accv);
    }
    for (; i < n; ++i) best = std::max(best, x[i]);
    return best;
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::int64_t n,
                 T lr_t, T beta1, T beta2, T eps_hat) {
    using V = vec<T>;
    const auto b1 = V::set1(beta1);
    const auto b1c = V::set1(T(1) - beta1);
    const auto b2 = V::set1(beta2);
    const auto b2c = V::set1(T(1) - beta2);
    const auto lr = V::set1(lr_t);
    const auto eps = V::set1(eps_hat);
    std::int64_t i = 0;
    for (; i + V::width <= n; i += V::width) {
        const auto gv = V::load(g + i);
        auto mv = V::fmadd(b1, V::load(m + i), V::mul(b1c, gv));
        auto vv = V::fmadd(b2, V::load(v + i), V::mul(b2c, V::mul(gv, gv)));
        V::store(m + i, mv);
        V::store(v + i, vv);
        const auto step = V::div(V::mul(lr, mv), V::add(V::sqrt(vv), eps));
        V::store(p + i, V::sub(V::load(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps_hat);
    }
}

#define ORIGAMI_INSTANTIATE_AVX2(T)                                                     \
    template void add<T>(const T*, const T*, T*, std::int64_t);                         \
    template void mul<T>(const T*, const T*, T*, std::int64_t);                         \
    template void axpy<T>(T, const T*, T*, std::int64_t);                               \
    template void scale<T>(const T*, T, T*, std::int64_t);                              \
    template void relu_fwd<T>(const T*, T*, std::int64_t);                              \
    template void relu_bwd<T>(const T*, const T*, T*, std::int64_t);                    \
    template T reduce_sum<T>(const T*, std::int64_t);                                   \
    template T reduce_max<T>(const T*, std::int64_t);                                   \
    template void adam_update<T>(T*, const T*, T*, T*, std::int64_t, T, T, T, T);

ORIGAMI_INSTANTIATE_AVX2(float)
ORIGAMI_INSTANTIATE_AVX2(double)

} // namespace origami::kern::avx2_impl

#endif // __x86_64__
