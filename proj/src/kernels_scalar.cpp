#include "kernels_internal.hpp"

#include <algorithm>
#include <cmath>

// Reference kernels. Plain loops, no blocking; these define the semantics
// the vector variants are tested against.

namespace origami::kern::scalar_impl {

template <class T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::int64_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = a[static_cast<std::int64_t>(i) * k + p];
            const T* brow = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::int64_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::int64_t>(j) * k;
            T sum = 0;
            for (int p = 0; p < k; ++p) sum += arow[p] * brow[p];
            T* cp = c + static_cast<std::int64_t>(i) * n + j;
            *cp = acc ? *cp + sum : sum;
        }
    }
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::int64_t>(m) * n, T(0));
    for (int p = 0; p < k; ++p) {
        const T* bp = b + static_cast<std::int64_t>(p) * n;
        const T* ap = a + static_cast<std::int64_t>(p) * m;
        for (int i = 0; i < m; ++i) {
            const T av = ap[i];
            T* crow = c + static_cast<std::int64_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * bp[j];
        }
    }
}

template <class T>
void add(const T* a, const T* b, T* out, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(const T* x, T alpha, T* out, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class T>
void relu_fwd(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* x, const T* gy, T* gx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
}

template <class T>
T reduce_sum(const T* x, std::int64_t n) {
    T s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

template <class T>
T reduce_max(const T* x, std::int64_t n) {
    T best = x[0];
    for (std::int64_t i = 1; i < n; ++i) best = std::max(best, x[i]);
    return best;
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::int64_t n,
                 T lr_t, T beta1, T beta2, T eps_hat) {
    for (std::int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps_hat);
    }
}

#define ORIGAMI_INSTANTIATE_SCALAR(T)                                                   \
    template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);              \
    template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);              \
    template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);              \
    template void add<T>(const T*, const T*, T*, std::int64_t);                         \
    template void mul<T>(const T*, const T*, T*, std::int64_t);                         \
    template void axpy<T>(T, const T*, T*, std::int64_t);                               \
    template void scale<T>(const T*, T, T*, std::int64_t);                              \
    template void relu_fwd<T>(const T*, T*, std::int64_t);                              \
    template void relu_bwd<T>(const T*, const T*, T*, std::int64_t);                    \
    template T reduce_sum<T>(const T*, std::int64_t);                                   \
    template T reduce_max<T>(const T*, std::int64_t);                                   \
    template void adam_update<T>(T*, const T*, T*, T*, std::int64_t, T, T, T, T);

ORIGAMI_INSTANTIATE_SCALAR(float)
ORIGAMI_INSTANTIATE_SCALAR(double)

} // namespace origami::kern::scalar_impl
