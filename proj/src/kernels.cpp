#include "origami/kernels.hpp"

#include "kernels_internal.hpp"
#include "origami/errors.hpp"

#include <atomic>

namespace origami::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa detect() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

inline bool use_avx2() {
#if defined(__x86_64__)
    return current().load(std::memory_order_relaxed) == Isa::avx2;
#else
    return false;
#endif
}

} // namespace

Isa active_isa() { return current().load(); }

std::string isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2())
        throw ConfigError("force_isa: this CPU does not support AVX2+FMA");
    current().store(isa);
}

void reset_isa() { current().store(detect()); }

#if defined(__x86_64__)
#define ORIGAMI_DISPATCH(fn, ...)                                  \
    do {                                                           \
        if (use_avx2()) return avx2_impl::fn(__VA_ARGS__);         \
        return scalar_impl::fn(__VA_ARGS__);                       \
    } while (0)
#else
#define ORIGAMI_DISPATCH(fn, ...) return scalar_impl::fn(__VA_ARGS__)
#endif

template <class T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    ORIGAMI_DISPATCH(gemm_nn, m, n, k, a, b, c, acc);
}
template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    ORIGAMI_DISPATCH(gemm_nt, m, n, k, a, b, c, acc);
}
template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    ORIGAMI_DISPATCH(gemm_tn, m, n, k, a, b, c, acc);
}
template <class T>
void add(const T* a, const T* b, T* out, std::int64_t n) {
    ORIGAMI_DISPATCH(add, a, b, out, n);
}
template <class T>
void mul(const T* a, const T* b, T* out, std::int64_t n) {
    ORIGAMI_DISPATCH(mul, a, b, out, n);
}
template <class T>
void axpy(T alpha, const T* x, T* y, std::int64_t n) {
    ORIGAMI_DISPATCH(axpy, alpha, x, y, n);
}
template <class T>
void scale(const T* x, T alpha, T* out, std::int64_t n) {
    ORIGAMI_DISPATCH(scale, x, alpha, out, n);
}
template <class T>
void relu_fwd(const T* x, T* y, std::int64_t n) {
    ORIGAMI_DISPATCH(relu_fwd, x, y, n);
}
template <class T>
void relu_bwd(const T* x, const T* gy, T* gx, std::int64_t n) {
    ORIGAMI_DISPATCH(relu_bwd, x, gy, gx, n);
}
template <class T>
T reduce_sum(const T* x, std::int64_t n) {
    ORIGAMI_DISPATCH(reduce_sum, x, n);
}
template <class T>
T reduce_max(const T* x, std::int64_t n) {
    ORIGAMI_DISPATCH(reduce_max, x, n);
}
template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::int64_t n,
                 T lr_t, T beta1, T beta2, T eps_hat) {
    ORIGAMI_DISPATCH(adam_update, p, g, m, v, n, lr_t, beta1, beta2, eps_hat);
}

#undef ORIGAMI_DISPATCH

#define ORIGAMI_INSTANTIATE_DISPATCH(T)                                                 \
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

ORIGAMI_INSTANTIATE_DISPATCH(float)
ORIGAMI_INSTANTIATE_DISPATCH(double)

} // namespace origami::kern
