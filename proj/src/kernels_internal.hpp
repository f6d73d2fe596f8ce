#pragma once

#include <cstdint>

// Implementation namespaces behind the dispatch in kernels.cpp.

namespace origami::kern {

namespace scalar_impl {

template <class T> void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool acc);
template <class T> void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool acc);
template <class T> void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool acc);
template <class T> void add(const T* a, const T* b, T* out, std::int64_t n);
template <class T> void mul(const T* a, const T* b, T* out, std::int64_t n);
template <class T> void axpy(T alpha, const T* x, T* y, std::int64_t n);
template <class T> void scale(const T* x, T alpha, T* out, std::int64_t n);
template <class T> void relu_fwd(const T* x, T* y, std::int64_t n);
template <class T> void relu_bwd(const T* x, const T* gy, T* gx, std::int64_t n);
template <class T> T reduce_sum(const T* x, std::int64_t n);
template <class T> T reduce_max(const T* x, std::int64_t n);
template <class T> void adam_update(T* p, const T* g, T* m, T* v, std::int64_t n,
                                    T lr_t, T beta1, T beta2, T eps_hat);

} // namespace scalar_impl

#if defined(__x86_64__)
namespace avx2_impl {

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool acc);
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool acc);
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool acc);
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool acc);
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool acc);
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool acc);

template <class T> void add(const T* a, const T* b, T* out, std::int64_t n);
template <class T> void mul(const T* a, const T* b, T* out, std::int64_t n);
template <class T> void axpy(T alpha, const T* x, T* y, std::int64_t n);
template <class T> void scale(const T* x, T alpha, T* out, std::int64_t n);
template <class T> void relu_fwd(const T* x, T* y, std::int64_t n);
template <class T> void relu_bwd(const T* x, const T* gy, T* gx, std::int64_t n);
template <class T> T reduce_sum(const T* x, std::int64_t n);
template <class T> T reduce_max(const T* x, std::int64_t n);
template <class T> void adam_update(T* p, const T* g, T* m, T* v, std::int64_t n,
                                    T lr_t, T beta1, T beta2, T eps_hat);

} // namespace avx2_impl
#endif

} // namespace origami::kern
