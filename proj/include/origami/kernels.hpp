#pragma once

#include <cstdint>
#include <string>

// Data-parallel inner loops used by the tensor ops and the optimizer.
// Every kernel has a scalar reference implementation and, on x86-64 CPUs
// with AVX2+FMA, a vectorized variant selected at runtime. The two paths
// are equivalence-tested; transcendentals (exp/tanh) stay scalar in both
// paths so results do not depend on the selected ISA.

namespace origami::kern {

enum class Isa { scalar, avx2 };

// ISA actually in use for vectorizable kernels.
Isa active_isa();
std::string isa_name(Isa isa);

// Test hook: force a path. Isa::avx2 throws on CPUs without AVX2 support.
void force_isa(Isa isa);
void reset_isa();

// Row-major matrix products. When accumulate is false, C is overwritten.
//   gemm_nn: C[M,N] (+)= A[M,K] * B[K,N]
//   gemm_nt: C[M,N] (+)= A[M,K] * B[N,K]^T   (dot products over K)
//   gemm_tn: C[M,N] (+)= A[K,M]^T * B[K,N]
template <class T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

template <class T> void add(const T* a, const T* b, T* out, std::int64_t n);
template <class T> void mul(const T* a, const T* b, T* out, std::int64_t n);
template <class T> void axpy(T alpha, const T* x, T* y, std::int64_t n); // y += alpha*x
template <class T> void scale(const T* x, T alpha, T* out, std::int64_t n);

template <class T> void relu_fwd(const T* x, T* y, std::int64_t n);
// gx += gy where x > 0 (gradient at 0 is 0)
template <class T> void relu_bwd(const T* x, const T* gy, T* gx, std::int64_t n);

template <class T> T reduce_sum(const T* x, std::int64_t n);
template <class T> T reduce_max(const T* x, std::int64_t n);

// One Adam update with bias-corrected step size already folded into lr_t:
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2;  p -= lr_t * m / (sqrt(v) + eps_hat)
// Callers pass lr_t = lr*sqrt(1-b2^t)/(1-b1^t) and eps_hat = eps*sqrt(1-b2^t).
template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::int64_t n,
                 T lr_t, T beta1, T beta2, T eps_hat);

} // namespace origami::kern
