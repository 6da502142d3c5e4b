#pragma once

#include <cstdint>

#include "dawp/tensor.hpp"

namespace dawp::nn {

using i64 = std::int64_t;

/// C[M,N] += A[M,K] * B[K,N]. axpy-structured inner loop (contiguous over N)
/// so the compiler can vectorize without reassociating sums; the accumulation
/// order is fixed, keeping results bit-reproducible.
template <typename T>
void gemm_nn_acc(const T* A, const T* B, T* C, i64 M, i64 K, i64 N) {
  for (i64 i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (i64 k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// C[M,N] += A^T * B with A stored [K,M], B [K,N].
template <typename T>
void gemm_tn_acc(const T* A, const T* B, T* C, i64 M, i64 K, i64 N) {
  for (i64 k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (i64 i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + i * N;
      for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// dst[N,M] = src[M,N] transposed.
template <typename T>
void transpose(const T* src, T* dst, i64 M, i64 N) {
  for (i64 i = 0; i < M; ++i)
    for (i64 j = 0; j < N; ++j) dst[j * M + i] = src[i * N + j];
}

/// out[R,O] = x[R,I] * W[I,O] + b (b broadcast per row; pass nullptr to skip).
template <typename T>
void linear_forward(const T* x, const T* W, const T* b, T* out, i64 R, i64 I, i64 O) {
  for (i64 r = 0; r < R; ++r) {
    T* row = out + r * O;
    if (b) {
      for (i64 j = 0; j < O; ++j) row[j] = b[j];
    } else {
      for (i64 j = 0; j < O; ++j) row[j] = T(0);
    }
  }
  gemm_nn_acc(x, W, out, R, I, O);
}

}  // namespace dawp::nn
