#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace tsan::detail {

// C[M,N] (+)= op(A) * op(B).
//   A: M x K with row stride lda, or K x M when trans_a.
//   B: K x N with row stride ldb, or N x K when trans_b.
// Rows of A may overlap (lda < K), which conv1d relies on.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* A,
          std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < M; ++i) std::fill(C + i * ldc, C + i * ldc + N, T{0});
  }
  if (M == 0 || N == 0 || K == 0) return;

  if (trans_b) {
    std::vector<T> bt(K * N);
    for (std::size_t n = 0; n < N; ++n) {
      const T* brow = B + n * ldb;
      for (std::size_t k = 0; k < K; ++k) bt[k * N + n] = brow[k];
    }
    gemm(trans_a, false, M, N, K, A, lda, bt.data(), N, C, ldc, true);
    return;
  }

  constexpr std::size_t kBlock = 128;
  for (std::size_t k0 = 0; k0 < K; k0 += kBlock) {
    const std::size_t k1 = std::min(K, k0 + kBlock);
    if (!trans_a) {
      for (std::size_t i = 0; i < M; ++i) {
        T* __restrict crow = C + i * ldc;
        const T* arow = A + i * lda;
        for (std::size_t k = k0; k < k1; ++k) {
          const T a = arow[k];
          const T* __restrict brow = B + k * ldb;
          for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
      }
    } else {
      for (std::size_t k = k0; k < k1; ++k) {
        const T* arow = A + k * lda;
        const T* __restrict brow = B + k * ldb;
        for (std::size_t i = 0; i < M; ++i) {
          const T a = arow[i];
          T* __restrict crow = C + i * ldc;
          for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
      }
    }
  }
}

}  // namespace tsan::detail
