#pragma once

#include <cstddef>

namespace cadaseg {

// Small dense kernels used by the convolution layers. All accumulate into
// C so a caller can fuse several contributions. Row-major throughout; the
// inner loops run over contiguous memory so the compiler can vectorize.

// C(M x N) += A(M x K) * B(K x N)
template <typename T>
void gemm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c,
              int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* __restrict ci = c + static_cast<size_t>(i) * n;
        const T* __restrict ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T aik = ai[p];
            if (aik == T(0)) continue;
            const T* __restrict bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aik * bp[j];
        }
    }
}

// C(M x K) += A(M x N) * B(K x N)^T
template <typename T>
void gemm_abt_acc(const T* __restrict a, const T* __restrict b,
                  T* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* __restrict ai = a + static_cast<size_t>(i) * n;
        T* __restrict ci = c + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T* __restrict bp = b + static_cast<size_t>(p) * n;
            T acc = T(0);
            for (int j = 0; j < n; ++j) acc += ai[j] * bp[j];
            ci[p] += acc;
        }
    }
}

// C(K x N) += A(M x K)^T * B(M x N)
template <typename T>
void gemm_atb_acc(const T* __restrict a, const T* __restrict b,
                  T* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* __restrict ai = a + static_cast<size_t>(i) * k;
        const T* __restrict bi = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T aip = ai[p];
            if (aip == T(0)) continue;
            T* __restrict cp = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

}  // namespace cadaseg
