#include "cadis/detail/kernels_avx2.hpp"

#include <immintrin.h>

namespace cadis::kernels::avx2 {

namespace {

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_hadd_pd(lo, lo);
    return _mm_cvtsd_f64(lo);
}

}  // namespace

void add(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const float* a, float s, float* out, std::size_t n) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vs));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void scale(const double* a, double s, double* out, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

float sum(const float* a, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
    float r = hsum(acc);
    for (; i < n; ++i) r += a[i];
    return r;
}

double sum(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i];
    return r;
}

float sumsq(const float* a, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(a + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float r = hsum(acc);
    for (; i < n; ++i) r += a[i] * a[i];
    return r;
}

double sumsq(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(a + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i] * a[i];
    return r;
}

namespace {

// Register-blocked f64 kernel for the B-not-transposed case: 4 rows of A
// against 8 columns of C held in accumulators, so each B load is reused
// four times.
template <bool TA>
void gemm_block_nn_pd(int m, int n, int k, double alpha, const double* a, int lda,
                      const double* b, int ldb, double* c, int ldc) {
    auto at = [&](int i, int p) -> double {
        return TA ? a[static_cast<std::size_t>(p) * lda + i]
                  : a[static_cast<std::size_t>(i) * lda + p];
    };
    const __m256d valpha = _mm256_set1_pd(alpha);
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc[4][2];
            for (int r = 0; r < 4; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const double* brow = b + static_cast<std::size_t>(p) * ldb + j;
                __m256d b0 = _mm256_loadu_pd(brow);
                __m256d b1 = _mm256_loadu_pd(brow + 4);
                for (int r = 0; r < 4; ++r) {
                    __m256d av = _mm256_set1_pd(at(i + r, p));
                    acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
                }
            }
            for (int r = 0; r < 4; ++r) {
                double* crow = c + static_cast<std::size_t>(i + r) * ldc + j;
                _mm256_storeu_pd(crow,
                                 _mm256_fmadd_pd(valpha, acc[r][0], _mm256_loadu_pd(crow)));
                _mm256_storeu_pd(crow + 4,
                                 _mm256_fmadd_pd(valpha, acc[r][1], _mm256_loadu_pd(crow + 4)));
            }
        }
        for (; j < n; ++j)
            for (int r = 0; r < 4; ++r) {
                double acc = 0;
                for (int p = 0; p < k; ++p)
                    acc += at(i + r, p) * b[static_cast<std::size_t>(p) * ldb + j];
                c[static_cast<std::size_t>(i + r) * ldc + j] += alpha * acc;
            }
    }
    for (; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        for (int p = 0; p < k; ++p) {
            double av = alpha * at(i, p);
            if (av != 0.0) axpy(av, b + static_cast<std::size_t>(p) * ldb, crow,
                                static_cast<std::size_t>(n));
        }
    }
}

// 2x2 dot tiles for the B-transposed (A not transposed) case.
void gemm_block_nt_pd(int m, int n, int k, double alpha, const double* a, int lda,
                      const double* b, int ldb, double* c, int ldc) {
    int i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + static_cast<std::size_t>(i) * lda;
        const double* a1 = a0 + lda;
        int j = 0;
        for (; j + 2 <= n; j += 2) {
            const double* b0 = b + static_cast<std::size_t>(j) * ldb;
            const double* b1 = b0 + ldb;
            __m256d s00 = _mm256_setzero_pd(), s01 = s00, s10 = s00, s11 = s00;
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                __m256d va0 = _mm256_loadu_pd(a0 + p);
                __m256d va1 = _mm256_loadu_pd(a1 + p);
                __m256d vb0 = _mm256_loadu_pd(b0 + p);
                __m256d vb1 = _mm256_loadu_pd(b1 + p);
                s00 = _mm256_fmadd_pd(va0, vb0, s00);
                s01 = _mm256_fmadd_pd(va0, vb1, s01);
                s10 = _mm256_fmadd_pd(va1, vb0, s10);
                s11 = _mm256_fmadd_pd(va1, vb1, s11);
            }
            double d00 = hsum(s00), d01 = hsum(s01), d10 = hsum(s10), d11 = hsum(s11);
            for (; p < k; ++p) {
                d00 += a0[p] * b0[p];
                d01 += a0[p] * b1[p];
                d10 += a1[p] * b0[p];
                d11 += a1[p] * b1[p];
            }
            c[static_cast<std::size_t>(i) * ldc + j] += alpha * d00;
            c[static_cast<std::size_t>(i) * ldc + j + 1] += alpha * d01;
            c[static_cast<std::size_t>(i + 1) * ldc + j] += alpha * d10;
            c[static_cast<std::size_t>(i + 1) * ldc + j + 1] += alpha * d11;
        }
        for (; j < n; ++j) {
            c[static_cast<std::size_t>(i) * ldc + j] +=
                alpha * dot(a0, b + static_cast<std::size_t>(j) * ldb, static_cast<std::size_t>(k));
            c[static_cast<std::size_t>(i + 1) * ldc + j] +=
                alpha * dot(a1, b + static_cast<std::size_t>(j) * ldb, static_cast<std::size_t>(k));
        }
    }
    for (; i < m; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i) * ldc + j] +=
                alpha * dot(a + static_cast<std::size_t>(i) * lda,
                            b + static_cast<std::size_t>(j) * ldb, static_cast<std::size_t>(k));
}

// nn / tn: accumulate alpha * a_ip * B[p,:] into C[i,:] (axpy over rows of B).
// nt: C[i,j] = dot(row_i(A), row_j(B)).
template <typename T>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k,
               T alpha, const T* a, int lda, const T* b, int ldb,
               T beta, T* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * ldc;
        if (beta == T(0)) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        } else if (beta != T(1)) {
            scale(crow, beta, crow, static_cast<std::size_t>(n));
        }
        if (!trans_b) {
            for (int p = 0; p < k; ++p) {
                T av = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                               : a[static_cast<std::size_t>(i) * lda + p];
                av *= alpha;
                if (av != T(0))
                    axpy(av, b + static_cast<std::size_t>(p) * ldb, crow,
                         static_cast<std::size_t>(n));
            }
        } else {
            for (int j = 0; j < n; ++j) {
                T acc;
                if (!trans_a) {
                    acc = dot(a + static_cast<std::size_t>(i) * lda,
                              b + static_cast<std::size_t>(j) * ldb,
                              static_cast<std::size_t>(k));
                } else {
                    acc = T(0);
                    for (int p = 0; p < k; ++p)
                        acc += a[static_cast<std::size_t>(p) * lda + i] *
                               b[static_cast<std::size_t>(j) * ldb + p];
                }
                crow[j] += alpha * acc;
            }
        }
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
    if (trans_a && trans_b) {
        gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
        return;
    }
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        if (beta == 0.0) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0;
        } else if (beta != 1.0) {
            scale(crow, beta, crow, static_cast<std::size_t>(n));
        }
    }
    if (!trans_b) {
        if (trans_a)
            gemm_block_nn_pd<true>(m, n, k, alpha, a, lda, b, ldb, c, ldc);
        else
            gemm_block_nn_pd<false>(m, n, k, alpha, a, lda, b, ldb, c, ldc);
    } else {
        gemm_block_nt_pd(m, n, k, alpha, a, lda, b, ldb, c, ldc);
    }
}

}  // namespace cadis::kernels::avx2
