#pragma once

#include <cstddef>

// AVX2/FMA lane. Definitions live in src/kernels_avx2.cpp which is the only
// TU compiled with -mavx2 -mfma.

namespace cadis::kernels::avx2 {

void add(const float* a, const float* b, float* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const float* a, float s, float* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
float sum(const float* a, std::size_t n);
double sum(const double* a, std::size_t n);
float sumsq(const float* a, std::size_t n);
double sumsq(const double* a, std::size_t n);
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

}  // namespace cadis::kernels::avx2
