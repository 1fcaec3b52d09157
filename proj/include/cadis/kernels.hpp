#pragma once

#include <cstddef>

// Data-parallel arithmetic kernels. Every operation exists in a scalar
// reference form and an AVX2 form; the dispatcher picks the widest ISA the
// CPU supports at first use. set_isa() can pin a lane (used by the
// equivalence tests and the CADIS_ISA environment variable).

namespace cadis::kernels {

enum class Isa { Scalar, Avx2 };

Isa active_isa();
bool set_isa(Isa isa);  // false if the requested ISA is unsupported
const char* isa_name(Isa isa);

// Elementwise, out may alias a or b.
void add(const float* a, const float* b, float* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const float* a, float s, float* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// Reductions.
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
float sum(const float* a, std::size_t n);
double sum(const double* a, std::size_t n);
float sumsq(const float* a, std::size_t n);
double sumsq(const double* a, std::size_t n);

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C,
// op(A) is M x K, op(B) is K x N, C is M x N.
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

}  // namespace cadis::kernels
