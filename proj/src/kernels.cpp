#include "cadis/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "cadis/detail/kernels_avx2.hpp"
#include "cadis/detail/kernels_scalar.hpp"

namespace cadis::kernels {

namespace {

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa pick_initial() {
    if (const char* env = std::getenv("CADIS_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Isa::Avx2;
    }
    return avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

Isa g_isa = pick_initial();

}  // namespace

Isa active_isa() { return g_isa; }

bool set_isa(Isa isa) {
    if (isa == Isa::Avx2 && !avx2_supported()) return false;
    g_isa = isa;
    return true;
}

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "?";
}

#define CADIS_DISPATCH(fn, ...)                         \
    if (g_isa == Isa::Avx2) return avx2::fn(__VA_ARGS__); \
    return scalar::fn(__VA_ARGS__)

void add(const float* a, const float* b, float* out, std::size_t n) { CADIS_DISPATCH(add, a, b, out, n); }
void add(const double* a, const double* b, double* out, std::size_t n) { CADIS_DISPATCH(add, a, b, out, n); }
void sub(const float* a, const float* b, float* out, std::size_t n) { CADIS_DISPATCH(sub, a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { CADIS_DISPATCH(sub, a, b, out, n); }
void mul(const float* a, const float* b, float* out, std::size_t n) { CADIS_DISPATCH(mul, a, b, out, n); }
void mul(const double* a, const double* b, double* out, std::size_t n) { CADIS_DISPATCH(mul, a, b, out, n); }
void scale(const float* a, float s, float* out, std::size_t n) { CADIS_DISPATCH(scale, a, s, out, n); }
void scale(const double* a, double s, double* out, std::size_t n) { CADIS_DISPATCH(scale, a, s, out, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { CADIS_DISPATCH(axpy, alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { CADIS_DISPATCH(axpy, alpha, x, y, n); }
float dot(const float* a, const float* b, std::size_t n) { CADIS_DISPATCH(dot, a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { CADIS_DISPATCH(dot, a, b, n); }
float sum(const float* a, std::size_t n) { CADIS_DISPATCH(sum, a, n); }
double sum(const double* a, std::size_t n) { CADIS_DISPATCH(sum, a, n); }
float sumsq(const float* a, std::size_t n) { CADIS_DISPATCH(sumsq, a, n); }
double sumsq(const double* a, std::size_t n) { CADIS_DISPATCH(sumsq, a, n); }

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
    CADIS_DISPATCH(gemm, trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
    CADIS_DISPATCH(gemm, trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#undef CADIS_DISPATCH

}  // namespace cadis::kernels
