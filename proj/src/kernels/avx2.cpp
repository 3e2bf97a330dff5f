// AVX2 + FMA variants. Compiled with target attributes so the rest of the
// library stays baseline x86-64; only called after a CPUID check.

#include "win/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define WIN_TARGET_AVX2 __attribute__((target("avx2,fma")))
#define WIN_HAVE_X86 1
#else
#define WIN_TARGET_AVX2
#define WIN_HAVE_X86 0
#endif

namespace win::kernels::avx2 {

#if WIN_HAVE_X86

namespace {

WIN_TARGET_AVX2 inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

WIN_TARGET_AVX2 inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

}  // namespace

WIN_TARGET_AVX2 float dot(std::size_t n, const float* x, const float* y) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    }
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

WIN_TARGET_AVX2 double dot(std::size_t n, const double* x, const double* y) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

WIN_TARGET_AVX2 void axpy(std::size_t n, float alpha, const float* x, float* y) {
    const __m256 a = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(a, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

WIN_TARGET_AVX2 void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

WIN_TARGET_AVX2 void madd(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                                _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

WIN_TARGET_AVX2 void madd(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                                _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

#else  // no x86: route to the scalar reference so the symbols exist

float dot(std::size_t n, const float* x, const float* y) { return scalar::dot(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return scalar::dot(n, x, y); }
void axpy(std::size_t n, float a, const float* x, float* y) { scalar::axpy(n, a, x, y); }
void axpy(std::size_t n, double a, const double* x, double* y) { scalar::axpy(n, a, x, y); }
void madd(std::size_t n, const float* a, const float* b, float* y) { scalar::madd(n, a, b, y); }
void madd(std::size_t n, const double* a, const double* b, double* y) { scalar::madd(n, a, b, y); }

#endif

}  // namespace win::kernels::avx2
