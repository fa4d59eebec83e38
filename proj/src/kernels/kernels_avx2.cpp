#include "dfarag/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define DFARAG_HAVE_AVX2_PATH 1
#include <immintrin.h>
#endif

namespace dfarag::kernels {

#ifdef DFARAG_HAVE_AVX2_PATH

#if defined(__GNUC__) || defined(__clang__)
#define DFARAG_TARGET_AVX2 __attribute__((target("avx2,fma")))
#else
#define DFARAG_TARGET_AVX2
#endif

namespace {

DFARAG_TARGET_AVX2 double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

DFARAG_TARGET_AVX2 double dot_f32_avx2(const float* a, const float* b, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        __m256d a_lo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
        __m256d a_hi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
        __m256d b_lo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
        __m256d b_hi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
        acc0 = _mm256_fmadd_pd(a_lo, b_lo, acc0);
        acc1 = _mm256_fmadd_pd(a_hi, b_hi, acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

// Same operation order as the scalar loop: one multiply, one add, one
// divide per lane, so results are bit-identical.
DFARAG_TARGET_AVX2 void bm25_weights_avx2(const double* tf, const double* norm, double scale, double* out,
                                          std::size_t n)
{
    const __m256d vscale = _mm256_set1_pd(scale);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vtf = _mm256_loadu_pd(tf + i);
        __m256d vnorm = _mm256_loadu_pd(norm + i);
        __m256d num = _mm256_mul_pd(vscale, vtf);
        __m256d den = _mm256_add_pd(vtf, vnorm);
        _mm256_storeu_pd(out + i, _mm256_div_pd(num, den));
    }
    for (; i < n; ++i) {
        out[i] = (scale * tf[i]) / (tf[i] + norm[i]);
    }
}

const KernelTable kAvx2{Isa::avx2, dot_f32_avx2, bm25_weights_avx2};

bool cpu_has_avx2() noexcept
{
#if defined(__GNUC__) || defined(__clang__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

}  // namespace

const KernelTable* avx2_kernels() noexcept
{
    static const bool supported = cpu_has_avx2();
    return supported ? &kAvx2 : nullptr;
}

#else

const KernelTable* avx2_kernels() noexcept { return nullptr; }

#endif

}  // namespace dfarag::kernels
