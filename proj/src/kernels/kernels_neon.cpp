#include "dfarag/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace dfarag::kernels {

#if defined(__aarch64__)

namespace {

double dot_f32_neon(const float* a, const float* b, std::size_t n)
{
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t va = vld1q_f32(a + i);
        float32x4_t vb = vld1q_f32(b + i);
        acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
        acc1 = vfmaq_f64(acc1, vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
    }
    double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

void bm25_weights_neon(const double* tf, const double* norm, double scale, double* out, std::size_t n)
{
    const float64x2_t vscale = vdupq_n_f64(scale);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vtf = vld1q_f64(tf + i);
        float64x2_t vnorm = vld1q_f64(norm + i);
        vst1q_f64(out + i, vdivq_f64(vmulq_f64(vscale, vtf), vaddq_f64(vtf, vnorm)));
    }
    for (; i < n; ++i) {
        out[i] = (scale * tf[i]) / (tf[i] + norm[i]);
    }
}

const KernelTable kNeon{Isa::neon, dot_f32_neon, bm25_weights_neon};

}  // namespace

const KernelTable* neon_kernels() noexcept { return &kNeon; }

#else

const KernelTable* neon_kernels() noexcept { return nullptr; }

#endif

}  // namespace dfarag::kernels
