#include "dfarag/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace dfarag::kernels {

namespace {

double dot_f32_scalar(const float* a, const float* b, std::size_t n)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

void bm25_weights_scalar(const double* tf, const double* norm, double scale, double* out, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = (scale * tf[i]) / (tf[i] + norm[i]);
    }
}

const KernelTable kScalar{Isa::scalar, dot_f32_scalar, bm25_weights_scalar};

const KernelTable& select()
{
    if (const char* forced = std::getenv("DFARAG_SIMD"); forced != nullptr && std::string(forced) == "scalar") {
        return kScalar;
    }
    if (const auto* t = avx2_kernels()) {
        return *t;
    }
    if (const auto* t = neon_kernels()) {
        return *t;
    }
    return kScalar;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept
{
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    }
    return "?";
}

const KernelTable& scalar_kernels() noexcept { return kScalar; }

const KernelTable& active_kernels() noexcept
{
    static const KernelTable& table = select();
    return table;
}

double dot(std::span<const float> a, std::span<const float> b)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: length mismatch");
    }
    return active_kernels().dot_f32(a.data(), b.data(), a.size());
}

double cosine(std::span<const float> a, std::span<const float> b)
{
    const auto& k = active_kernels();
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine: length mismatch");
    }
    double aa = k.dot_f32(a.data(), a.data(), a.size());
    double bb = k.dot_f32(b.data(), b.data(), b.size());
    if (aa == 0.0 || bb == 0.0) {
        return 0.0;
    }
    return k.dot_f32(a.data(), b.data(), a.size()) / std::sqrt(aa * bb);
}

void bm25_weights(std::span<const double> tf, std::span<const double> norm, double scale, std::span<double> out)
{
    if (tf.size() != norm.size() || tf.size() != out.size()) {
        throw std::invalid_argument("bm25_weights: length mismatch");
    }
    active_kernels().bm25_weights(tf.data(), norm.data(), scale, out.data(), tf.size());
}

}  // namespace dfarag::kernels
