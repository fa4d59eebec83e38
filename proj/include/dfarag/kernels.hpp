#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace dfarag::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

/// Function table for one instruction set. Every variant must agree with the
/// scalar reference: bm25_weights bit-for-bit, dot_f32 to rounding.
struct KernelTable {
    Isa isa;
    /// Sum of a[i] * b[i], accumulated in double.
    double (*dot_f32)(const float* a, const float* b, std::size_t n);
    /// out[i] = (scale * tf[i]) / (tf[i] + norm[i]).
    void (*bm25_weights)(const double* tf, const double* norm, double scale, double* out, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

/// Best table for this CPU, chosen once. DFARAG_SIMD=scalar forces the
/// reference path.
const KernelTable& active_kernels() noexcept;

double dot(std::span<const float> a, std::span<const float> b);
/// 0 when either vector has zero norm.
double cosine(std::span<const float> a, std::span<const float> b);
void bm25_weights(std::span<const double> tf, std::span<const double> norm, double scale, std::span<double> out);

}  // namespace dfarag::kernels
