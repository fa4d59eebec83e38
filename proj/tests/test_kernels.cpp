#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "dfarag/common.hpp"
#include "dfarag/kernels.hpp"

using namespace dfarag;
namespace k = dfarag::kernels;

namespace {

std::vector<const k::KernelTable*> variants()
{
    std::vector<const k::KernelTable*> out{&k::scalar_kernels()};
    if (const auto* t = k::avx2_kernels()) {
        out.push_back(t);
    }
    if (const auto* t = k::neon_kernels()) {
        out.push_back(t);
    }
    return out;
}

double uniform(Rng& rng, double lo, double hi)
{
    return lo + (hi - lo) * static_cast<double>(rng.next() >> 11) / 9007199254740992.0;
}

}  // namespace

TEST_CASE("dispatch honours DFARAG_SIMD")
{
    const char* forced = std::getenv("DFARAG_SIMD");
    if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
        CHECK(k::active_kernels().isa == k::Isa::scalar);
    } else if (k::avx2_kernels() != nullptr) {
        CHECK(k::active_kernels().isa == k::Isa::avx2);
    }
    MESSAGE("active kernels: " << k::isa_name(k::active_kernels().isa));
}

TEST_CASE("bm25 weights agree bit for bit across variants")
{
    Rng rng(1);
    const auto& ref = k::scalar_kernels();
    for (std::size_t n = 0; n < 70; ++n) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> tf(n), norm(n), want(n), got(n);
            for (std::size_t i = 0; i < n; ++i) {
                tf[i] = static_cast<double>(1 + rng.below(9));
                norm[i] = uniform(rng, 0.1, 4.0);
            }
            const double scale = uniform(rng, 0.0, 5.0);
            ref.bm25_weights(tf.data(), norm.data(), scale, want.data(), n);
            for (const auto* v : variants()) {
                std::fill(got.begin(), got.end(), -1.0);
                v->bm25_weights(tf.data(), norm.data(), scale, got.data(), n);
                INFO(k::isa_name(v->isa) << " n=" << n);
                REQUIRE(std::memcmp(want.data(), got.data(), n * sizeof(double)) == 0);
            }
        }
    }
}

TEST_CASE("dot products agree to rounding across variants")
{
    Rng rng(2);
    const auto& ref = k::scalar_kernels();
    for (std::size_t n = 0; n < 300; n += 1 + n / 8) {
        std::vector<float> a(n), b(n);
        double magnitude = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<float>(uniform(rng, -1.0, 1.0));
            b[i] = static_cast<float>(uniform(rng, -1.0, 1.0));
            magnitude += std::fabs(static_cast<double>(a[i]) * b[i]);
        }
        const double want = ref.dot_f32(a.data(), b.data(), n);
        for (const auto* v : variants()) {
            INFO(k::isa_name(v->isa) << " n=" << n);
            CHECK(std::fabs(v->dot_f32(a.data(), b.data(), n) - want) <= 1e-12 * (1.0 + magnitude));
        }
    }
}

TEST_CASE("cosine hand values")
{
    const std::vector<float> x{1, 0, 0};
    const std::vector<float> y{0, 1, 0};
    const std::vector<float> d{1, 1, 0};
    const std::vector<float> zero{0, 0, 0};
    CHECK(k::cosine(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k::cosine(x, y) == 0.0);
    CHECK(k::cosine(x, d) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(k::cosine(x, zero) == 0.0);
    const std::vector<float> p{3, 4};
    const std::vector<float> q{4, 3};
    CHECK(k::cosine(p, q) == doctest::Approx(24.0 / 25.0).epsilon(1e-12));
    CHECK(k::dot(p, q) == 24.0);
    CHECK_THROWS(k::dot(p, x));
    std::vector<double> out(2);
    CHECK_THROWS(k::bm25_weights(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 1.0, out));
}
