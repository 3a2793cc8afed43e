#pragma once

// Scalar kernels shared by encoder and decoder. Every result here must be
// bit-identical on any IEEE-754 platform: the build disables floating-point
// contraction, no reduction is reassociated, and exp() is our own
// polynomial rather than the C library's.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>

// Hot loops get AVX-512 and AVX2 clones chosen at load time. Contraction is disabled
// for every clone, so results do not depend on which one runs.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
#define L3TC_MULTIVERSION __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define L3TC_MULTIVERSION
#endif

namespace l3tc::kernels {

/// exp(x) for float, clamped to [exp(-87.33), exp(88.72)]; never returns 0
/// or inf. Cephes-style range reduction with a degree-7 polynomial.
inline float exp_f32(float x) noexcept {
    constexpr float kLo = -87.3365f;
    constexpr float kHi = 88.7228f;
    x = x < kLo ? kLo : x;
    x = x > kHi ? kHi : x;
    // floor() by truncation: z lies in [-126, 129], well inside int range.
    const float z = x * 1.44269504088896341f + 0.5f;
    const float t = static_cast<float>(static_cast<std::int32_t>(z));
    const float n = t - (t > z ? 1.0f : 0.0f);
    float r = x - n * 0.693359375f;
    r = r - n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * (r * r) + r + 1.0f;
    // n is in [-126, 128]; split the scale so 2^n never overflows the exponent.
    const auto ni = static_cast<std::int32_t>(n);
    const std::int32_t half = ni >> 1;
    const float s1 = std::bit_cast<float>(static_cast<std::uint32_t>(half + 127) << 23);
    const float s2 = std::bit_cast<float>(static_cast<std::uint32_t>(ni - half + 127) << 23);
    return p * s1 * s2;
}

inline float sigmoid_f32(float x) noexcept { return 1.0f / (1.0f + exp_f32(-x)); }

/// y[i] = sum_j w[i][j] * x[j] with w stored transposed (wt[j * rows + i]).
/// Each output accumulates strictly in j order starting from 0.
void matvec_t(std::span<const float> wt, std::size_t rows, std::size_t cols, const float* __restrict x,
              float* __restrict y) noexcept;

/// Batched form of matvec_t over `batch` input vectors (row-major batch x
/// cols) producing batch x rows. Produces exactly the values matvec_t would
/// for each row; only memory traffic differs.
void matmul_t(std::span<const float> wt, std::size_t rows, std::size_t cols, const float* x,
              std::size_t batch, float* y) noexcept;

/// In-place layer norm, eps 1e-5, sequential sums.
inline void layer_norm(const float* x, const float* weight, const float* bias, std::size_t n,
                       float* out) noexcept {
    float sum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) sum = sum + x[i];
    const float mean = sum / static_cast<float>(n);
    float var = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        const float d = x[i] - mean;
        var = var + d * d;
    }
    var = var / static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * weight[i] + bias[i];
}

/// Softmax into doubles. The normalizer is a fixed 8-lane striped sum
/// (lane k takes indices congruent to k mod 8, lanes combined pairwise), so
/// the result does not depend on vector width.
void softmax(std::span<const float> logits, std::span<double> probs, std::span<float> scratch) noexcept;

}  // namespace l3tc::kernels
