#include "l3tc/kernels.hpp"

#include <algorithm>

namespace l3tc::kernels {

L3TC_MULTIVERSION
void matvec_t(std::span<const float> wt, std::size_t rows, std::size_t cols, const float* __restrict x,
              float* __restrict y) noexcept {
    for (std::size_t i = 0; i < rows; ++i) y[i] = 0.0f;
    const float* __restrict w = wt.data();
    for (std::size_t j = 0; j < cols; ++j) {
        const float xj = x[j];
        const float* __restrict wj = w + j * rows;
        for (std::size_t i = 0; i < rows; ++i) y[i] = y[i] + wj[i] * xj;
    }
}

L3TC_MULTIVERSION
void matmul_t(std::span<const float> wt, std::size_t rows, std::size_t cols, const float* x,
              std::size_t batch, float* y) noexcept {
    constexpr std::size_t kTile = 64;  // outputs kept hot per pass
    constexpr std::size_t kGroup = 4;  // input vectors sharing each weight load
    const float* __restrict w = wt.data();

    for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
        const std::size_t tile = std::min(kTile, rows - i0);
        std::size_t b = 0;
        if (tile == kTile) {
            for (; b + kGroup <= batch; b += kGroup) {
                float acc[kGroup][kTile] = {};
                const float* xb = x + b * cols;
                for (std::size_t j = 0; j < cols; ++j) {
                    const float* __restrict wj = w + j * rows + i0;
                    const float x0 = xb[j], x1 = xb[cols + j], x2 = xb[2 * cols + j],
                                x3 = xb[3 * cols + j];
                    for (std::size_t i = 0; i < kTile; ++i) {
                        const float wv = wj[i];
                        acc[0][i] = acc[0][i] + wv * x0;
                        acc[1][i] = acc[1][i] + wv * x1;
                        acc[2][i] = acc[2][i] + wv * x2;
                        acc[3][i] = acc[3][i] + wv * x3;
                    }
                }
                for (std::size_t g = 0; g < kGroup; ++g)
                    std::copy_n(acc[g], kTile, y + (b + g) * rows + i0);
            }
        }
        for (; b < batch; ++b) {
            float acc[kTile] = {};
            const float* xb = x + b * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                const float* __restrict wj = w + j * rows + i0;
                const float xj = xb[j];
                for (std::size_t i = 0; i < tile; ++i) acc[i] = acc[i] + wj[i] * xj;
            }
            std::copy_n(acc, tile, y + b * rows + i0);
        }
    }
}

L3TC_MULTIVERSION
void softmax(std::span<const float> logits, std::span<double> probs, std::span<float> scratch) noexcept {
    const std::size_t n = logits.size();
    float lane_max[8];
    for (float& v : lane_max) v = logits[0];
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t k = 0; k < 8; ++k) lane_max[k] = logits[i + k] > lane_max[k] ? logits[i + k] : lane_max[k];
    for (; i < n; ++i) lane_max[0] = logits[i] > lane_max[0] ? logits[i] : lane_max[0];
    float m = lane_max[0];
    for (float v : lane_max) m = v > m ? v : m;
    float* e = scratch.data();
    for (std::size_t i = 0; i < n; ++i) e[i] = exp_f32(logits[i] - m);

    double lane[8] = {};
    i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t k = 0; k < 8; ++k) lane[k] = lane[k] + static_cast<double>(e[i + k]);
    for (std::size_t k = 0; i < n; ++i, ++k) lane[k] = lane[k] + static_cast<double>(e[i]);
    const double s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));

    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) probs[j] = static_cast<double>(e[j]) * inv;
}

}  // namespace l3tc::kernels
