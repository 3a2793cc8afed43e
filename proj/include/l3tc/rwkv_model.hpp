#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "l3tc/model_weights.hpp"
#include "l3tc/tokenizer.hpp"

namespace l3tc {

/// Per-layer recurrent memory: token-shift caches for time and channel
/// mixing plus the WKV accumulators (numerator a, denominator b, running
/// max exponent p). Five d_embed vectors per layer regardless of how many
/// tokens have been processed.
class RecurrentState {
public:
    static constexpr float kNegInfSentinel = -1e30f;

    explicit RecurrentState(const ModelConfig& config);

    std::span<float> att_shift(std::uint32_t layer) { return slot(layer, 0); }
    std::span<float> ffn_shift(std::uint32_t layer) { return slot(layer, 1); }
    std::span<float> num(std::uint32_t layer) { return slot(layer, 2); }
    std::span<float> den(std::uint32_t layer) { return slot(layer, 3); }
    std::span<float> max_exp(std::uint32_t layer) { return slot(layer, 4); }

    std::size_t scalar_count() const noexcept { return data_.size(); }
    std::span<const float> raw() const noexcept { return data_; }
    std::span<float> raw() noexcept { return data_; }

    friend bool operator==(const RecurrentState&, const RecurrentState&) = default;

private:
    std::span<float> slot(std::uint32_t layer, std::uint32_t k) {
        return std::span<float>(data_).subspan((std::size_t(layer) * 5 + k) * d_, d_);
    }
    std::size_t d_;
    std::vector<float> data_;
};

/// Fresh chunk state: all zeros, max exponent at the -1e30 sentinel.
RecurrentState init_state(const ModelConfig& config);

/// Analytic state size in floats: 5 * n_layers * d_embed.
std::size_t state_size(const ModelConfig& config);

/// Parameter count of a branch-free model:
///   2*V*d (embedding, head) + 2*d (final norm) + [L > 0] * 2*d (ln0)
///   + L * (4*d (norms) + 7*d (decay, bonus, five mix vectors)
///          + 6*d*d (att R/K/V/O, ffn R, shortcut) + 2*d*h (ffn K/V)).
std::uint64_t count_params(const ModelConfig& config);

/// Multiply-accumulates per token for the matrix products only:
///   L * (6*d*d + 2*d*h) + d*V.
/// Embedding lookups, norms and element-wise ops are excluded.
std::uint64_t count_macs_per_token(const ModelConfig& config);

/// A linear map y = W x with W stored transposed for output-parallel
/// accumulation, optionally with unmerged branches y += A (B x).
struct Linear {
    std::uint32_t out = 0, in = 0;
    std::vector<float> wt;  // in x out

    struct Branch {
        std::uint32_t rank = 0;
        std::vector<float> down_t;  // B transposed: in x rank
        std::vector<float> up_t;    // A transposed: rank x out
    };
    std::vector<Branch> branches;

    static Linear from_matrix(const Tensor& w);
    void apply(const float* x, float* y, float* scratch) const;
    std::uint64_t macs() const noexcept;
    std::size_t scratch_size() const noexcept;
};

enum class BranchPolicy { Reject, Evaluate };

/// Inference-ready model. Immutable and shareable across threads; every
/// mutable quantity lives in the caller's RecurrentState.
///
/// Recurrence (v4-style, per block, x the residual stream):
///   xx = ln1(x); mix with previous xx (token shift)
///   r = sigmoid(R xr), k = K xk, v = V xv
///   wkv = (e^{p-q} a + e^{u+k-q} v) / (e^{p-q} b + e^{u+k-q}),  q = max(p, u+k)
///   a, b, p <- decayed by w = -exp(time_decay), then add e^k v, e^k
///   x += O (r * wkv)
///   xx = ln2(x); mix; x += sigmoid(R xr) * (V relu(K xk)^2)
///   x += S x_block_input                       (linear shortcut)
/// logits = head(ln_out(x)).
class Model {
public:
    /// Rejects weights that still carry HiRA branches.
    explicit Model(const ModelWeights& weights) : Model(weights, BranchPolicy::Reject) {}
    Model(const ModelWeights& weights, BranchPolicy policy);

    const ModelConfig& config() const noexcept { return config_; }

    /// Consumes one token: updates state and writes the final normalized
    /// hidden vector (d_embed floats) that feeds the output head.
    void advance(RecurrentState& state, TokenId token, std::span<float> hidden) const;

    /// Output head over `batch` hidden vectors (batch x d) -> batch x V.
    /// Bit-identical to projecting each row separately.
    void project(std::span<const float> hidden, std::size_t batch, std::span<float> logits) const;

    /// advance + project for a single token.
    void forward(RecurrentState& state, TokenId token, std::span<float> logits) const;

    /// Actual multiply-accumulates per token of this instance, branches
    /// included.
    std::uint64_t macs_per_token() const noexcept;

private:
    struct Block {
        std::vector<float> ln1_w, ln1_b, ln2_w, ln2_b;
        std::vector<float> att_mix_k, att_mix_v, att_mix_r, att_decay, att_bonus;
        Linear att_key, att_value, att_receptance, att_output;
        std::vector<float> ffn_mix_k, ffn_mix_r;
        Linear ffn_key, ffn_receptance, ffn_value;
        Linear shortcut;
    };

    ModelConfig config_;
    std::vector<float> emb_;  // V x d
    std::vector<float> ln0_w_, ln0_b_, ln_out_w_, ln_out_b_;
    std::vector<Block> blocks_;
    Linear head_;
    std::size_t scratch_ = 0;
};

struct StepResult {
    std::vector<float> logits;
    RecurrentState state;
};

/// Value-semantics wrapper over Model::forward.
StepResult forward_step(const Model& model, const RecurrentState& state, TokenId token);

struct DistributionResult {
    std::vector<double> probabilities;
    RecurrentState state;
};

/// Softmax (max-subtracted) of forward_step's logits. Strictly positive.
DistributionResult next_distribution(const Model& model, const RecurrentState& state, TokenId token);

}  // namespace l3tc
