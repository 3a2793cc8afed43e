#include "l3tc/rwkv_model.hpp"

#include <algorithm>
#include <string>

#include "l3tc/kernels.hpp"

namespace l3tc {

namespace k = kernels;

RecurrentState::RecurrentState(const ModelConfig& config)
    : d_(config.d_embed), data_(state_size(config), 0.0f) {
    for (std::uint32_t l = 0; l < config.n_layers; ++l) std::ranges::fill(max_exp(l), kNegInfSentinel);
}

RecurrentState init_state(const ModelConfig& config) { return RecurrentState(config); }

std::size_t state_size(const ModelConfig& c) { return std::size_t(5) * c.n_layers * c.d_embed; }

std::uint64_t count_params(const ModelConfig& c) {
    const std::uint64_t d = c.d_embed, h = c.d_hidden, v = c.vocab_size, l = c.n_layers;
    std::uint64_t n = 2 * v * d + 2 * d;
    if (l > 0) n += 2 * d;
    n += l * (4 * d + 7 * d + 6 * d * d + 2 * d * h);
    return n;
}

std::uint64_t count_macs_per_token(const ModelConfig& c) {
    const std::uint64_t d = c.d_embed, h = c.d_hidden, v = c.vocab_size, l = c.n_layers;
    return l * (6 * d * d + 2 * d * h) + d * v;
}

// ---------------------------------------------------------------------------
// Linear

namespace {
std::vector<float> transpose(const std::vector<float>& m, std::size_t rows, std::size_t cols) {
    std::vector<float> t(m.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = m[i * cols + j];
    return t;
}
}  // namespace

Linear Linear::from_matrix(const Tensor& w) {
    require_format(w.dims.size() == 2, "linear: expected a matrix");
    Linear lin;
    lin.out = w.dims[0];
    lin.in = w.dims[1];
    lin.wt = transpose(w.data, lin.out, lin.in);
    return lin;
}

void Linear::apply(const float* x, float* y, float* scratch) const {
    k::matvec_t(wt, out, in, x, y);
    for (const Branch& b : branches) {
        float* t = scratch;
        float* u = scratch + b.rank;
        k::matvec_t(b.down_t, b.rank, in, x, t);
        k::matvec_t(b.up_t, out, b.rank, t, u);
        for (std::uint32_t i = 0; i < out; ++i) y[i] = y[i] + u[i];
    }
}

std::uint64_t Linear::macs() const noexcept {
    std::uint64_t n = std::uint64_t(out) * in;
    for (const Branch& b : branches) n += std::uint64_t(b.rank) * (in + out);
    return n;
}

std::size_t Linear::scratch_size() const noexcept {
    std::size_t n = 0;
    for (const Branch& b : branches) n = std::max<std::size_t>(n, b.rank + out);
    return n;
}

// ---------------------------------------------------------------------------
// Model

namespace {

Linear make_linear(const ModelWeights& w, const std::string& prefix, const std::string& short_name,
                   const std::string& weight_name, BranchPolicy policy) {
    Linear lin = Linear::from_matrix(w.at(prefix + weight_name));
    if (policy != BranchPolicy::Evaluate) return lin;
    for (std::uint32_t m = 0;; ++m) {
        const std::string base = prefix + short_name + ".hira." + std::to_string(m) + ".";
        auto a = w.tensors.find(base + "A");
        auto b = w.tensors.find(base + "B");
        if (a == w.tensors.end() && b == w.tensors.end()) break;
        require_format(a != w.tensors.end() && b != w.tensors.end(), "model: incomplete branch " + base);
        const Tensor& ta = a->second;
        const Tensor& tb = b->second;
        require_format(ta.dims.size() == 2 && tb.dims.size() == 2 && ta.dims[0] == lin.out &&
                           tb.dims[1] == lin.in && ta.dims[1] == tb.dims[0] && ta.dims[1] > 0,
                       "model: branch shape mismatch at " + base);
        Linear::Branch br;
        br.rank = ta.dims[1];
        br.down_t = transpose(tb.data, br.rank, lin.in);
        br.up_t = transpose(ta.data, lin.out, br.rank);
        lin.branches.push_back(std::move(br));
    }
    return lin;
}

std::vector<float> vec(const ModelWeights& w, const std::string& name) { return w.at(name).data; }

}  // namespace

Model::Model(const ModelWeights& weights, BranchPolicy policy) : config_(weights.config) {
    if (policy == BranchPolicy::Reject) {
        validate_plain(weights);
    } else {
        // Branch tensors are matched against the R/K/V projections below.
        ModelWeights plain{weights.config, {}};
        for (const auto& [name, t] : weights.tensors)
            if (!is_hira_tensor(name)) plain.tensors.emplace(name, t);
        validate_plain(plain);
    }

    emb_ = vec(weights, "emb.weight");
    if (config_.n_layers > 0) {
        ln0_w_ = vec(weights, "blocks.0.ln0.weight");
        ln0_b_ = vec(weights, "blocks.0.ln0.bias");
    }
    ln_out_w_ = vec(weights, "ln_out.weight");
    ln_out_b_ = vec(weights, "ln_out.bias");
    head_ = Linear::from_matrix(weights.at("head.weight"));

    std::size_t consumed_branches = 0;
    for (std::uint32_t i = 0; i < config_.n_layers; ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        Block b;
        b.ln1_w = vec(weights, p + "ln1.weight");
        b.ln1_b = vec(weights, p + "ln1.bias");
        b.ln2_w = vec(weights, p + "ln2.weight");
        b.ln2_b = vec(weights, p + "ln2.bias");
        b.att_mix_k = vec(weights, p + "att.time_mix_k");
        b.att_mix_v = vec(weights, p + "att.time_mix_v");
        b.att_mix_r = vec(weights, p + "att.time_mix_r");
        b.att_bonus = vec(weights, p + "att.time_first");
        b.att_decay = vec(weights, p + "att.time_decay");
        for (auto& x : b.att_decay) x = -k::exp_f32(x);
        b.att_key = make_linear(weights, p + "att.", "k", "key.weight", policy);
        b.att_value = make_linear(weights, p + "att.", "v", "value.weight", policy);
        b.att_receptance = make_linear(weights, p + "att.", "r", "receptance.weight", policy);
        b.att_output = make_linear(weights, p + "att.", "o", "output.weight", BranchPolicy::Reject);
        b.ffn_mix_k = vec(weights, p + "ffn.time_mix_k");
        b.ffn_mix_r = vec(weights, p + "ffn.time_mix_r");
        b.ffn_key = make_linear(weights, p + "ffn.", "k", "key.weight", policy);
        b.ffn_receptance = make_linear(weights, p + "ffn.", "r", "receptance.weight", policy);
        b.ffn_value = make_linear(weights, p + "ffn.", "v", "value.weight", policy);
        b.shortcut = make_linear(weights, p, "", "shortcut.weight", BranchPolicy::Reject);
        for (const Linear* l : {&b.att_key, &b.att_value, &b.att_receptance, &b.ffn_key,
                                &b.ffn_receptance, &b.ffn_value}) {
            consumed_branches += 2 * l->branches.size();
            scratch_ = std::max(scratch_, l->scratch_size());
        }
        blocks_.push_back(std::move(b));
    }
    if (policy == BranchPolicy::Evaluate) {
        std::size_t present = 0;
        for (const auto& [name, t] : weights.tensors) present += is_hira_tensor(name) ? 1 : 0;
        require_format(present == consumed_branches,
                       "model: branch tensors outside the R/K/V projections or with gaps in numbering");
    }
}

void Model::advance(RecurrentState& state, TokenId token, std::span<float> hidden) const {
    const std::uint32_t d = config_.d_embed;
    const std::uint32_t h = config_.d_hidden;
    require(token < config_.vocab_size, "forward: token id " + std::to_string(token) + " out of range");
    require(state.scalar_count() == state_size(config_), "forward: state does not match config");
    require(hidden.size() >= d, "forward: hidden buffer too small");

    thread_local std::vector<float> buf;
    const std::size_t wide = std::max(d, h);
    buf.resize(8 * std::size_t(d) + 2 * wide + scratch_);
    float* x = buf.data();
    float* xx = x + d;
    float* xk = xx + d;
    float* xv = xk + d;
    float* xr = xv + d;
    float* r = xr + d;
    float* xin = r + d;
    float* tmp = xin + d;
    float* kk = tmp + d;
    float* out = kk + wide;
    float* scratch = out + wide;

    std::copy_n(emb_.data() + std::size_t(token) * d, d, x);
    if (!blocks_.empty()) k::layer_norm(x, ln0_w_.data(), ln0_b_.data(), d, x);

    for (std::uint32_t l = 0; l < blocks_.size(); ++l) {
        const Block& b = blocks_[l];
        std::copy_n(x, d, xin);

        // Time mixing.
        k::layer_norm(x, b.ln1_w.data(), b.ln1_b.data(), d, xx);
        auto shift = state.att_shift(l);
        for (std::uint32_t c = 0; c < d; ++c) {
            xk[c] = xx[c] * b.att_mix_k[c] + shift[c] * (1.0f - b.att_mix_k[c]);
            xv[c] = xx[c] * b.att_mix_v[c] + shift[c] * (1.0f - b.att_mix_v[c]);
            xr[c] = xx[c] * b.att_mix_r[c] + shift[c] * (1.0f - b.att_mix_r[c]);
        }
        std::copy_n(xx, d, shift.data());
        b.att_key.apply(xk, kk, scratch);
        b.att_value.apply(xv, tmp, scratch);
        b.att_receptance.apply(xr, r, scratch);

        auto num = state.num(l);
        auto den = state.den(l);
        auto pmax = state.max_exp(l);
        for (std::uint32_t c = 0; c < d; ++c) {
            const float kc = kk[c], vc = tmp[c];
            float ww = b.att_bonus[c] + kc;
            float q = std::max(pmax[c], ww);
            float e1 = k::exp_f32(pmax[c] - q);
            float e2 = k::exp_f32(ww - q);
            const float wkv = (e1 * num[c] + e2 * vc) / (e1 * den[c] + e2);
            ww = pmax[c] + b.att_decay[c];
            q = std::max(ww, kc);
            e1 = k::exp_f32(ww - q);
            e2 = k::exp_f32(kc - q);
            num[c] = e1 * num[c] + e2 * vc;
            den[c] = e1 * den[c] + e2;
            pmax[c] = q;
            xk[c] = k::sigmoid_f32(r[c]) * wkv;
        }
        b.att_output.apply(xk, out, scratch);
        for (std::uint32_t c = 0; c < d; ++c) x[c] = x[c] + out[c];

        // Channel mixing.
        k::layer_norm(x, b.ln2_w.data(), b.ln2_b.data(), d, xx);
        auto fshift = state.ffn_shift(l);
        for (std::uint32_t c = 0; c < d; ++c) {
            xk[c] = xx[c] * b.ffn_mix_k[c] + fshift[c] * (1.0f - b.ffn_mix_k[c]);
            xr[c] = xx[c] * b.ffn_mix_r[c] + fshift[c] * (1.0f - b.ffn_mix_r[c]);
        }
        std::copy_n(xx, d, fshift.data());
        b.ffn_receptance.apply(xr, r, scratch);
        b.ffn_key.apply(xk, kk, scratch);
        for (std::uint32_t c = 0; c < h; ++c) {
            const float relu = kk[c] > 0.0f ? kk[c] : 0.0f;
            kk[c] = relu * relu;
        }
        b.ffn_value.apply(kk, out, scratch);
        for (std::uint32_t c = 0; c < d; ++c) x[c] = x[c] + k::sigmoid_f32(r[c]) * out[c];

        b.shortcut.apply(xin, out, scratch);
        for (std::uint32_t c = 0; c < d; ++c) x[c] = x[c] + out[c];
    }
    k::layer_norm(x, ln_out_w_.data(), ln_out_b_.data(), d, hidden.data());
}

void Model::project(std::span<const float> hidden, std::size_t batch, std::span<float> logits) const {
    require(hidden.size() >= batch * config_.d_embed && logits.size() >= batch * config_.vocab_size,
            "project: buffer too small");
    k::matmul_t(head_.wt, head_.out, head_.in, hidden.data(), batch, logits.data());
}

void Model::forward(RecurrentState& state, TokenId token, std::span<float> logits) const {
    thread_local std::vector<float> hidden;
    hidden.resize(config_.d_embed);
    advance(state, token, hidden);
    project(hidden, 1, logits);
}

std::uint64_t Model::macs_per_token() const noexcept {
    std::uint64_t n = head_.macs();
    for (const Block& b : blocks_)
        for (const Linear* l : {&b.att_key, &b.att_value, &b.att_receptance, &b.att_output, &b.ffn_key,
                                &b.ffn_receptance, &b.ffn_value, &b.shortcut})
            n += l->macs();
    return n;
}

StepResult forward_step(const Model& model, const RecurrentState& state, TokenId token) {
    StepResult r{std::vector<float>(model.config().vocab_size), state};
    model.forward(r.state, token, r.logits);
    return r;
}

DistributionResult next_distribution(const Model& model, const RecurrentState& state, TokenId token) {
    StepResult step = forward_step(model, state, token);
    DistributionResult r{std::vector<double>(step.logits.size()), std::move(step.state)};
    std::vector<float> scratch(step.logits.size());
    kernels::softmax(step.logits, r.probabilities, scratch);
    return r;
}

}  // namespace l3tc
