#include "l3tc/model_weights.hpp"

#include <cmath>
#include <random>
#include <regex>

namespace l3tc {
namespace {

constexpr std::string_view kWeightsMagic = "L3TW";
constexpr std::uint8_t kWeightsVersion = 1;

struct PresetDims {
    std::string_view name;
    std::uint32_t layers, embed, hidden;
};
constexpr PresetDims kPresets[] = {
    {"L3TC-200K", 2, 96, 96},
    {"L3TC-800K", 2, 176, 192},
    {"L3TC-3.2M", 3, 256, 512},
    {"L3TC-12M", 4, 384, 1024},
};

std::string block(std::uint32_t i, std::string_view rest) {
    return "blocks." + std::to_string(i) + "." + std::string(rest);
}

// mt19937_64 output is fixed by the standard; the float mapping is ours so
// that fixtures do not depend on the library's distribution classes.
class Uniform {
public:
    explicit Uniform(std::uint64_t seed) : rng_(seed) {}
    float operator()(float lo, float hi) {
        const float u = static_cast<float>(rng_() >> 40) * (1.0f / 16777216.0f);
        return lo + (hi - lo) * u;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace

ModelConfig preset(std::string_view name, std::uint32_t vocab_size) {
    for (const auto& p : kPresets)
        if (p.name == name) return {p.layers, p.embed, p.hidden, vocab_size};
    fail(ErrorKind::InvalidArgument, "unknown model preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

Tensor Tensor::zeros(std::vector<std::uint32_t> dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return Tensor{std::move(dims), std::vector<float>(n, 0.0f)};
}

const Tensor& ModelWeights::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::Format, "model: missing tensor " + name);
    return it->second;
}

std::vector<TensorSpec> expected_tensors(const ModelConfig& c) {
    const std::uint32_t d = c.d_embed, h = c.d_hidden, v = c.vocab_size;
    std::vector<TensorSpec> out;
    out.push_back({"emb.weight", {v, d}});
    for (std::uint32_t i = 0; i < c.n_layers; ++i) {
        if (i == 0) {
            out.push_back({block(0, "ln0.weight"), {d}});
            out.push_back({block(0, "ln0.bias"), {d}});
        }
        for (auto n : {"ln1.weight", "ln1.bias", "ln2.weight", "ln2.bias", "att.time_decay",
                       "att.time_first", "att.time_mix_k", "att.time_mix_v", "att.time_mix_r",
                       "ffn.time_mix_k", "ffn.time_mix_r"})
            out.push_back({block(i, n), {d}});
        for (auto n : {"att.key.weight", "att.value.weight", "att.receptance.weight",
                       "att.output.weight", "ffn.receptance.weight", "shortcut.weight"})
            out.push_back({block(i, n), {d, d}});
        out.push_back({block(i, "ffn.key.weight"), {h, d}});
        out.push_back({block(i, "ffn.value.weight"), {d, h}});
    }
    out.push_back({"ln_out.weight", {d}});
    out.push_back({"ln_out.bias", {d}});
    out.push_back({"head.weight", {v, d}});
    return out;
}

bool is_hira_tensor(std::string_view name) {
    static const std::regex kPattern(R"(blocks\.\d+\.(att|ffn)\.(r|k|v)\.hira\.\d+\.(A|B))");
    return std::regex_match(name.begin(), name.end(), kPattern);
}

ModelWeights init_random_weights(const ModelConfig& config, std::uint64_t seed) {
    Uniform u(seed);
    ModelWeights w{config, {}};
    for (const auto& spec : expected_tensors(config)) {
        Tensor t = Tensor::zeros(spec.dims);
        const std::string& n = spec.name;
        auto fill = [&](float lo, float hi) {
            for (auto& x : t.data) x = u(lo, hi);
        };
        auto ends_with = [&](std::string_view s) { return n.ends_with(s); };
        if (t.dims.size() == 2) {
            if (n == "emb.weight") {
                fill(-1.0f, 1.0f);
            } else if (n == "head.weight") {
                const float a = 2.0f / std::sqrt(static_cast<float>(t.dims[1]));
                fill(-a, a);
            } else {
                const float a = 1.0f / std::sqrt(static_cast<float>(t.dims[1]));
                fill(-a, a);
            }
        } else if (ends_with("time_decay")) {
            fill(-5.0f, 1.0f);
        } else if (ends_with("time_first")) {
            fill(-1.0f, 1.0f);
        } else if (n.find("time_mix") != std::string::npos) {
            fill(0.0f, 1.0f);
        } else if (ends_with(".weight")) {  // layer-norm scale
            fill(0.9f, 1.1f);
        } else {
            fill(-0.1f, 0.1f);
        }
        w.tensors.emplace(n, std::move(t));
    }
    return w;
}

ModelWeights zero_weights(const ModelConfig& config) {
    ModelWeights w{config, {}};
    for (const auto& spec : expected_tensors(config)) {
        Tensor t = Tensor::zeros(spec.dims);
        const bool norm_scale = spec.dims.size() == 1 && spec.name.ends_with(".weight");
        if (norm_scale) std::fill(t.data.begin(), t.data.end(), 1.0f);
        w.tensors.emplace(spec.name, std::move(t));
    }
    return w;
}

namespace {
ByteWriter write_weights_body(const ModelWeights& w) {
    ByteWriter out;
    out.raw(kWeightsMagic);
    out.u8(kWeightsVersion);
    out.u32(w.config.n_layers);
    out.u32(w.config.d_embed);
    out.u32(w.config.d_hidden);
    out.u32(w.config.vocab_size);
    out.u32(static_cast<std::uint32_t>(w.tensors.size()));
    for (const auto& [name, t] : w.tensors) {
        require(name.size() <= 0xFFFF, "save_weights: tensor name too long");
        out.u16(static_cast<std::uint16_t>(name.size()));
        out.raw(name);
        out.u8(static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) out.u32(d);
        for (float x : t.data) out.f32(x);
    }
    return out;
}
}  // namespace

Bytes save_weights(const ModelWeights& weights) {
    ByteWriter w = write_weights_body(weights);
    w.seal_with_hash();
    return std::move(w).take();
}

std::uint32_t weights_hash(const ModelWeights& weights) {
    return fnv1a(write_weights_body(weights).bytes());
}

ModelWeights read_weights(ByteView bytes) {
    ByteReader head(bytes, "weights");
    head.expect_magic(kWeightsMagic);
    require_format(head.u8() == kWeightsVersion, "weights: unsupported version");
    const ByteView body = verify_sealed(bytes, "weights");

    ByteReader r(body, "weights");
    r.raw(kWeightsMagic.size() + 1);
    ModelWeights w;
    w.config.n_layers = r.u32();
    w.config.d_embed = r.u32();
    w.config.d_hidden = r.u32();
    w.config.vocab_size = r.u32();
    const std::uint32_t count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint16_t name_len = r.u16();
        std::string name(as_chars(r.raw(name_len)));
        const std::uint8_t rank = r.u8();
        require_format(rank >= 1 && rank <= 4, "weights: bad rank for " + name);
        Tensor t;
        std::uint64_t numel = 1;
        for (std::uint8_t i = 0; i < rank; ++i) {
            t.dims.push_back(r.u32());
            numel *= t.dims.back();
        }
        require_format(numel <= r.remaining() / 4, "weights: truncated tensor " + name);
        t.data.resize(static_cast<std::size_t>(numel));
        for (auto& x : t.data) {
            x = r.f32();
            require_format(std::isfinite(x), "weights: non-finite value in " + name);
        }
        const bool fresh = w.tensors.emplace(std::move(name), std::move(t)).second;
        require_format(fresh, "weights: duplicate tensor");
    }
    require_format(r.remaining() == 0, "weights: trailing bytes");
    return w;
}

void validate_plain(const ModelWeights& w) {
    const ModelConfig& c = w.config;
    require_format(c.d_embed > 0 && c.d_hidden > 0 && c.vocab_size > 0,
                   "model: config dimensions must be positive");
    const auto specs = expected_tensors(c);
    for (const auto& [name, t] : w.tensors) {
        if (is_hira_tensor(name))
            fail(ErrorKind::Format, "model: unmerged HiRA branch " + name + " (run merge-hira first)");
    }
    require_format(w.tensors.size() == specs.size(), "model: unexpected tensor set");
    for (const auto& s : specs) {
        const Tensor& t = w.at(s.name);
        require_format(t.dims == s.dims, "model: shape mismatch for " + s.name);
    }
}

ModelWeights load_model(ByteView bytes) {
    ModelWeights w = read_weights(bytes);
    validate_plain(w);
    return w;
}

}  // namespace l3tc
