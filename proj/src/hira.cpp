#include "l3tc/hira.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <regex>
#include <string>

#include "l3tc/rwkv_model.hpp"

namespace l3tc::hira {
namespace {

Matrix from_tensor(const Tensor& t) {
    require_format(t.dims.size() == 2, "hira: expected a matrix");
    return Matrix{t.dims[0], t.dims[1], t.data};
}

// "att.r" -> "att.receptance.weight" etc.
std::string projection_weight(const std::string& module, const std::string& slot) {
    static const std::map<std::string, std::string> kSlots = {
        {"r", "receptance"}, {"k", "key"}, {"v", "value"}};
    return module + "." + kSlots.at(slot) + ".weight";
}

struct BranchSlot {
    std::map<std::uint32_t, Tensor> a, b;
};

}  // namespace

std::uint32_t branch_rank(double multiplier, std::uint32_t d, std::uint32_t k) {
    require(multiplier > 0.0, "hira: rank multiplier must be positive");
    const double r = std::ceil(multiplier * static_cast<double>(std::min(d, k)));
    return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(r));
}

Matrix merge(const BranchedLinear& layer) {
    const Matrix& w0 = layer.base;
    for (const auto& br : layer.branches) {
        require(br.a.rows == w0.rows && br.b.cols == w0.cols && br.a.cols == br.b.rows && br.a.cols > 0,
                "hira: branch shape mismatch");
        require(br.a.data.size() == std::size_t(br.a.rows) * br.a.cols &&
                    br.b.data.size() == std::size_t(br.b.rows) * br.b.cols,
                "hira: branch storage does not match its shape");
    }
    require(w0.data.size() == std::size_t(w0.rows) * w0.cols, "hira: base storage does not match its shape");

    Matrix out{w0.rows, w0.cols, std::vector<float>(w0.data.size())};
    for (std::uint32_t i = 0; i < w0.rows; ++i) {
        for (std::uint32_t j = 0; j < w0.cols; ++j) {
            double acc = w0.at(i, j);
            for (const auto& br : layer.branches)
                for (std::uint32_t t = 0; t < br.a.cols; ++t)
                    acc += static_cast<double>(br.a.at(i, t)) * static_cast<double>(br.b.at(t, j));
            out.data[std::size_t(i) * w0.cols + j] = static_cast<float>(acc);
        }
    }
    return out;
}

ModelWeights merge_model(const ModelWeights& branched) {
    static const std::regex kName(R"(blocks\.(\d+)\.(att|ffn)\.(r|k|v)\.hira\.(\d+)\.(A|B))");

    ModelWeights merged{branched.config, {}};
    std::map<std::string, BranchSlot> slots;  // keyed by target weight name
    for (const auto& [name, t] : branched.tensors) {
        if (!is_hira_tensor(name)) {
            merged.tensors.emplace(name, t);
            continue;
        }
        std::smatch m;
        std::regex_match(name, m, kName);
        const auto layer = static_cast<std::uint32_t>(std::stoul(m[1]));
        require_format(layer < branched.config.n_layers, "hira: branch on missing layer: " + name);
        const std::string target = "blocks." + m[1].str() + "." + projection_weight(m[2], m[3]);
        const auto idx = static_cast<std::uint32_t>(std::stoul(m[4]));
        auto& slot = slots[target];
        (m[5] == "A" ? slot.a : slot.b).emplace(idx, t);
    }
    validate_plain(merged);

    for (auto& [target, slot] : slots) {
        require_format(slot.a.size() == slot.b.size(), "hira: unpaired branch factors on " + target);
        BranchedLinear layer{from_tensor(merged.tensors.at(target)), {}};
        std::uint32_t expect = 0;
        for (auto& [idx, a] : slot.a) {
            require_format(idx == expect++, "hira: branch numbering has gaps on " + target);
            auto b = slot.b.find(idx);
            require_format(b != slot.b.end(), "hira: unpaired branch factors on " + target);
            layer.branches.push_back({from_tensor(a), from_tensor(b->second)});
        }
        Matrix w;
        try {
            w = merge(layer);
        } catch (const Error& e) {
            fail(ErrorKind::Format, std::string(e.what()) + " on " + target);
        }
        merged.tensors.at(target).data = std::move(w.data);
    }
    return merged;
}

ModelWeights add_random_branches(const ModelWeights& plain, double multiplier, std::uint32_t branches,
                                 std::uint64_t seed) {
    validate_plain(plain);
    std::mt19937_64 rng(seed);
    auto uniform = [&](float a) {
        const float u = static_cast<float>(rng() >> 40) * (1.0f / 16777216.0f);
        return -a + 2.0f * a * u;
    };
    ModelWeights out = plain;
    for (std::uint32_t l = 0; l < plain.config.n_layers; ++l) {
        for (const std::string module : {"att", "ffn"}) {
            for (const std::string slot : {"r", "k", "v"}) {
                const std::string prefix = "blocks." + std::to_string(l) + ".";
                const Tensor& w0 = plain.at(prefix + projection_weight(module, slot));
                const std::uint32_t d = w0.dims[0], k = w0.dims[1];
                const std::uint32_t r = branch_rank(multiplier, d, k);
                for (std::uint32_t m = 0; m < branches; ++m) {
                    const std::string base = prefix + module + "." + slot + ".hira." + std::to_string(m) + ".";
                    Tensor a = Tensor::zeros({d, r});
                    Tensor b = Tensor::zeros({r, k});
                    const float sa = 1.0f / std::sqrt(static_cast<float>(r));
                    const float sb = 1.0f / std::sqrt(static_cast<float>(k));
                    for (auto& x : a.data) x = uniform(sa);
                    for (auto& x : b.data) x = uniform(sb);
                    out.tensors.emplace(base + "A", std::move(a));
                    out.tensors.emplace(base + "B", std::move(b));
                }
            }
        }
    }
    return out;
}

EquivalenceReport verify_equivalence(const ModelWeights& branched, const ModelWeights& merged,
                                     std::uint32_t n_random_inputs, double tolerance, std::uint64_t seed) {
    require(branched.config == merged.config, "verify_equivalence: config mismatch");
    const Model path_branched(branched, BranchPolicy::Evaluate);
    const Model path_merged(merged, BranchPolicy::Reject);
    const ModelConfig& c = merged.config;

    std::mt19937_64 rng(seed);
    EquivalenceReport report;
    std::vector<float> la(c.vocab_size), lb(c.vocab_size);
    for (std::uint32_t n = 0; n < n_random_inputs; ++n) {
        RecurrentState sa = init_state(c), sb = init_state(c);
        const auto steps = 1 + static_cast<std::uint32_t>(rng() % 16);
        for (std::uint32_t s = 0; s < steps; ++s) {
            const auto token = static_cast<TokenId>(rng() % c.vocab_size);
            path_branched.forward(sa, token, la);
            path_merged.forward(sb, token, lb);
            for (std::uint32_t i = 0; i < c.vocab_size; ++i)
                report.max_abs_diff = std::max(report.max_abs_diff, std::fabs(double(la[i]) - double(lb[i])));
            ++report.comparisons;
        }
    }
    report.pass = report.max_abs_diff <= tolerance;
    return report;
}

}  // namespace l3tc::hira
