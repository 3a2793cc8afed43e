#include "l3tc/golden.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace l3tc {

namespace {
constexpr std::string_view kGoldenMagic = "L3TG";
}

Bytes write_golden(const std::vector<GoldenCase>& cases) {
    ByteWriter w;
    w.raw(kGoldenMagic);
    w.u32(static_cast<std::uint32_t>(cases.size()));
    for (const GoldenCase& c : cases) {
        w.u64(c.seed);
        w.u32(static_cast<std::uint32_t>(c.tokens.size()));
        for (TokenId t : c.tokens) w.u32(t);
        for (float x : c.logits) w.f32(x);
    }
    return std::move(w).take();
}

std::vector<GoldenCase> read_golden(ByteView data, std::uint32_t vocab_size) {
    ByteReader r(data, "golden file");
    r.expect_magic(kGoldenMagic);
    const std::uint32_t n = r.u32();
    std::vector<GoldenCase> cases;
    for (std::uint32_t i = 0; i < n; ++i) {
        GoldenCase c;
        c.seed = r.u64();
        const std::uint32_t len = r.u32();
        require_format(len <= r.remaining() / 4, "golden file: truncated token list");
        c.tokens.resize(len);
        for (auto& t : c.tokens) {
            t = r.u32();
            require_format(t < vocab_size, "golden file: token id out of range");
        }
        c.logits.resize(vocab_size);
        for (auto& x : c.logits) {
            x = r.f32();
            require_format(std::isfinite(x), "golden file: non-finite logit");
        }
        cases.push_back(std::move(c));
    }
    require_format(r.remaining() == 0, "golden file: trailing bytes");
    return cases;
}

GoldenReport check_golden(const std::vector<GoldenCase>& cases, const Model& model) {
    const ModelConfig& cfg = model.config();
    GoldenReport report;
    std::vector<float> logits(cfg.vocab_size);
    for (const GoldenCase& c : cases) {
        require(c.logits.size() == cfg.vocab_size, "check_golden: logit count does not match the model");
        require(!c.tokens.empty(), "check_golden: case without tokens");
        RecurrentState state = init_state(cfg);
        for (TokenId t : c.tokens) model.forward(state, t, logits);
        for (std::size_t i = 0; i < logits.size(); ++i)
            report.max_abs_diff = std::max(report.max_abs_diff, std::fabs(double(logits[i]) - double(c.logits[i])));
        ++report.cases;
    }
    return report;
}

std::vector<GoldenCase> make_golden(const Model& model, std::uint32_t n_cases, std::uint64_t seed) {
    const ModelConfig& cfg = model.config();
    std::vector<GoldenCase> cases;
    for (std::uint32_t i = 0; i < n_cases; ++i) {
        GoldenCase c;
        c.seed = seed + i;
        std::mt19937_64 rng(c.seed);
        const auto len = 1 + static_cast<std::uint32_t>(rng() % 32);
        for (std::uint32_t k = 0; k < len; ++k) c.tokens.push_back(static_cast<TokenId>(rng() % cfg.vocab_size));
        c.logits.resize(cfg.vocab_size);
        RecurrentState state = init_state(cfg);
        for (TokenId t : c.tokens) model.forward(state, t, c.logits);
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace l3tc
