#pragma once

#include <cstdint>
#include <vector>

#include "l3tc/common.hpp"
#include "l3tc/rwkv_model.hpp"
#include "l3tc/tokenizer.hpp"

namespace l3tc {

/// One reference case: the logits produced after feeding `tokens` in order
/// to a fresh recurrent state. `seed` identifies how the case was drawn.
struct GoldenCase {
    std::uint64_t seed = 0;
    std::vector<TokenId> tokens;
    std::vector<float> logits;
};

/// Layout (little-endian): "L3TG" u32 case_count, then per case
/// u64 seed, u32 token_count, u32 tokens[token_count], f32 logits[V].
/// V is not stored; the reader takes it from the model being checked.
Bytes write_golden(const std::vector<GoldenCase>& cases);
std::vector<GoldenCase> read_golden(ByteView data, std::uint32_t vocab_size);

struct GoldenReport {
    std::size_t cases = 0;
    double max_abs_diff = 0.0;
};

GoldenReport check_golden(const std::vector<GoldenCase>& cases, const Model& model);

/// Draws cases from `model` itself; useful for freezing engine output.
std::vector<GoldenCase> make_golden(const Model& model, std::uint32_t n_cases, std::uint64_t seed);

}  // namespace l3tc
