#include "l3tc/entropy_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "l3tc/kernels.hpp"

namespace l3tc {

// ---------------------------------------------------------------------------
// Quantization

namespace {

// Returns the sum of the unadjusted frequencies, or 0 if any input lies
// outside [0, 1]. For q >= 1 truncation equals floor.
L3TC_MULTIVERSION
std::uint64_t floor_frequencies(const double* p, std::size_t v, double scale, std::uint32_t* f) noexcept {
    std::uint64_t sum = 0;
    int in_range = 1;
    for (std::size_t i = 0; i < v; ++i) in_range &= (p[i] >= 0.0) & (p[i] <= 1.0);
    if (!in_range) return 0;
    // q <= scale < 2^16, so a signed 32-bit conversion is exact.
    for (std::size_t i = 0; i < v; ++i) {
        const auto t = static_cast<std::int32_t>(p[i] * scale);
        f[i] = static_cast<std::uint32_t>(t >= 1 ? t : 1);
    }
    for (std::size_t i = 0; i < v; ++i) sum += f[i];
    return sum;
}

L3TC_MULTIVERSION
std::size_t first_argmax(const double* p, std::size_t v) noexcept {
    double lane[8];
    for (double& m : lane) m = p[0];
    std::size_t i = 0;
    for (; i + 8 <= v; i += 8)
        for (std::size_t k = 0; k < 8; ++k) lane[k] = p[i + k] > lane[k] ? p[i + k] : lane[k];
    for (; i < v; ++i) lane[0] = p[i] > lane[0] ? p[i] : lane[0];
    double best = lane[0];
    for (double m : lane) best = m > best ? m : best;
    std::size_t k = 0;
    while (p[k] != best) ++k;
    return k;
}

}  // namespace

void quantize_into(std::span<const double> p, FrequencyTable& table) {
    const std::size_t v = p.size();
    require(v >= 1, "quantize: empty distribution");
    require(v < kFreqTotal, "quantize: alphabet of " + std::to_string(v) + " symbols needs >= 2^16 frequency slots");
    const double scale = static_cast<double>(kFreqTotal - v);

    table.freqs.resize(v);
    table.cumulative.resize(v + 1);
    const std::uint64_t sum = floor_frequencies(p.data(), v, scale, table.freqs.data());
    require(sum > 0, "quantize: probabilities must be finite and within [0, 1]");
    require(sum <= kFreqTotal, "quantize: probabilities sum above one");

    const std::size_t best = first_argmax(p.data(), v);
    table.freqs[best] += static_cast<std::uint32_t>(kFreqTotal - sum);

    std::uint32_t cum = 0;
    for (std::size_t i = 0; i < v; ++i) {
        table.cumulative[i] = cum;
        cum += table.freqs[i];
    }
    table.cumulative[v] = cum;
}

FrequencyTable quantize(std::span<const double> probabilities) {
    FrequencyTable t;
    quantize_into(probabilities, t);
    return t;
}

std::uint32_t table_hash(const FrequencyTable& table) {
    return fnv1a({reinterpret_cast<const std::uint8_t*>(table.freqs.data()), table.freqs.size() * 4});
}

// ---------------------------------------------------------------------------
// Range coder

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 32);
        std::uint8_t temp = cache_;
        do {
            out_.push_back(static_cast<std::uint8_t>(temp + carry));
            temp = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
    const std::uint32_t r = range_ >> kFreqBits;
    low_ += static_cast<std::uint64_t>(r) * cum;
    // The top symbol absorbs the truncation slack so no code space is lost.
    range_ = cum + freq < kFreqTotal ? r * freq : range_ - r * cum;
    while (range_ < kTop) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::encode_symbol(const FrequencyTable& table, std::uint32_t symbol) {
    require(symbol < table.size(), "encode_symbol: symbol out of range");
    encode(table.cumulative[symbol], table.freqs[symbol]);
}

Bytes RangeEncoder::finish() && {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(ByteView data) : data_(data) {
    require_format(next_byte() == 0, "range decoder: corrupt stream header");
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    require_format(code_ < range_, "range decoder: corrupt stream");
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ >= data_.size()) fail(ErrorKind::Format, "range decoder: truncated stream");
    return data_[pos_++];
}

std::uint32_t RangeDecoder::decode_symbol(const FrequencyTable& table) {
    const std::uint32_t r = range_ >> kFreqBits;
    const std::uint32_t target = std::min(code_ / r, kFreqTotal - 1);
    const auto it = std::upper_bound(table.cumulative.begin() + 1, table.cumulative.end(), target);
    const auto symbol = static_cast<std::uint32_t>(it - table.cumulative.begin() - 1);
    const std::uint32_t cum = table.cumulative[symbol];
    const std::uint32_t freq = table.freqs[symbol];

    code_ -= r * cum;
    range_ = cum + freq < kFreqTotal ? r * freq : range_ - r * cum;
    require_format(code_ < range_, "range decoder: corrupt stream");
    while (range_ < kTop) {
        range_ <<= 8;
        code_ = (code_ << 8) | next_byte();
    }
    return symbol;
}

void RangeDecoder::finish() const {
    require_format(pos_ == data_.size(), "range decoder: unconsumed trailing bytes");
    require_format(code_ == 0, "range decoder: stream did not close cleanly");
}

// ---------------------------------------------------------------------------
// Model-driven chunk coding

namespace {

constexpr std::size_t kHeadBatch = 32;

// Distribution -> table conversion with reusable buffers.
class TableBuilder {
public:
    explicit TableBuilder(std::uint32_t vocab) : exps_(vocab), probs_(vocab) {}

    const FrequencyTable& build(std::span<const float> logits) {
        kernels::softmax(logits, probs_, exps_);
        quantize_into(probs_, table_);
        return table_;
    }

private:
    std::vector<float> exps_;
    std::vector<double> probs_;
    FrequencyTable table_;
};

}  // namespace

Bytes encode_chunk(std::span<const TokenId> tokens, const Model& model, TableTrace* trace) {
    const ModelConfig& c = model.config();
    const std::size_t d = c.d_embed, v = c.vocab_size;
    for (TokenId t : tokens) require(t < v, "encode_chunk: token id out of range");

    RecurrentState state = init_state(c);
    TableBuilder builder(c.vocab_size);
    RangeEncoder enc;
    std::vector<float> hidden(kHeadBatch * d);
    std::vector<float> logits(kHeadBatch * v);

    // Inputs are known up front, so hidden states for a block of positions
    // are computed first and the head runs once per block.
    for (std::size_t start = 0; start < tokens.size(); start += kHeadBatch) {
        const std::size_t n = std::min(kHeadBatch, tokens.size() - start);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = start + k;
            const TokenId prev = i == 0 ? kBeginOfChunkToken : tokens[i - 1];
            model.advance(state, prev, std::span<float>(hidden).subspan(k * d, d));
        }
        model.project(hidden, n, logits);
        for (std::size_t k = 0; k < n; ++k) {
            const FrequencyTable& table = builder.build(std::span<const float>(logits).subspan(k * v, v));
            if (trace) trace->push_back(table_hash(table));
            enc.encode_symbol(table, tokens[start + k]);
        }
    }
    return std::move(enc).finish();
}

std::vector<std::vector<TokenId>> decode_chunks(std::span<const ChunkPayload> chunks, const Model& model) {
    const ModelConfig& c = model.config();
    const std::size_t d = c.d_embed, v = c.vocab_size;
    const std::size_t n = chunks.size();

    std::vector<std::vector<TokenId>> out(n);
    std::vector<RangeDecoder> decoders;
    std::vector<RecurrentState> states;
    decoders.reserve(n);
    states.reserve(n);
    std::uint32_t longest = 0;
    for (std::size_t k = 0; k < n; ++k) {
        decoders.emplace_back(chunks[k].bytes);
        states.push_back(init_state(c));
        out[k].reserve(chunks[k].n_tokens);
        longest = std::max(longest, chunks[k].n_tokens);
    }

    TableBuilder builder(c.vocab_size);
    std::vector<std::size_t> active;
    std::vector<float> hidden(n * d);
    std::vector<float> logits(std::min(n, kHeadBatch) * v);
    for (std::uint32_t step = 0; step < longest; ++step) {
        active.clear();
        for (std::size_t k = 0; k < n; ++k)
            if (step < chunks[k].n_tokens) active.push_back(k);
        for (std::size_t a = 0; a < active.size(); ++a) {
            const std::size_t k = active[a];
            const TokenId prev = step == 0 ? kBeginOfChunkToken : out[k].back();
            model.advance(states[k], prev, std::span<float>(hidden).subspan(a * d, d));
        }
        for (std::size_t a0 = 0; a0 < active.size(); a0 += kHeadBatch) {
            const std::size_t m = std::min(kHeadBatch, active.size() - a0);
            model.project(std::span<const float>(hidden).subspan(a0 * d, m * d), m, logits);
            for (std::size_t a = 0; a < m; ++a) {
                const FrequencyTable& table = builder.build(std::span<const float>(logits).subspan(a * v, v));
                const std::size_t k = active[a0 + a];
                out[k].push_back(decoders[k].decode_symbol(table));
            }
        }
    }
    for (const auto& dec : decoders) dec.finish();
    return out;
}

std::vector<TokenId> decode_chunk(ByteView payload, const Model& model, std::uint32_t n_tokens,
                                  TableTrace* trace) {
    if (trace == nullptr) {
        const ChunkPayload one{payload, n_tokens};
        return std::move(decode_chunks(std::span(&one, 1), model)[0]);
    }
    // Unbatched path that exposes every table for the agreement check.
    const ModelConfig& c = model.config();
    RecurrentState state = init_state(c);
    TableBuilder builder(c.vocab_size);
    RangeDecoder dec(payload);
    std::vector<float> logits(c.vocab_size);
    std::vector<TokenId> out;
    out.reserve(n_tokens);
    for (std::uint32_t i = 0; i < n_tokens; ++i) {
        model.forward(state, i == 0 ? kBeginOfChunkToken : out.back(), logits);
        const FrequencyTable& table = builder.build(logits);
        trace->push_back(table_hash(table));
        out.push_back(dec.decode_symbol(table));
    }
    dec.finish();
    return out;
}

double quantized_cross_entropy_bits(std::span<const TokenId> tokens, const Model& model) {
    const ModelConfig& c = model.config();
    RecurrentState state = init_state(c);
    TableBuilder builder(c.vocab_size);
    std::vector<float> logits(c.vocab_size);
    double bits = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        model.forward(state, i == 0 ? kBeginOfChunkToken : tokens[i - 1], logits);
        const FrequencyTable& table = builder.build(logits);
        bits -= std::log2(static_cast<double>(table.freqs.at(tokens[i])) / kFreqTotal);
    }
    return bits;
}

}  // namespace l3tc
