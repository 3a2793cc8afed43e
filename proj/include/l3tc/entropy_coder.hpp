#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "l3tc/common.hpp"
#include "l3tc/rwkv_model.hpp"

namespace l3tc {

inline constexpr std::uint32_t kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;

/// Integer quantization of a next-token distribution. Every symbol has
/// frequency >= 1 and the frequencies sum to exactly 2^16.
struct FrequencyTable {
    std::vector<std::uint32_t> freqs;
    std::vector<std::uint32_t> cumulative;  // size V + 1, cumulative[V] == 2^16

    std::size_t size() const noexcept { return freqs.size(); }
    friend bool operator==(const FrequencyTable&, const FrequencyTable&) = default;
};

/// f_i = max(1, floor(p_i * (2^16 - V))); the remaining mass goes to the
/// most probable symbol (lowest index on ties).
FrequencyTable quantize(std::span<const double> probabilities);
void quantize_into(std::span<const double> probabilities, FrequencyTable& table);

std::uint32_t table_hash(const FrequencyTable& table);

/// Byte-oriented range encoder: 64-bit low with carry propagation through a
/// cached byte, 32-bit range renormalized below 2^24.
class RangeEncoder {
public:
    void encode(std::uint32_t cum, std::uint32_t freq);
    void encode_symbol(const FrequencyTable& table, std::uint32_t symbol);
    /// Flushes the remaining 5 bytes. The encoder must not be reused.
    Bytes finish() &&;

    std::uint32_t range() const noexcept { return range_; }
    /// Bytes the stream would occupy if finished now.
    std::size_t pending_size() const noexcept { return out_.size() + cache_size_ + 4; }

private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    Bytes out_;
};

/// Exact inverse of RangeEncoder given the same table sequence. Reading past
/// the end or ending in an inconsistent state raises Error(Format).
class RangeDecoder {
public:
    explicit RangeDecoder(ByteView data);

    std::uint32_t decode_symbol(const FrequencyTable& table);
    /// Verifies the stream was consumed exactly and closed cleanly.
    void finish() const;

    std::uint32_t range() const noexcept { return range_; }

private:
    std::uint8_t next_byte();

    ByteView data_;
    std::size_t pos_ = 0;
    std::uint32_t code_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
};

/// Per-symbol table hashes, recorded when debugging encoder/decoder agreement.
using TableTrace = std::vector<std::uint32_t>;

/// Token id fed to the model before the first symbol of every chunk.
inline constexpr TokenId kBeginOfChunkToken = 0;

/// Codes one chunk from a fresh recurrent state. Table i is derived from the
/// model's distribution after token i-1 (kBeginOfChunkToken for i = 0).
Bytes encode_chunk(std::span<const TokenId> tokens, const Model& model, TableTrace* trace = nullptr);

/// Inverse of encode_chunk.
std::vector<TokenId> decode_chunk(ByteView payload, const Model& model, std::uint32_t n_tokens,
                                  TableTrace* trace = nullptr);

struct ChunkPayload {
    ByteView bytes;
    std::uint32_t n_tokens = 0;
};

/// Decodes several independent chunks in lockstep so the output head runs
/// as one batched product per step. Results are identical to decoding each
/// chunk alone.
std::vector<std::vector<TokenId>> decode_chunks(std::span<const ChunkPayload> chunks, const Model& model);

/// Sum over symbols of -log2(f_sym / 2^16) for the tables encode_chunk
/// would use: the ideal code length of the quantized model.
double quantized_cross_entropy_bits(std::span<const TokenId> tokens, const Model& model);

}  // namespace l3tc
