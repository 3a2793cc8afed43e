#pragma once

#include <cstdint>
#include <vector>

#include "l3tc/common.hpp"
#include "l3tc/entropy_coder.hpp"
#include "l3tc/model_weights.hpp"
#include "l3tc/rwkv_model.hpp"
#include "l3tc/tokenizer.hpp"

namespace l3tc {

inline constexpr std::uint32_t kDefaultChunkSize = 2048;

/// Vocabulary plus compiled model, with the content hashes that bind
/// archives to them.
class Codec {
public:
    Codec(Vocabulary vocab, const ModelWeights& weights);

    const Vocabulary& vocab() const noexcept { return vocab_; }
    const Model& model() const noexcept { return model_; }
    std::uint32_t vocab_hash() const noexcept { return vocab_hash_; }
    std::uint32_t model_hash() const noexcept { return model_hash_; }
    std::uint64_t model_params() const noexcept { return params_; }

private:
    Vocabulary vocab_;
    Model model_;
    std::uint32_t vocab_hash_;
    std::uint32_t model_hash_;
    std::uint64_t params_;
};

struct ContainerOptions {
    std::uint32_t chunk_size = kDefaultChunkSize;
    unsigned threads = 1;
};

struct ByteRange {
    std::size_t offset = 0;
    std::size_t length = 0;
    friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

/// Contiguous ranges of at most chunk_size bytes. A cut that would split a
/// UTF-8 sequence backs off over up to three continuation bytes.
std::vector<ByteRange> chunk_boundaries(ByteView input, std::uint32_t chunk_size = kDefaultChunkSize);

/// Archive layout (little-endian):
///   "L3TC" u8 version=1 u8 flags=0 u32 vocab_hash u32 model_hash
///   u64 original_length u32 chunk_size u32 chunk_count
///   per chunk: u32 token_count u32 coded_length u32 outlier_length
///              coded bytes, outlier bytes (raw UTF-8, 8 bits per byte)
/// A chunk that is not valid UTF-8 is stored verbatim: token_count is
/// kRawChunk, coded_length 0, and the bytes sit in the outlier field.
inline constexpr std::uint32_t kRawChunk = 0xFFFFFFFFu;

struct ArchiveHeader {
    std::uint8_t version = 0;
    std::uint8_t flags = 0;
    std::uint32_t vocab_hash = 0;
    std::uint32_t model_hash = 0;
    std::uint64_t original_length = 0;
    std::uint32_t chunk_size = 0;
    std::uint32_t chunk_count = 0;
};

struct ChunkRecord {
    std::uint32_t token_count = 0;
    ByteView coded;
    ByteView outliers;
    bool raw() const noexcept { return token_count == kRawChunk; }
};

struct ArchiveView {
    ArchiveHeader header;
    std::vector<ChunkRecord> chunks;
};

/// Parses framing only; no hash checks.
ArchiveView parse_archive(ByteView file);

Bytes compress(ByteView input, const Codec& codec, const ContainerOptions& options = {});

/// Throws Error(HashMismatch) if the archive was made with another model or
/// vocabulary and Error(Format) on any corruption it can detect.
Bytes decompress(ByteView file, const Codec& codec, unsigned threads = 1);

}  // namespace l3tc
