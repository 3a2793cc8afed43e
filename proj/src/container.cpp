#include "l3tc/container.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace l3tc {
namespace {

constexpr std::string_view kArchiveMagic = "L3TC";
constexpr std::uint8_t kArchiveVersion = 1;
constexpr std::size_t kLockstepChunks = 32;

// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                        next.store(n);
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

// Splits concatenated outlier bytes into single characters.
std::vector<std::string> split_outliers(ByteView bytes) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < bytes.size();) {
        const std::size_t n = utf8::sequence_length(bytes, i);
        require_format(n > 0, "archive: corrupt outlier stream");
        out.emplace_back(as_chars(bytes.subspan(i, n)));
        i += n;
    }
    return out;
}

}  // namespace

Codec::Codec(Vocabulary vocab, const ModelWeights& weights)
    : vocab_(std::move(vocab)),
      model_(weights),
      vocab_hash_(vocabulary_hash(vocab_)),
      model_hash_(weights_hash(weights)),
      params_(count_params(weights.config)) {
    require(vocab_.size() == weights.config.vocab_size,
            "codec: vocabulary has " + std::to_string(vocab_.size()) + " tokens but the model expects " +
                std::to_string(weights.config.vocab_size));
}

std::vector<ByteRange> chunk_boundaries(ByteView input, std::uint32_t chunk_size) {
    require(chunk_size > 0, "chunk_boundaries: chunk size must be positive");
    std::vector<ByteRange> out;
    std::size_t pos = 0;
    while (pos < input.size()) {
        std::size_t cut = std::min(pos + chunk_size, input.size());
        if (cut < input.size()) {
            std::size_t back = 0;
            while (back < 3 && cut - back > pos && utf8::is_continuation(input[cut - back])) ++back;
            if (!utf8::is_continuation(input[cut - back]) && cut - back > pos) cut -= back;
        }
        out.push_back({pos, cut - pos});
        pos = cut;
    }
    return out;
}

ArchiveView parse_archive(ByteView file) {
    ByteReader r(file, "archive");
    r.expect_magic(kArchiveMagic);
    ArchiveView view;
    ArchiveHeader& h = view.header;
    h.version = r.u8();
    require_format(h.version == kArchiveVersion, "archive: unsupported version " + std::to_string(h.version));
    h.flags = r.u8();
    require_format(h.flags == 0, "archive: unknown flags");
    h.vocab_hash = r.u32();
    h.model_hash = r.u32();
    h.original_length = r.u64();
    h.chunk_size = r.u32();
    h.chunk_count = r.u32();
    require_format(h.chunk_size > 0, "archive: zero chunk size");
    require_format(h.chunk_count <= r.remaining() / 12, "archive: truncated chunk table");
    require_format(h.original_length <= std::uint64_t(h.chunk_count) * h.chunk_size,
                   "archive: length exceeds chunk capacity");

    view.chunks.reserve(h.chunk_count);
    for (std::uint32_t k = 0; k < h.chunk_count; ++k) {
        ChunkRecord c;
        c.token_count = r.u32();
        const std::uint32_t coded_len = r.u32();
        const std::uint32_t outlier_len = r.u32();
        c.coded = r.raw(coded_len);
        c.outliers = r.raw(outlier_len);
        require_format(outlier_len <= h.chunk_size, "archive: chunk longer than the chunk size");
        if (c.raw()) {
            require_format(coded_len == 0, "archive: raw chunk with coded payload");
        } else {
            // Every token stands for at least one byte of text.
            require_format(c.token_count <= h.chunk_size && c.token_count <= h.original_length,
                           "archive: implausible token count");
        }
        view.chunks.push_back(c);
    }
    require_format(r.remaining() == 0, "archive: trailing bytes");
    return view;
}

Bytes compress(ByteView input, const Codec& codec, const ContainerOptions& options) {
    const std::vector<ByteRange> ranges = chunk_boundaries(input, options.chunk_size);

    struct Encoded {
        std::uint32_t token_count = 0;
        Bytes coded;
        std::string outliers;
    };
    std::vector<Encoded> encoded(ranges.size());
    parallel_for(ranges.size(), options.threads, [&](std::size_t k) {
        const ByteView text = input.subspan(ranges[k].offset, ranges[k].length);
        Encoded& e = encoded[k];
        if (!utf8::is_valid(text)) {
            e.token_count = kRawChunk;
            e.outliers.assign(as_chars(text));
            return;
        }
        TokenizedChunk chunk = encode(text, codec.vocab());
        require(chunk.token_ids.size() < kRawChunk, "compress: chunk has too many tokens");
        e.token_count = static_cast<std::uint32_t>(chunk.token_ids.size());
        e.coded = encode_chunk(chunk.token_ids, codec.model());
        for (const auto& o : chunk.outliers) e.outliers += o;
    });

    ByteWriter w;
    w.raw(kArchiveMagic);
    w.u8(kArchiveVersion);
    w.u8(0);
    w.u32(codec.vocab_hash());
    w.u32(codec.model_hash());
    w.u64(input.size());
    w.u32(options.chunk_size);
    w.u32(static_cast<std::uint32_t>(encoded.size()));
    for (const Encoded& e : encoded) {
        w.u32(e.token_count);
        w.u32(static_cast<std::uint32_t>(e.coded.size()));
        w.u32(static_cast<std::uint32_t>(e.outliers.size()));
        w.raw(e.coded);
        w.raw(e.outliers);
    }
    return std::move(w).take();
}

Bytes decompress(ByteView file, const Codec& codec, unsigned threads) {
    const ArchiveView view = parse_archive(file);
    const ArchiveHeader& h = view.header;
    if (h.vocab_hash != codec.vocab_hash())
        fail(ErrorKind::HashMismatch, "archive was written with a different vocabulary");
    if (h.model_hash != codec.model_hash())
        fail(ErrorKind::HashMismatch, "archive was written with a different model");

    const std::size_t n = view.chunks.size();
    std::vector<std::string> texts(n);
    const std::size_t groups = (n + kLockstepChunks - 1) / kLockstepChunks;

    parallel_for(groups, threads, [&](std::size_t g) {
        const std::size_t first = g * kLockstepChunks;
        const std::size_t last = std::min(n, first + kLockstepChunks);
        std::vector<ChunkPayload> payloads;
        std::vector<std::size_t> which;
        for (std::size_t k = first; k < last; ++k) {
            const ChunkRecord& c = view.chunks[k];
            if (c.raw()) {
                texts[k].assign(as_chars(c.outliers));
            } else {
                payloads.push_back({c.coded, c.token_count});
                which.push_back(k);
            }
        }
        std::vector<std::vector<TokenId>> decoded = decode_chunks(payloads, codec.model());
        for (std::size_t i = 0; i < which.size(); ++i) {
            const std::size_t k = which[i];
            TokenizedChunk chunk{std::move(decoded[i]), split_outliers(view.chunks[k].outliers)};
            texts[k] = decode(chunk, codec.vocab());
        }
        for (std::size_t k = first; k < last; ++k)
            require_format(texts[k].size() <= h.chunk_size, "archive: chunk longer than the chunk size");
    });

    std::uint64_t total = 0;
    for (const auto& t : texts) total += t.size();
    require_format(total == h.original_length, "archive: decoded length does not match header");
    Bytes out;
    out.reserve(total);
    for (const auto& t : texts) out.insert(out.end(), t.begin(), t.end());
    return out;
}

}  // namespace l3tc
