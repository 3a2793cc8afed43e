#include <gtest/gtest.h>

#include <random>

#include "l3tc/container.hpp"
#include "test_support.hpp"

using namespace l3tc;
using l3tc::testing::random_utf8;
using l3tc::testing::sample_corpus;
using l3tc::testing::TextFlavor;

namespace {

Bytes to_bytes(std::string_view s) {
    const ByteView v = as_bytes(s);
    return Bytes(v.begin(), v.end());
}

class Container : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        Vocabulary v = train_vocabulary(as_bytes(sample_corpus(4)), 256, 0.99);
        const ModelConfig c = preset("L3TC-200K", v.size());
        codec_ = new Codec(std::move(v), init_random_weights(c, 77));
    }
    static void TearDownTestSuite() {
        delete codec_;
        codec_ = nullptr;
    }
    static Codec* codec_;
};
Codec* Container::codec_ = nullptr;

void expect_error(ErrorKind kind, auto&& fn) {
    try {
        fn();
        ADD_FAILURE() << "no error raised";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

}  // namespace

TEST(ChunkBoundaries, CoverInputWithoutSplittingCharacters) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 300; ++i) {
        const std::string text = random_utf8(rng, rng() % 800, i % 2 ? TextFlavor::Multibyte : TextFlavor::Mixed);
        const auto size = static_cast<std::uint32_t>(4 + rng() % 200);
        const auto ranges = chunk_boundaries(as_bytes(text), size);
        std::size_t pos = 0;
        for (const auto& r : ranges) {
            ASSERT_EQ(r.offset, pos);
            ASSERT_GT(r.length, 0u);
            ASSERT_LE(r.length, size);
            ASSERT_TRUE(utf8::is_valid(as_bytes(text).subspan(r.offset, r.length)));
            pos += r.length;
        }
        ASSERT_EQ(pos, text.size());
    }
}

TEST(ChunkBoundaries, CutsAtExactSizeForAscii) {
    const std::string text(5000, 'x');
    const auto ranges = chunk_boundaries(as_bytes(text), 2048);
    ASSERT_EQ(ranges.size(), 3u);
    EXPECT_EQ(ranges[0], (ByteRange{0, 2048}));
    EXPECT_EQ(ranges[1], (ByteRange{2048, 2048}));
    EXPECT_EQ(ranges[2], (ByteRange{4096, 904}));
    EXPECT_TRUE(chunk_boundaries({}, 2048).empty());
    EXPECT_THROW(chunk_boundaries(as_bytes(text), 0), Error);
}

TEST(ChunkBoundaries, BacksOffBeforeMultibyteSequence) {
    // "ab" then a 4-byte character straddling the cut at 4.
    const std::string text = "ab\xF0\x9F\x98\x80" "cd";
    const auto ranges = chunk_boundaries(as_bytes(text), 4);
    ASSERT_EQ(ranges.size(), 3u);
    EXPECT_EQ(ranges[0], (ByteRange{0, 2}));
    EXPECT_EQ(ranges[1], (ByteRange{2, 4}));
    EXPECT_EQ(ranges[2], (ByteRange{6, 2}));
}

TEST(ChunkBoundaries, InvalidBytesStillMakeProgress) {
    const Bytes junk(100, 0x80);
    const auto ranges = chunk_boundaries(junk, 16);
    std::size_t total = 0;
    for (const auto& r : ranges) total += r.length;
    EXPECT_EQ(total, 100u);
}

TEST_F(Container, EmptyInput) {
    const Bytes archive = compress({}, *codec_);
    const ArchiveView view = parse_archive(archive);
    EXPECT_EQ(view.header.original_length, 0u);
    EXPECT_EQ(view.header.chunk_count, 0u);
    EXPECT_TRUE(decompress(archive, *codec_).empty());
}

TEST_F(Container, ShortInputRoundTrip) {
    const Bytes in = to_bytes("Hello, world! caf\xC3\xA9 \xE2\x82\xAC\xF0\x9F\x98\x80");
    const Bytes archive = compress(in, *codec_);
    EXPECT_EQ(parse_archive(archive).header.chunk_count, 1u);
    EXPECT_EQ(decompress(archive, *codec_), in);
}

TEST_F(Container, HeaderDescribesInput) {
    const Bytes in = to_bytes(sample_corpus(3));
    const Bytes archive = compress(in, *codec_, {512, 1});
    const ArchiveView v = parse_archive(archive);
    EXPECT_EQ(v.header.version, 1u);
    EXPECT_EQ(v.header.flags, 0u);
    EXPECT_EQ(v.header.vocab_hash, codec_->vocab_hash());
    EXPECT_EQ(v.header.model_hash, codec_->model_hash());
    EXPECT_EQ(v.header.original_length, in.size());
    EXPECT_EQ(v.header.chunk_size, 512u);
    EXPECT_EQ(v.header.chunk_count, chunk_boundaries(in, 512).size());
}

TEST_F(Container, RandomInputsRoundTripSerialAndParallel) {
    std::mt19937_64 rng(2);
    const TextFlavor flavors[] = {TextFlavor::Ascii, TextFlavor::Multibyte, TextFlavor::Mixed, TextFlavor::Rare};
    for (int i = 0; i < 24; ++i) {
        const Bytes in = to_bytes(random_utf8(rng, rng() % 3000, flavors[i % 4]));
        const auto size = static_cast<std::uint32_t>(64 + rng() % 1024);
        const Bytes serial = compress(in, *codec_, {size, 1});
        const Bytes parallel = compress(in, *codec_, {size, 4});
        ASSERT_EQ(serial, parallel) << i;
        ASSERT_EQ(decompress(serial, *codec_, 1), in) << i;
        ASSERT_EQ(decompress(serial, *codec_, 4), in) << i;
    }
}

TEST_F(Container, ManyChunksUseSeveralLockstepGroups) {
    const Bytes in = to_bytes(sample_corpus(20));
    const Bytes archive = compress(in, *codec_, {64, 3});
    EXPECT_GT(parse_archive(archive).header.chunk_count, 64u);
    EXPECT_EQ(decompress(archive, *codec_, 3), in);
}

TEST_F(Container, InvalidUtf8IsStoredRaw) {
    Bytes in = to_bytes(std::string(300, 'a'));
    in[150] = 0xFF;
    in.push_back(0xC3);
    const Bytes archive = compress(in, *codec_, {100, 1});
    const ArchiveView v = parse_archive(archive);
    ASSERT_EQ(v.chunks.size(), 4u);
    EXPECT_FALSE(v.chunks[0].raw());
    EXPECT_TRUE(v.chunks[1].raw());
    EXPECT_FALSE(v.chunks[2].raw());
    EXPECT_TRUE(v.chunks[3].raw());
    EXPECT_EQ(decompress(archive, *codec_), in);
}

TEST_F(Container, OutputIsDeterministic) {
    const Bytes in = to_bytes(sample_corpus(5));
    EXPECT_EQ(compress(in, *codec_, {300, 1}), compress(in, *codec_, {300, 2}));
}

TEST_F(Container, WrongModelOrVocabularyIsAHashMismatch) {
    const Bytes archive = compress(to_bytes("some text"), *codec_);
    const ModelConfig c = codec_->model().config();
    const Codec other_model(codec_->vocab(), init_random_weights(c, 78));
    expect_error(ErrorKind::HashMismatch, [&] { decompress(archive, other_model); });

    const Vocabulary& v = codec_->vocab();
    const Vocabulary relabelled(v.tokens(), v.merges(), v.unk_id(), 0.5);
    const Codec other_vocab(relabelled, init_random_weights(c, 77));
    expect_error(ErrorKind::HashMismatch, [&] { decompress(archive, other_vocab); });
}

TEST_F(Container, MismatchedSizesAreRejected) {
    const Vocabulary small({std::string(kUnkSentinel), "a"}, {}, 0, 1.0);
    EXPECT_THROW(Codec(small, init_random_weights(preset("L3TC-200K", 3), 1)), Error);
}

TEST_F(Container, CorruptArchivesAreFormatErrors) {
    const Bytes archive = compress(to_bytes(sample_corpus(2)), *codec_, {200, 1});
    auto corrupt = [&](std::size_t pos, std::uint8_t value) {
        Bytes b = archive;
        b[pos] = value;
        return b;
    };
    expect_error(ErrorKind::Format, [&] { decompress(corrupt(0, 'X'), *codec_); });
    expect_error(ErrorKind::Format, [&] { decompress(corrupt(4, 2), *codec_); });
    expect_error(ErrorKind::Format, [&] { decompress(corrupt(5, 1), *codec_); });
    expect_error(ErrorKind::Format, [&] { decompress(ByteView(archive).first(archive.size() - 1), *codec_); });
    Bytes trailing = archive;
    trailing.push_back(0);
    expect_error(ErrorKind::Format, [&] { decompress(trailing, *codec_); });
    // original_length field
    expect_error(ErrorKind::Format, [&] { decompress(corrupt(14, archive[14] ^ 1), *codec_); });
    expect_error(ErrorKind::Format, [&] { decompress(ByteView(archive).first(20), *codec_); });
}

TEST_F(Container, PayloadBitFlipsNeverGoUnnoticedSilently) {
    const Bytes in = to_bytes(sample_corpus(2));
    const Bytes archive = compress(in, *codec_, {400, 1});
    std::mt19937_64 rng(3);
    int detected = 0;
    for (int i = 0; i < 60; ++i) {
        Bytes b = archive;
        const std::size_t pos = 30 + rng() % (b.size() - 30);
        b[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
        try {
            // Any outcome but a crash or an unchanged result is acceptable; a
            // flip inside coded data may decode to different but valid text.
            const Bytes out = decompress(b, *codec_);
            EXPECT_NE(out, in);
        } catch (const Error&) {
            ++detected;
        }
    }
    EXPECT_GT(detected, 0);
}
