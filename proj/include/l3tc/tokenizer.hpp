#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "l3tc/common.hpp"

namespace l3tc {

using TokenId = std::uint32_t;

inline constexpr std::uint32_t kDefaultVocabSize = 16384;
inline constexpr double kDefaultCoverage = 0.999;

/// Byte-string of the unknown token. 0xFF never occurs in UTF-8, so no merge
/// of character tokens can ever produce it.
inline constexpr std::string_view kUnkSentinel = "\xFF";

struct Merge {
    TokenId left = 0;
    TokenId right = 0;
    TokenId result = 0;
    friend bool operator==(const Merge&, const Merge&) = default;
};

/// Outlier-aware BPE vocabulary. Immutable after construction.
///
/// Token 0 is always the unknown token. Base tokens are single UTF-8
/// characters that survived the coverage cut; every other token is the
/// result of a merge rule. Merge rules are applied in rank (list) order.
class Vocabulary {
public:
    /// Validates and indexes. Throws Error(Format) on any inconsistency.
    Vocabulary(std::vector<std::string> tokens, std::vector<Merge> merges, TokenId unk_id,
               double coverage);

    std::size_t size() const noexcept { return tokens_.size(); }
    TokenId unk_id() const noexcept { return unk_id_; }
    double coverage() const noexcept { return coverage_; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<Merge>& merges() const noexcept { return merges_; }
    const std::string& token(TokenId id) const { return tokens_.at(id); }

    /// Id of the base token for one UTF-8 character, or unk_id if the
    /// character is an outlier.
    TokenId char_id(std::string_view utf8_char) const;

    struct MergeRule {
        std::uint32_t rank;
        TokenId result;
    };
    const MergeRule* find_merge(TokenId left, TokenId right) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.tokens_ == b.tokens_ && a.merges_ == b.merges_ && a.unk_id_ == b.unk_id_ &&
               a.coverage_ == b.coverage_;
    }

private:
    std::vector<std::string> tokens_;
    std::vector<Merge> merges_;
    TokenId unk_id_;
    double coverage_;
    std::unordered_map<std::string, TokenId> base_index_;
    std::unordered_map<std::uint64_t, MergeRule> merge_index_;
};

struct TokenizedChunk {
    std::vector<TokenId> token_ids;
    /// UTF-8 bytes of each outlier character, in order of occurrence.
    std::vector<std::string> outliers;

    std::size_t outlier_bytes() const noexcept;
    friend bool operator==(const TokenizedChunk&, const TokenizedChunk&) = default;
};

/// Learns a vocabulary: coverage cut over characters, then greedy pair
/// merges (most frequent first, ties to the lexicographically smaller
/// (left, right) byte-string pair) until target_size tokens exist.
/// Training stops early if no pair occurs at least twice.
Vocabulary train_vocabulary(ByteView corpus, std::uint32_t target_size = kDefaultVocabSize,
                            double coverage = kDefaultCoverage);

/// Pure and reentrant. Throws Error(InvalidArgument) on invalid UTF-8.
TokenizedChunk encode(ByteView text, const Vocabulary& vocab);
inline TokenizedChunk encode(std::string_view text, const Vocabulary& vocab) {
    return encode(as_bytes(text), vocab);
}

/// Throws Error(Format) on out-of-range ids or an outlier count mismatch.
std::string decode(const TokenizedChunk& chunk, const Vocabulary& vocab);

/// Splits text into the pre-tokenization pieces used by both training and
/// encoding. A piece is an optional single leading space followed by a
/// maximal run of word characters (ASCII alnum or any non-ASCII character)
/// or of ASCII punctuation; remaining whitespace forms its own pieces.
/// Merges never cross piece boundaries.
std::vector<std::string_view> pre_tokenize(std::string_view text);

enum class BitModel { Uniform, Unigram };

struct BpbReport {
    std::uint64_t corpus_bytes = 0;
    std::uint64_t known_tokens = 0;
    std::uint64_t outlier_chars = 0;
    std::uint64_t outlier_bytes = 0;
    double known_bits = 0.0;
    double outlier_bits = 0.0;  // always 8 * outlier_bytes
    double total_bits() const noexcept { return known_bits + outlier_bits; }
    double bpb() const noexcept { return total_bits() / static_cast<double>(corpus_bytes); }
};

/// Tokenizer pre-compression cost. Uniform charges log2(V) per known token,
/// Unigram charges -log2 of the token's marginal frequency on the same
/// corpus; each bypassed outlier byte costs 8 bits.
BpbReport bpb_eval(ByteView corpus, const Vocabulary& vocab, BitModel mode);

/// 8 * total outlier bytes / compressed_bits.
double unknown_ratio(std::span<const TokenizedChunk> chunks, std::uint64_t compressed_bits);

/// Binary L3TV format.
Bytes save_vocabulary(const Vocabulary& vocab);
Vocabulary load_vocabulary(ByteView bytes);

/// FNV-1a of the serialized body; identifies the vocabulary inside archives.
std::uint32_t vocabulary_hash(const Vocabulary& vocab);

}  // namespace l3tc
