#include "l3tc/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>

namespace l3tc {
namespace {

enum class CharClass : std::uint8_t { Word, Punct, Space, OtherSpace };

constexpr CharClass classify(std::uint8_t b) noexcept {
    if (b >= 0x80) return CharClass::Word;
    if ((b >= '0' && b <= '9') || (b >= 'a' && b <= 'z') || (b >= 'A' && b <= 'Z'))
        return CharClass::Word;
    if (b == ' ') return CharClass::Space;
    if (b == '\n' || b == '\t' || b == '\r' || b == '\v' || b == '\f') return CharClass::OtherSpace;
    return CharClass::Punct;
}

constexpr bool is_space(CharClass c) noexcept {
    return c == CharClass::Space || c == CharClass::OtherSpace;
}

// Non-ASCII bytes are all Word class, so piece boundaries never split a
// multi-byte character.
template <typename Fn>
void for_each_piece(std::string_view s, Fn&& fn) {
    const std::size_t n = s.size();
    auto cls = [&](std::size_t i) { return classify(static_cast<std::uint8_t>(s[i])); };
    auto run_end = [&](std::size_t from) {
        const CharClass k = cls(from);
        std::size_t e = from;
        while (e < n && cls(e) == k) ++e;
        return e;
    };
    std::size_t i = 0;
    while (i < n) {
        const std::size_t start = i;
        if (!is_space(cls(i))) {
            i = run_end(i);
            fn(s.substr(start, i - start));
            continue;
        }
        std::size_t j = i;
        while (j < n && is_space(cls(j))) ++j;
        if (j < n && s[j - 1] == ' ') {
            // The last space of the run leads the following word or punctuation.
            if (j - 1 > start) fn(s.substr(start, j - 1 - start));
            const std::size_t e = run_end(j);
            fn(s.substr(j - 1, e - (j - 1)));
            i = e;
        } else {
            fn(s.substr(start, j - start));
            i = j;
        }
    }
}

std::uint32_t pack_char(const std::uint8_t* p, std::size_t len) noexcept {
    std::uint32_t key = 0;
    for (std::size_t k = 0; k < len; ++k) key |= std::uint32_t(p[k]) << (8 * k);
    return key;
}

constexpr std::uint64_t pair_key(TokenId l, TokenId r) noexcept {
    return (std::uint64_t(l) << 32) | r;
}

std::size_t char_len_unchecked(std::uint8_t lead) noexcept {
    if (lead < 0x80) return 1;
    if (lead < 0xE0) return 2;
    if (lead < 0xF0) return 3;
    return 4;
}

// Applies merges to one outlier-free run of base tokens in rank order,
// leftmost occurrence first. Appends the result to `out`.
class SegmentMerger {
public:
    explicit SegmentMerger(const Vocabulary& vocab) : vocab_(vocab) {}

    void run(std::span<const TokenId> ids, std::vector<TokenId>& out) {
        const std::size_t n = ids.size();
        if (n == 1) {
            out.push_back(ids[0]);
            return;
        }
        id_.assign(ids.begin(), ids.end());
        next_.resize(n);
        prev_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            next_[k] = static_cast<std::int32_t>(k + 1 < n ? k + 1 : -1);
            prev_[k] = static_cast<std::int32_t>(k) - 1;
        }
        heap_ = {};
        for (std::size_t k = 0; k + 1 < n; ++k) push(static_cast<std::int32_t>(k));

        while (!heap_.empty()) {
            const Candidate c = heap_.top();
            heap_.pop();
            const std::int32_t nx = next_[c.pos];
            if (id_[c.pos] == kDead || nx < 0) continue;
            const Vocabulary::MergeRule* rule = vocab_.find_merge(id_[c.pos], id_[nx]);
            if (rule == nullptr || rule->rank != c.rank) continue;
            id_[c.pos] = rule->result;
            id_[nx] = kDead;
            next_[c.pos] = next_[nx];
            if (next_[nx] >= 0) prev_[next_[nx]] = c.pos;
            if (prev_[c.pos] >= 0) push(prev_[c.pos]);
            push(c.pos);
        }
        for (std::int32_t k = 0; k >= 0; k = next_[k]) out.push_back(id_[k]);
    }

private:
    static constexpr TokenId kDead = 0xFFFFFFFFu;
    struct Candidate {
        std::uint32_t rank;
        std::int32_t pos;
        bool operator>(const Candidate& o) const noexcept {
            return rank != o.rank ? rank > o.rank : pos > o.pos;
        }
    };

    void push(std::int32_t pos) {
        const std::int32_t nx = next_[pos];
        if (nx < 0) return;
        if (const auto* rule = vocab_.find_merge(id_[pos], id_[nx])) heap_.push({rule->rank, pos});
    }

    const Vocabulary& vocab_;
    std::vector<TokenId> id_;
    std::vector<std::int32_t> next_, prev_;
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<Merge> merges, TokenId unk_id,
                       double coverage)
    : tokens_(std::move(tokens)), merges_(std::move(merges)), unk_id_(unk_id), coverage_(coverage) {
    const std::size_t v = tokens_.size();
    require_format(v >= 1 && v < 0xFFFFFFFFu, "vocabulary: bad size");
    require_format(coverage_ > 0.0 && coverage_ <= 1.0, "vocabulary: coverage outside (0, 1]");
    require_format(unk_id_ < v, "vocabulary: unk id out of range");
    require_format(tokens_[unk_id_] == kUnkSentinel, "vocabulary: unk token is not the sentinel");

    std::unordered_set<std::string_view> seen;
    seen.reserve(v);
    for (const auto& t : tokens_) {
        require_format(!t.empty() && t.size() <= 0xFFFF, "vocabulary: bad token length");
        require_format(seen.insert(t).second, "vocabulary: duplicate token");
    }

    std::vector<bool> is_result(v, false);
    merge_index_.reserve(merges_.size() * 2);
    for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
        const Merge& m = merges_[rank];
        require_format(m.left < v && m.right < v && m.result < v, "vocabulary: merge id out of range");
        require_format(m.left != unk_id_ && m.right != unk_id_ && m.result != unk_id_,
                       "vocabulary: merge touches the unk token");
        require_format(tokens_[m.result] == tokens_[m.left] + tokens_[m.right],
                       "vocabulary: merge result does not match its parts");
        const bool fresh = merge_index_
                               .emplace(pair_key(m.left, m.right),
                                        MergeRule{static_cast<std::uint32_t>(rank), m.result})
                               .second;
        require_format(fresh, "vocabulary: duplicate merge rule");
        is_result[m.result] = true;
    }

    for (TokenId id = 0; id < v; ++id) {
        if (id == unk_id_ || is_result[id]) continue;
        const std::string& t = tokens_[id];
        const ByteView b = as_bytes(t);
        require_format(utf8::sequence_length(b, 0) == b.size(),
                       "vocabulary: base token is not a single UTF-8 character");
        base_index_.emplace(t, id);
    }
}

TokenId Vocabulary::char_id(std::string_view utf8_char) const {
    auto it = base_index_.find(std::string(utf8_char));
    return it == base_index_.end() ? unk_id_ : it->second;
}

const Vocabulary::MergeRule* Vocabulary::find_merge(TokenId left, TokenId right) const {
    auto it = merge_index_.find(pair_key(left, right));
    return it == merge_index_.end() ? nullptr : &it->second;
}

std::size_t TokenizedChunk::outlier_bytes() const noexcept {
    std::size_t n = 0;
    for (const auto& o : outliers) n += o.size();
    return n;
}

std::vector<std::string_view> pre_tokenize(std::string_view text) {
    std::vector<std::string_view> out;
    for_each_piece(text, [&](std::string_view p) { out.push_back(p); });
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Word {
    std::vector<TokenId> syms;
    std::uint64_t count;
};

class PairTrainer {
public:
    PairTrainer(std::vector<std::string>& tokens, std::vector<Word> words)
        : tokens_(tokens), words_(std::move(words)), heap_(HeapLess{&tokens_}) {
        for (std::uint32_t w = 0; w < words_.size(); ++w) {
            const auto& s = words_[w].syms;
            for (std::size_t k = 0; k + 1 < s.size(); ++k) {
                const auto key = pair_key(s[k], s[k + 1]);
                counts_[key] += static_cast<std::int64_t>(words_[w].count);
                where_[key].push_back(w);
            }
        }
        for (const auto& [key, c] : counts_) heap_.push({c, unpack_l(key), unpack_r(key)});
    }

    /// Learns merges until `target` tokens exist or no pair occurs twice.
    std::vector<Merge> learn(std::size_t target) {
        std::vector<Merge> merges;
        std::unordered_map<std::string, TokenId> index;
        for (TokenId id = 0; id < tokens_.size(); ++id) index.emplace(tokens_[id], id);

        while (tokens_.size() < target && !heap_.empty()) {
            const Entry top = heap_.top();
            heap_.pop();
            const auto key = pair_key(top.left, top.right);
            auto cit = counts_.find(key);
            if (cit == counts_.end() || cit->second != top.count) continue;  // stale
            if (top.count < 2) break;

            std::string joined = tokens_[top.left] + tokens_[top.right];
            TokenId result;
            if (auto it = index.find(joined); it != index.end()) {
                result = it->second;
            } else {
                result = static_cast<TokenId>(tokens_.size());
                index.emplace(joined, result);
                tokens_.push_back(std::move(joined));
            }
            merges.push_back({top.left, top.right, result});
            apply(top.left, top.right, result);
        }
        return merges;
    }

private:
    struct Entry {
        std::int64_t count;
        TokenId left, right;
    };
    struct HeapLess {
        const std::vector<std::string>* tokens;
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.count != b.count) return a.count < b.count;
            const auto& t = *tokens;
            if (t[a.left] != t[b.left]) return t[a.left] > t[b.left];
            return t[a.right] > t[b.right];
        }
    };

    static TokenId unpack_l(std::uint64_t k) { return static_cast<TokenId>(k >> 32); }
    static TokenId unpack_r(std::uint64_t k) { return static_cast<TokenId>(k & 0xFFFFFFFFu); }

    void bump(TokenId l, TokenId r, std::int64_t delta, std::uint32_t word) {
        const auto key = pair_key(l, r);
        auto& c = counts_[key];
        c += delta;
        if (delta > 0) where_[key].push_back(word);
        touched_.insert(key);
    }

    void apply(TokenId left, TokenId right, TokenId result) {
        const auto key = pair_key(left, right);
        std::vector<std::uint32_t> ws = std::move(where_[key]);
        where_.erase(key);
        std::sort(ws.begin(), ws.end());
        ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
        touched_.clear();

        for (std::uint32_t w : ws) {
            auto& s = words_[w].syms;
            const auto c = static_cast<std::int64_t>(words_[w].count);
            std::size_t k = 0;
            std::vector<TokenId> merged;
            merged.reserve(s.size());
            bool changed = false;
            while (k < s.size()) {
                if (k + 1 < s.size() && s[k] == left && s[k + 1] == right) {
                    changed = true;
                    merged.push_back(result);
                    k += 2;
                } else {
                    merged.push_back(s[k]);
                    ++k;
                }
            }
            if (!changed) continue;
            for (std::size_t i = 0; i + 1 < s.size(); ++i) bump(s[i], s[i + 1], -c, w);
            for (std::size_t i = 0; i + 1 < merged.size(); ++i) bump(merged[i], merged[i + 1], c, w);
            s = std::move(merged);
        }
        counts_.erase(key);
        touched_.erase(key);
        for (const auto k : touched_) {
            auto it = counts_.find(k);
            if (it == counts_.end()) continue;
            if (it->second <= 0) {
                counts_.erase(it);
                where_.erase(k);
            } else {
                heap_.push({it->second, unpack_l(k), unpack_r(k)});
            }
        }
    }

    std::vector<std::string>& tokens_;
    std::vector<Word> words_;
    std::unordered_map<std::uint64_t, std::int64_t> counts_;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where_;
    std::unordered_set<std::uint64_t> touched_;
    std::priority_queue<Entry, std::vector<Entry>, HeapLess> heap_;
};

}  // namespace

Vocabulary train_vocabulary(ByteView corpus, std::uint32_t target_size, double coverage) {
    require(!corpus.empty(), "train_vocabulary: empty corpus");
    require(coverage > 0.0 && coverage <= 1.0, "train_vocabulary: coverage must be in (0, 1]");
    require(utf8::is_valid(corpus), "train_vocabulary: corpus is not valid UTF-8");

    // Character histogram, keyed by packed UTF-8 bytes.
    std::unordered_map<std::uint32_t, std::uint64_t> char_counts;
    std::uint64_t total_chars = 0;
    for (std::size_t i = 0; i < corpus.size();) {
        const std::size_t len = char_len_unchecked(corpus[i]);
        ++char_counts[pack_char(&corpus[i], len)];
        ++total_chars;
        i += len;
    }
    auto unpack = [](std::uint32_t key) {
        std::string s;
        const std::size_t len = char_len_unchecked(static_cast<std::uint8_t>(key & 0xFF));
        for (std::size_t k = 0; k < len; ++k) s.push_back(static_cast<char>((key >> (8 * k)) & 0xFF));
        return s;
    };
    struct CharStat {
        std::string bytes;
        std::uint32_t key;
        std::uint64_t count;
    };
    std::vector<CharStat> ranked;
    ranked.reserve(char_counts.size());
    for (const auto& [key, count] : char_counts) ranked.push_back({unpack(key), key, count});
    std::sort(ranked.begin(), ranked.end(), [](const CharStat& a, const CharStat& b) {
        return a.count != b.count ? a.count > b.count : a.bytes < b.bytes;
    });

    // Smallest frequency-ranked prefix whose mass reaches the coverage.
    const double total = static_cast<double>(total_chars);
    const auto needed =
        static_cast<std::uint64_t>(std::ceil(coverage * total - 1e-9 * total));
    std::size_t keep = 0;
    std::uint64_t cum = 0;
    while (keep < ranked.size() && (keep == 0 || cum < needed)) cum += ranked[keep++].count;
    ranked.resize(keep);
    require(target_size >= keep + 1,
            "train_vocabulary: target_size " + std::to_string(target_size) +
                " is smaller than the base alphabet (" + std::to_string(keep) + ") plus unk");

    std::sort(ranked.begin(), ranked.end(),
              [](const CharStat& a, const CharStat& b) { return a.bytes < b.bytes; });
    std::vector<std::string> tokens{std::string(kUnkSentinel)};
    std::unordered_map<std::uint32_t, TokenId> base;
    for (const auto& c : ranked) {
        base.emplace(c.key, static_cast<TokenId>(tokens.size()));
        tokens.push_back(c.bytes);
    }

    // Piece histogram, then outlier-free segments as BPE words.
    std::unordered_map<std::string_view, std::uint64_t> piece_counts;
    for_each_piece(as_chars(corpus), [&](std::string_view p) { ++piece_counts[p]; });

    std::unordered_map<std::string, std::uint64_t> segment_counts;
    for (const auto& [piece, count] : piece_counts) {
        std::size_t seg_start = 0;
        for (std::size_t i = 0; i < piece.size();) {
            const std::size_t len = char_len_unchecked(static_cast<std::uint8_t>(piece[i]));
            const auto key = pack_char(reinterpret_cast<const std::uint8_t*>(piece.data() + i), len);
            if (!base.contains(key)) {
                if (i > seg_start) segment_counts[std::string(piece.substr(seg_start, i - seg_start))] += count;
                seg_start = i + len;
            }
            i += len;
        }
        if (piece.size() > seg_start) segment_counts[std::string(piece.substr(seg_start))] += count;
    }
    // Deterministic word order regardless of hash-map iteration order.
    std::vector<std::pair<std::string, std::uint64_t>> segments(segment_counts.begin(),
                                                                 segment_counts.end());
    std::sort(segments.begin(), segments.end());

    std::vector<Word> words;
    words.reserve(segments.size());
    for (const auto& [seg, count] : segments) {
        Word w{{}, count};
        for (std::size_t i = 0; i < seg.size();) {
            const std::size_t len = char_len_unchecked(static_cast<std::uint8_t>(seg[i]));
            w.syms.push_back(base.at(pack_char(reinterpret_cast<const std::uint8_t*>(seg.data() + i), len)));
            i += len;
        }
        if (w.syms.size() > 1) words.push_back(std::move(w));
    }

    PairTrainer trainer(tokens, std::move(words));
    std::vector<Merge> merges = trainer.learn(target_size);
    return Vocabulary(std::move(tokens), std::move(merges), 0, coverage);
}

// ---------------------------------------------------------------------------
// Encode / decode

TokenizedChunk encode(ByteView text, const Vocabulary& vocab) {
    require(utf8::is_valid(text), "encode: input is not valid UTF-8");
    TokenizedChunk out;
    SegmentMerger merger(vocab);
    std::vector<TokenId> seg;
    const TokenId unk = vocab.unk_id();

    for_each_piece(as_chars(text), [&](std::string_view piece) {
        seg.clear();
        for (std::size_t i = 0; i < piece.size();) {
            const std::size_t len = char_len_unchecked(static_cast<std::uint8_t>(piece[i]));
            const std::string_view ch = piece.substr(i, len);
            const TokenId id = vocab.char_id(ch);
            if (id == unk) {
                if (!seg.empty()) merger.run(seg, out.token_ids);
                seg.clear();
                out.token_ids.push_back(unk);
                out.outliers.emplace_back(ch);
            } else {
                seg.push_back(id);
            }
            i += len;
        }
        if (!seg.empty()) merger.run(seg, out.token_ids);
    });
    return out;
}

std::string decode(const TokenizedChunk& chunk, const Vocabulary& vocab) {
    std::string out;
    std::size_t next_outlier = 0;
    for (TokenId id : chunk.token_ids) {
        require_format(id < vocab.size(), "decode: token id out of range");
        if (id == vocab.unk_id()) {
            require_format(next_outlier < chunk.outliers.size(), "decode: too few outliers");
            out += chunk.outliers[next_outlier++];
        } else {
            out += vocab.token(id);
        }
    }
    require_format(next_outlier == chunk.outliers.size(), "decode: too many outliers");
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

BpbReport bpb_eval(ByteView corpus, const Vocabulary& vocab, BitModel mode) {
    require(!corpus.empty(), "bpb_eval: empty corpus");
    const TokenizedChunk chunk = encode(corpus, vocab);

    BpbReport r;
    r.corpus_bytes = corpus.size();
    r.outlier_chars = chunk.outliers.size();
    r.outlier_bytes = chunk.outlier_bytes();
    r.known_tokens = chunk.token_ids.size() - chunk.outliers.size();
    r.outlier_bits = 8.0 * static_cast<double>(r.outlier_bytes);

    if (mode == BitModel::Uniform) {
        r.known_bits = static_cast<double>(r.known_tokens) * std::log2(static_cast<double>(vocab.size()));
    } else {
        std::vector<std::uint64_t> hist(vocab.size(), 0);
        for (TokenId id : chunk.token_ids)
            if (id != vocab.unk_id()) ++hist[id];
        const double n = static_cast<double>(r.known_tokens);
        double bits = 0.0;
        for (std::uint64_t c : hist)
            if (c > 0) bits -= static_cast<double>(c) * std::log2(static_cast<double>(c) / n);
        r.known_bits = bits;
    }
    return r;
}

double unknown_ratio(std::span<const TokenizedChunk> chunks, std::uint64_t compressed_bits) {
    require(compressed_bits > 0, "unknown_ratio: compressed_bits must be positive");
    std::uint64_t bytes = 0;
    for (const auto& c : chunks) bytes += c.outlier_bytes();
    return 8.0 * static_cast<double>(bytes) / static_cast<double>(compressed_bits);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr std::string_view kVocabMagic = "L3TV";
constexpr std::uint8_t kVocabVersion = 1;

ByteWriter write_vocab_body(const Vocabulary& vocab) {
    ByteWriter w;
    w.raw(kVocabMagic);
    w.u8(kVocabVersion);
    w.u32(static_cast<std::uint32_t>(vocab.size()));
    w.u32(vocab.unk_id());
    w.f64(vocab.coverage());
    for (const auto& t : vocab.tokens()) {
        w.u16(static_cast<std::uint16_t>(t.size()));
        w.raw(t);
    }
    w.u32(static_cast<std::uint32_t>(vocab.merges().size()));
    for (const auto& m : vocab.merges()) {
        w.u32(m.left);
        w.u32(m.right);
        w.u32(m.result);
    }
    return w;
}
}  // namespace

Bytes save_vocabulary(const Vocabulary& vocab) {
    ByteWriter w = write_vocab_body(vocab);
    w.seal_with_hash();
    return std::move(w).take();
}

std::uint32_t vocabulary_hash(const Vocabulary& vocab) { return fnv1a(write_vocab_body(vocab).bytes()); }

Vocabulary load_vocabulary(ByteView bytes) {
    ByteReader r(bytes, "vocabulary");
    r.expect_magic(kVocabMagic);
    require_format(r.u8() == kVocabVersion, "vocabulary: unsupported version");
    const ByteView body = verify_sealed(bytes, "vocabulary");
    ByteReader b(body, "vocabulary");
    b.raw(kVocabMagic.size() + 1);

    const std::uint32_t v = b.u32();
    const std::uint32_t unk = b.u32();
    const double coverage = b.f64();
    require_format(v <= b.remaining() / 2, "vocabulary: truncated");
    std::vector<std::string> tokens;
    tokens.reserve(v);
    for (std::uint32_t i = 0; i < v; ++i) {
        const std::uint16_t len = b.u16();
        tokens.emplace_back(as_chars(b.raw(len)));
    }
    const std::uint32_t n_merges = b.u32();
    require_format(n_merges <= b.remaining() / 12, "vocabulary: truncated");
    std::vector<Merge> merges(n_merges);
    for (auto& m : merges) {
        m.left = b.u32();
        m.right = b.u32();
        m.result = b.u32();
    }
    require_format(b.remaining() == 0, "vocabulary: trailing bytes");
    return Vocabulary(std::move(tokens), std::move(merges), unk, coverage);
}

}  // namespace l3tc
