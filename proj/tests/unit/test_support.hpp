#pragma once

#include <random>
#include <string>

#include "l3tc/io.hpp"
#include "l3tc/model_weights.hpp"
#include "l3tc/tokenizer.hpp"

namespace l3tc::testing {

inline std::string data_path(const std::string& name) { return std::string(L3TC_TEST_DATA) + "/" + name; }

/// Appends the UTF-8 encoding of a code point.
inline void append_utf8(std::string& s, char32_t cp) {
    if (cp < 0x80) {
        s += static_cast<char>(cp);
    } else if (cp < 0x800) {
        s += static_cast<char>(0xC0 | (cp >> 6));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        s += static_cast<char>(0xE0 | (cp >> 12));
        s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        s += static_cast<char>(0xF0 | (cp >> 18));
        s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

enum class TextFlavor { Ascii, Multibyte, Mixed, Rare };

/// Random valid UTF-8. Rare draws from code points unlikely to be in any
/// vocabulary trained on ASCII-heavy text, giving all-outlier inputs.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t n_chars, TextFlavor flavor) {
    static constexpr std::string_view kAscii =
        "abcdefghijklmnopqrstuvwxyz      ABCDEFGH0123456789.,;:!?'\"()-\n\t";
    std::string s;
    for (std::size_t i = 0; i < n_chars; ++i) {
        const auto pick = rng() % 100;
        const bool ascii = flavor == TextFlavor::Ascii || (flavor == TextFlavor::Mixed && pick < 80);
        if (ascii) {
            s += kAscii[rng() % kAscii.size()];
            continue;
        }
        char32_t cp;
        switch (flavor == TextFlavor::Rare ? 3 : rng() % 4) {
            case 0: cp = 0xA0 + rng() % 0x700; break;                       // 2-byte
            case 1: cp = 0x4E00 + rng() % 0x5000; break;                    // CJK, 3-byte
            case 2: cp = 0x1F300 + rng() % 0x300; break;                    // 4-byte
            default: cp = 0x10000 + rng() % 0xF0000; break;                 // anything astral
        }
        if (cp >= 0xD800 && cp <= 0xDFFF) cp = 0xE000;
        append_utf8(s, cp);
    }
    return s;
}

/// Small English-like corpus for training tokenizers in tests.
inline std::string sample_corpus(std::size_t repeats = 40) {
    static constexpr std::string_view kText =
        "The quick brown fox jumps over the lazy dog. A learned compressor predicts the next token, "
        "and an arithmetic coder turns those predictions into bits. Rare characters such as \xC3\xA9 "
        "or \xE2\x82\xAC bypass the model entirely; they are stored as raw bytes.\n"
        "def main(argv):\n    return len(argv) + 1\n";
    std::string s;
    for (std::size_t i = 0; i < repeats; ++i) s += kText;
    return s;
}

}  // namespace l3tc::testing
