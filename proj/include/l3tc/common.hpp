#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace l3tc {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Error categories map onto CLI exit codes (see tools/l3tc_main.cpp).
enum class ErrorKind {
    InvalidArgument,  // caller violated a precondition
    Format,           // malformed, truncated or corrupt data
    HashMismatch,     // archive was produced with a different model or vocabulary
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorKind::InvalidArgument, what);
}

inline void require_format(bool cond, const std::string& what) {
    if (!cond) fail(ErrorKind::Format, what);
}

// 32-bit FNV-1a.
constexpr std::uint32_t kFnvOffset = 2166136261u;
constexpr std::uint32_t kFnvPrime = 16777619u;

inline std::uint32_t fnv1a(ByteView data, std::uint32_t h = kFnvOffset) noexcept {
    for (std::uint8_t b : data) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

inline ByteView as_bytes(std::string_view s) noexcept {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string_view as_chars(ByteView b) noexcept {
    return {reinterpret_cast<const char*>(b.data()), b.size()};
}

/// Little-endian serializer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void raw(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    void raw(std::string_view s) { raw(as_bytes(s)); }

    /// Appends FNV-1a of everything written so far.
    void seal_with_hash() { u32(fnv1a(buf_)); }

    std::size_t size() const noexcept { return buf_.size(); }
    const Bytes& bytes() const& noexcept { return buf_; }
    Bytes take() && { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes buf_;
};

/// Bounds-checked little-endian reader; every overrun is a Format error.
class ByteReader {
public:
    explicit ByteReader(ByteView data, std::string_view what = "input") : data_(data), what_(what) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    ByteView raw(std::size_t n) {
        need(n);
        ByteView out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void expect_magic(std::string_view magic) {
        ByteView got = raw(magic.size());
        require_format(as_chars(got) == magic, std::string(what_) + ": bad magic");
    }

private:
    void need(std::size_t n) {
        if (remaining() < n) fail(ErrorKind::Format, std::string(what_) + ": truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    ByteView data_;
    std::size_t pos_ = 0;
    std::string_view what_;
};

/// Splits a sealed buffer into body and trailing FNV-1a, verifying the hash.
inline ByteView verify_sealed(ByteView data, std::string_view what) {
    require_format(data.size() >= 4, std::string(what) + ": truncated");
    ByteView body = data.first(data.size() - 4);
    ByteReader tail(data.last(4), what);
    require_format(tail.u32() == fnv1a(body), std::string(what) + ": content hash mismatch");
    return body;
}

namespace utf8 {

/// Length of the UTF-8 sequence starting at data[pos], or 0 if it is not a
/// well-formed scalar value (overlongs, surrogates and > U+10FFFF rejected).
inline std::size_t sequence_length(ByteView data, std::size_t pos) noexcept {
    const std::size_t n = data.size() - pos;
    const std::uint8_t b0 = data[pos];
    if (b0 < 0x80) return 1;
    auto cont = [&](std::size_t i) { return i < n && (data[pos + i] & 0xC0) == 0x80; };
    if (b0 >= 0xC2 && b0 <= 0xDF) return cont(1) ? 2 : 0;
    if (b0 >= 0xE0 && b0 <= 0xEF) {
        if (!cont(1) || !cont(2)) return 0;
        const std::uint8_t b1 = data[pos + 1];
        if (b0 == 0xE0 && b1 < 0xA0) return 0;
        if (b0 == 0xED && b1 >= 0xA0) return 0;
        return 3;
    }
    if (b0 >= 0xF0 && b0 <= 0xF4) {
        if (!cont(1) || !cont(2) || !cont(3)) return 0;
        const std::uint8_t b1 = data[pos + 1];
        if (b0 == 0xF0 && b1 < 0x90) return 0;
        if (b0 == 0xF4 && b1 >= 0x90) return 0;
        return 4;
    }
    return 0;
}

inline bool is_valid(ByteView data) noexcept {
    for (std::size_t i = 0; i < data.size();) {
        std::size_t n = sequence_length(data, i);
        if (n == 0) return false;
        i += n;
    }
    return true;
}

inline bool is_continuation(std::uint8_t b) noexcept { return (b & 0xC0) == 0x80; }

}  // namespace utf8
}  // namespace l3tc
