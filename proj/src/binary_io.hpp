#pragma once

// Little-endian scalar encoding shared by the model, feature and track files.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fsn::io {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out.write(b.data(), b.size());
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out.write(b.data(), b.size());
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

class Reader {
public:
    Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    std::uint32_t u32() {
        std::array<unsigned char, 4> b{};
        read(b.data(), b.size());
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }

    std::uint64_t u64() {
        std::array<unsigned char, 8> b{};
        read(b.data(), b.size());
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

    void expect_magic(const char (&magic)[5]) {
        if (bytes(4) != std::string(magic, 4)) fail("bad magic, expected '" + std::string(magic) + "'");
    }

    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) fail("trailing bytes after payload");
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(source_ + ": " + what);
    }

private:
    void read(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
    }

    std::istream& in_;
    std::string source_;
};

}  // namespace fsn::io
