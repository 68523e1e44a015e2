#pragma once

// Canonical binary encoding shared by every wire and hashing path:
//   unsigned integers  -> 8-byte big-endian
//   byte strings       -> 4-byte big-endian length || bytes
//   lists              -> 4-byte big-endian count || elements
//   enums / tags       -> 1 byte
// Fields are written in declaration order. The encoding is injective for
// every record type built on top of it.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "edgelinker/bytes.hpp"

namespace edgelinker {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Encoder {
public:
    Encoder() = default;

    Encoder& u64(std::uint64_t v);
    Encoder& tag(std::uint8_t v);
    Encoder& count(std::size_t n);
    Encoder& bytes(ByteView v);
    Encoder& str(std::string_view s);

    template <std::size_t N, typename Tag>
    Encoder& fixed(const FixedBytes<N, Tag>& v) {
        return bytes(v.view());
    }

    const Bytes& buffer() const& noexcept { return out_; }
    Bytes take() && noexcept { return std::move(out_); }

private:
    void be32(std::uint32_t v);
    Bytes out_;
};

class Decoder {
public:
    explicit Decoder(ByteView in) : in_(in) {}

    std::uint64_t u64();
    std::uint8_t tag();
    std::size_t count();
    Bytes bytes();
    std::string str();

    template <typename Fixed>
    Fixed fixed() {
        auto raw = bytes();
        auto out = Fixed::from_view(raw);
        if (!out) throw DecodeError("fixed-width field has wrong length");
        return *out;
    }

    bool done() const noexcept { return pos_ == in_.size(); }
    void expect_done() const {
        if (!done()) throw DecodeError("trailing bytes after record");
    }

private:
    std::uint32_t be32();
    void need(std::size_t n) const;

    ByteView in_;
    std::size_t pos_ = 0;
};

}  // namespace edgelinker
