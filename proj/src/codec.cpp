#include "edgelinker/codec.hpp"

#include <limits>

namespace edgelinker {

Encoder& Encoder::u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
        out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
    return *this;
}

Encoder& Encoder::tag(std::uint8_t v) {
    out_.push_back(v);
    return *this;
}

void Encoder::be32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
        out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
}

Encoder& Encoder::count(std::size_t n) {
    if (n > std::numeric_limits<std::uint32_t>::max()) {
        throw std::length_error("list too long for canonical encoding");
    }
    be32(static_cast<std::uint32_t>(n));
    return *this;
}

Encoder& Encoder::bytes(ByteView v) {
    count(v.size());
    out_.insert(out_.end(), v.begin(), v.end());
    return *this;
}

Encoder& Encoder::str(std::string_view s) {
    return bytes(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void Decoder::need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DecodeError("truncated input");
}

std::uint64_t Decoder::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
    return v;
}

std::uint8_t Decoder::tag() {
    need(1);
    return in_[pos_++];
}

std::uint32_t Decoder::be32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
    return v;
}

std::size_t Decoder::count() { return be32(); }

Bytes Decoder::bytes() {
    const std::size_t n = be32();
    need(n);
    Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
              in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
}

std::string Decoder::str() {
    auto raw = bytes();
    return std::string(raw.begin(), raw.end());
}

}  // namespace edgelinker
