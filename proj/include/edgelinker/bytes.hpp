#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edgelinker {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);
std::optional<Bytes> from_hex(std::string_view hex);

// Fixed-width byte string with a phantom tag so that keys, digests and
// permission ids cannot be mixed up at call sites.
template <std::size_t N, typename Tag>
struct FixedBytes {
    std::array<std::uint8_t, N> bytes{};

    static constexpr std::size_t size() noexcept { return N; }

    const std::uint8_t* data() const noexcept { return bytes.data(); }
    std::uint8_t* data() noexcept { return bytes.data(); }
    auto begin() const noexcept { return bytes.begin(); }
    auto end() const noexcept { return bytes.end(); }
    ByteView view() const noexcept { return ByteView(bytes.data(), N); }

    bool is_zero() const noexcept {
        return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
    }

    std::string hex() const { return to_hex(view()); }

    static std::optional<FixedBytes> from_view(ByteView in) {
        if (in.size() != N) return std::nullopt;
        FixedBytes out;
        std::memcpy(out.bytes.data(), in.data(), N);
        return out;
    }

    static std::optional<FixedBytes> parse_hex(std::string_view hex) {
        auto raw = from_hex(hex);
        if (!raw) return std::nullopt;
        return from_view(*raw);
    }

    // Big-endian small constant, e.g. permission ids 0x00..01.
    static constexpr FixedBytes from_u8(std::uint8_t last) {
        FixedBytes out;
        out.bytes[N - 1] = last;
        return out;
    }

    auto operator<=>(const FixedBytes&) const = default;
    bool operator==(const FixedBytes&) const = default;
};

struct PublicKeyTag;
struct PrivateKeyTag;
struct DigestTag;
struct SignatureTag;
struct PermissionTag;

using PublicKey = FixedBytes<32, PublicKeyTag>;
// Accounts are addressed by their identity key; contracts get derived 32-byte addresses.
using Address = PublicKey;
using PrivateKey = FixedBytes<32, PrivateKeyTag>;
using Digest = FixedBytes<32, DigestTag>;
using Signature = FixedBytes<64, SignatureTag>;
using PermissionId = FixedBytes<32, PermissionTag>;

struct FixedBytesHash {
    template <std::size_t N, typename Tag>
    std::size_t operator()(const FixedBytes<N, Tag>& v) const noexcept {
        static_assert(N >= sizeof(std::size_t));
        std::size_t h;
        std::memcpy(&h, v.data(), sizeof(h));
        return h;
    }
};

inline Bytes concat(ByteView a, ByteView b) {
    Bytes out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace edgelinker
