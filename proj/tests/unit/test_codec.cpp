#include <gtest/gtest.h>

#include <random>

#include "edgelinker/codec.hpp"
#include "test_util.hpp"

namespace edgelinker {
namespace {

Bytes be64(std::uint64_t v) {
    Bytes out;
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
    return out;
}

TEST(Codec, U64IsEightByteBigEndian) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng();
        Encoder enc;
        enc.u64(v);
        EXPECT_EQ(enc.buffer(), be64(v));
    }
    Encoder enc;
    enc.u64(0x0102030405060708ULL);
    EXPECT_EQ(enc.buffer(), (Bytes{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Codec, BytesAreLengthPrefixed) {
    Encoder enc;
    enc.bytes(Bytes{0xaa, 0xbb, 0xcc});
    EXPECT_EQ(enc.buffer(), (Bytes{0, 0, 0, 3, 0xaa, 0xbb, 0xcc}));

    Encoder empty;
    empty.bytes(Bytes{});
    EXPECT_EQ(empty.buffer(), (Bytes{0, 0, 0, 0}));
}

TEST(Codec, CountTagAndString) {
    Encoder enc;
    enc.count(2).tag(7).str("hi");
    EXPECT_EQ(enc.buffer(), (Bytes{0, 0, 0, 2, 7, 0, 0, 0, 2, 'h', 'i'}));
}

TEST(Codec, RandomRoundTrip) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 500; ++i) {
        const auto a = rng();
        const auto t = static_cast<std::uint8_t>(rng());
        const auto blob = testing::random_bytes(rng, rng() % 300);
        Encoder enc;
        enc.u64(a).tag(t).bytes(blob);
        Decoder dec(enc.buffer());
        EXPECT_EQ(dec.u64(), a);
        EXPECT_EQ(dec.tag(), t);
        EXPECT_EQ(dec.bytes(), blob);
        EXPECT_TRUE(dec.done());
    }
}

TEST(Codec, TruncatedInputThrows) {
    Encoder enc;
    enc.u64(5).bytes(Bytes{1, 2, 3});
    const auto& full = enc.buffer();
    for (std::size_t cut = 0; cut < full.size(); ++cut) {
        Bytes part(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(cut));
        Decoder dec(part);
        EXPECT_THROW(
            {
                dec.u64();
                dec.bytes();
            },
            DecodeError)
            << "cut at " << cut;
    }
}

TEST(Codec, TrailingBytesRejected) {
    Bytes in = be64(1);
    in.push_back(0);
    Decoder dec(in);
    dec.u64();
    EXPECT_THROW(dec.expect_done(), DecodeError);
}

TEST(Codec, FixedFieldLengthChecked) {
    Encoder enc;
    enc.bytes(Bytes(31, 0));
    Decoder dec(enc.buffer());
    EXPECT_THROW(dec.fixed<Digest>(), DecodeError);
}

TEST(Bytes, HexRoundTrip) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const auto b = testing::random_bytes(rng, rng() % 64);
        EXPECT_EQ(from_hex(to_hex(b)), b);
    }
    EXPECT_EQ(to_hex(Bytes{0x00, 0xff, 0x1a}), "00ff1a");
    EXPECT_FALSE(from_hex("abc").has_value());
    EXPECT_FALSE(from_hex("zz").has_value());
}

TEST(Bytes, FixedBytesParseHexChecksLength) {
    EXPECT_FALSE(Digest::parse_hex("00").has_value());
    const auto d = Digest::parse_hex(std::string(64, 'a'));
    ASSERT_TRUE(d.has_value());
    EXPECT_EQ(d->bytes[0], 0xaa);
    EXPECT_EQ(PermissionId::from_u8(2).bytes[31], 2);
    EXPECT_TRUE(PermissionId::from_u8(0).is_zero());
}

}  // namespace
}  // namespace edgelinker
