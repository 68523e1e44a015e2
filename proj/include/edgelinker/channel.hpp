#pragma once

// Secure IoT-to-fog channel: sign-then-encrypt envelopes and per-sender
// nonce/timestamp replay filtering.
//
// Sealing (sender A -> receiver B):
//   K   = derive_shared_key(sk_A, pk_B)
//   enc = canonical_encode(message)
//   sig = Sign(SHA-256(enc), sk_A)
//   c   = aead_nonce || AEAD(enc || sig, K, ad = sender_hint)
// Opening reverses the steps and returns the message only when the
// recomputed hash verifies under the claimed sender key.

#include <cstdint>
#include <map>
#include <string_view>

#include "edgelinker/bytes.hpp"
#include "edgelinker/crypto.hpp"
#include "edgelinker/result.hpp"

namespace edgelinker::channel {

using crypto::KeyPair;
using crypto::SymmetricKey;

struct ChannelMessage {
    std::uint64_t timestamp_ms = 0;
    std::uint64_t nonce = 0;
    PublicKey identification;
    Bytes body;

    bool operator==(const ChannelMessage&) const = default;
};

Bytes canonical_encode(const ChannelMessage& m);
// Throws DecodeError on malformed or non-canonical input.
ChannelMessage decode_channel_message(ByteView in);

struct SecureEnvelope {
    PublicKey sender_hint;
    Bytes ciphertext;  // 12-byte AEAD nonce || AEAD output

    bool operator==(const SecureEnvelope&) const = default;
};

// Wire form: sender_hint (32) || aead nonce (12) || ciphertext.
Bytes to_wire(const SecureEnvelope& env);
std::optional<SecureEnvelope> from_wire(ByteView wire);

enum class ChannelError {
    InvalidPublicKey,
    IdentityMismatch,
    DecryptFailed,
    SignatureInvalid,
};

std::string_view to_string(ChannelError e);

Result<SecureEnvelope, ChannelError> seal_message(const ChannelMessage& m, const KeyPair& sender,
                                                  const PublicKey& receiver);
Result<SecureEnvelope, ChannelError> seal_message(const ChannelMessage& m, const KeyPair& sender,
                                                  const PublicKey& receiver,
                                                  const crypto::AeadNonce& aead_nonce);
// Variant for callers that cache the pairwise key.
Result<SecureEnvelope, ChannelError> seal_message(const ChannelMessage& m, const KeyPair& sender,
                                                  const SymmetricKey& key,
                                                  const crypto::AeadNonce& aead_nonce);

Result<ChannelMessage, ChannelError> open_message(const SecureEnvelope& env, const KeyPair& receiver,
                                                  const PublicKey& sender);
Result<ChannelMessage, ChannelError> open_message(const SecureEnvelope& env, const SymmetricKey& key,
                                                  const PublicKey& sender);

// Memoises derive_shared_key per peer for a fixed local identity.
class SharedKeyCache {
public:
    explicit SharedKeyCache(KeyPair self) : self_(std::move(self)) {}

    Result<SymmetricKey, ChannelError> key_for(const PublicKey& peer);
    const KeyPair& self() const noexcept { return self_; }

private:
    KeyPair self_;
    std::map<PublicKey, SymmetricKey> keys_;
};

enum class ReplayReject { NonceReplayed, NonceGap, StaleTimestamp };

std::string_view to_string(ReplayReject r);

inline constexpr std::uint64_t kDefaultClockSkewMs = 30'000;

// Single-writer store of the highest accepted nonce per sender.
class ReplayState {
public:
    explicit ReplayState(std::uint64_t clock_skew_tolerance_ms = kDefaultClockSkewMs)
        : tolerance_ms_(clock_skew_tolerance_ms) {}

    // Accepts iff nonce == last + 1 (first expected nonce is 1) and the
    // timestamp lies within the skew tolerance of now. Records on accept.
    Status<ReplayReject> check_and_record(const ChannelMessage& m, std::uint64_t now_ms);

    std::uint64_t last_nonce(const PublicKey& sender) const;
    std::uint64_t tolerance_ms() const noexcept { return tolerance_ms_; }
    std::size_t known_senders() const noexcept { return last_nonce_.size(); }

private:
    std::uint64_t tolerance_ms_;
    std::map<PublicKey, std::uint64_t> last_nonce_;
};

}  // namespace edgelinker::channel
