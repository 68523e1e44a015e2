#pragma once

// Primitive layer over libsodium: SHA-256, Ed25519 identity keys and
// signatures, X25519 agreement on the birationally-equivalent curve, and the
// ChaCha20-Poly1305 (IETF) AEAD.

#include <cstdint>
#include <optional>
#include <span>

#include "edgelinker/bytes.hpp"
#include "edgelinker/result.hpp"

namespace edgelinker::crypto {

// Idempotent; every entry point below calls it.
void ensure_initialized();

Digest sha256(ByteView data);
Digest sha256(ByteView a, ByteView b);

struct KeyPair {
    PublicKey public_key;
    PrivateKey private_key;  // Ed25519 seed

    bool operator==(const KeyPair&) const = default;
};

KeyPair generate_keypair(const std::array<std::uint8_t, 32>& seed);
KeyPair generate_keypair(ByteView seed32);
// Convenience for tests and simulations: seed = SHA-256(label).
KeyPair keypair_from_label(std::string_view label);
PublicKey derive_public_key(const PrivateKey& private_key);

Signature sign_digest(const Digest& digest, const KeyPair& signer);
bool verify_digest(const Digest& digest, const Signature& sig, const PublicKey& signer);

struct SymmetricKey {
    std::array<std::uint8_t, 32> key{};
    bool operator==(const SymmetricKey&) const = default;
};

enum class KeyError { InvalidPublicKey };

// KDF(X25519(sk, pk) || min(pk_a, pk_b) || max(pk_a, pk_b)); symmetric in roles.
Result<SymmetricKey, KeyError> derive_shared_key(const PrivateKey& own, ByteView peer_public);
Result<SymmetricKey, KeyError> derive_shared_key(const KeyPair& own, const PublicKey& peer);

inline constexpr std::size_t kAeadNonceBytes = 12;
inline constexpr std::size_t kAeadTagBytes = 16;
using AeadNonce = std::array<std::uint8_t, kAeadNonceBytes>;

AeadNonce random_aead_nonce();
Bytes aead_encrypt(ByteView plaintext, ByteView associated, const AeadNonce& nonce,
                   const SymmetricKey& key);
std::optional<Bytes> aead_decrypt(ByteView ciphertext, ByteView associated, const AeadNonce& nonce,
                                  const SymmetricKey& key);

}  // namespace edgelinker::crypto
