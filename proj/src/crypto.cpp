#include "edgelinker/crypto.hpp"

#include <sodium.h>

#include <stdexcept>
#include <string_view>

namespace edgelinker::crypto {

namespace {

constexpr std::string_view kKdfLabel = "edgelinker/channel-key/v1";

struct ExpandedSecret {
    std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> bytes{};
    ~ExpandedSecret() { sodium_memzero(bytes.data(), bytes.size()); }
};

// libsodium's 64-byte Ed25519 secret is seed || public key.
void expand(const KeyPair& kp, ExpandedSecret& out) {
    std::memcpy(out.bytes.data(), kp.private_key.data(), 32);
    std::memcpy(out.bytes.data() + 32, kp.public_key.data(), 32);
}

}  // namespace

void ensure_initialized() {
    static const bool ready = [] {
        if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
        return true;
    }();
    (void)ready;
}

Digest sha256(ByteView data) {
    Digest out;
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

Digest sha256(ByteView a, ByteView b) {
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    crypto_hash_sha256_update(&st, a.data(), a.size());
    crypto_hash_sha256_update(&st, b.data(), b.size());
    Digest out;
    crypto_hash_sha256_final(&st, out.data());
    return out;
}

KeyPair generate_keypair(const std::array<std::uint8_t, 32>& seed) {
    ensure_initialized();
    KeyPair kp;
    ExpandedSecret sk;
    crypto_sign_seed_keypair(kp.public_key.data(), sk.bytes.data(), seed.data());
    std::memcpy(kp.private_key.data(), seed.data(), 32);
    return kp;
}

KeyPair generate_keypair(ByteView seed32) {
    if (seed32.size() != 32) throw std::invalid_argument("keypair seed must be 32 bytes");
    std::array<std::uint8_t, 32> seed{};
    std::memcpy(seed.data(), seed32.data(), 32);
    return generate_keypair(seed);
}

KeyPair keypair_from_label(std::string_view label) {
    auto d = sha256(ByteView(reinterpret_cast<const std::uint8_t*>(label.data()), label.size()));
    return generate_keypair(d.bytes);
}

PublicKey derive_public_key(const PrivateKey& private_key) {
    return generate_keypair(private_key.bytes).public_key;
}

Signature sign_digest(const Digest& digest, const KeyPair& signer) {
    ensure_initialized();
    ExpandedSecret sk;
    expand(signer, sk);
    Signature sig;
    crypto_sign_detached(sig.data(), nullptr, digest.data(), digest.size(), sk.bytes.data());
    return sig;
}

bool verify_digest(const Digest& digest, const Signature& sig, const PublicKey& signer) {
    ensure_initialized();
    return crypto_sign_verify_detached(sig.data(), digest.data(), digest.size(), signer.data()) == 0;
}

Result<SymmetricKey, KeyError> derive_shared_key(const PrivateKey& own, ByteView peer_public) {
    ensure_initialized();
    auto peer = PublicKey::from_view(peer_public);
    if (!peer) return Err{KeyError::InvalidPublicKey};
    return derive_shared_key(KeyPair{derive_public_key(own), own}, *peer);
}

Result<SymmetricKey, KeyError> derive_shared_key(const KeyPair& own, const PublicKey& peer) {
    ensure_initialized();
    std::array<std::uint8_t, crypto_scalarmult_curve25519_BYTES> peer_x{};
    if (crypto_sign_ed25519_pk_to_curve25519(peer_x.data(), peer.data()) != 0) {
        return Err{KeyError::InvalidPublicKey};
    }
    ExpandedSecret sk;
    expand(own, sk);
    std::array<std::uint8_t, crypto_scalarmult_curve25519_SCALARBYTES> own_x{};
    crypto_sign_ed25519_sk_to_curve25519(own_x.data(), sk.bytes.data());

    std::array<std::uint8_t, crypto_scalarmult_BYTES> dh{};
    const int rc = crypto_scalarmult(dh.data(), own_x.data(), peer_x.data());
    sodium_memzero(own_x.data(), own_x.size());
    if (rc != 0) return Err{KeyError::InvalidPublicKey};  // low-order point

    const PublicKey& lo = std::min(own.public_key, peer);
    const PublicKey& hi = std::max(own.public_key, peer);

    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    crypto_hash_sha256_update(&st, reinterpret_cast<const std::uint8_t*>(kKdfLabel.data()),
                              kKdfLabel.size());
    crypto_hash_sha256_update(&st, dh.data(), dh.size());
    crypto_hash_sha256_update(&st, lo.data(), lo.size());
    crypto_hash_sha256_update(&st, hi.data(), hi.size());
    SymmetricKey out;
    crypto_hash_sha256_final(&st, out.key.data());
    sodium_memzero(dh.data(), dh.size());
    return out;
}

AeadNonce random_aead_nonce() {
    ensure_initialized();
    AeadNonce n{};
    randombytes_buf(n.data(), n.size());
    return n;
}

Bytes aead_encrypt(ByteView plaintext, ByteView associated, const AeadNonce& nonce,
                   const SymmetricKey& key) {
    Bytes out(plaintext.size() + crypto_aead_chacha20poly1305_ietf_ABYTES);
    unsigned long long written = 0;
    crypto_aead_chacha20poly1305_ietf_encrypt(out.data(), &written, plaintext.data(), plaintext.size(),
                                              associated.data(), associated.size(), nullptr,
                                              nonce.data(), key.key.data());
    out.resize(static_cast<std::size_t>(written));
    return out;
}

std::optional<Bytes> aead_decrypt(ByteView ciphertext, ByteView associated, const AeadNonce& nonce,
                                  const SymmetricKey& key) {
    if (ciphertext.size() < crypto_aead_chacha20poly1305_ietf_ABYTES) return std::nullopt;
    Bytes out(ciphertext.size() - crypto_aead_chacha20poly1305_ietf_ABYTES);
    unsigned long long written = 0;
    if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &written, nullptr, ciphertext.data(),
                                                  ciphertext.size(), associated.data(),
                                                  associated.size(), nonce.data(),
                                                  key.key.data()) != 0) {
        return std::nullopt;
    }
    out.resize(static_cast<std::size_t>(written));
    return out;
}

}  // namespace edgelinker::crypto
