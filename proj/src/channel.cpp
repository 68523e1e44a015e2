#include "edgelinker/channel.hpp"

#include "edgelinker/codec.hpp"

namespace edgelinker::channel {

namespace {
constexpr std::size_t kMinCiphertext = crypto::kAeadNonceBytes + crypto::kAeadTagBytes + 64;
}

Bytes canonical_encode(const ChannelMessage& m) {
    Encoder enc;
    enc.u64(m.timestamp_ms).u64(m.nonce).fixed(m.identification).bytes(m.body);
    return std::move(enc).take();
}

ChannelMessage decode_channel_message(ByteView in) {
    Decoder dec(in);
    ChannelMessage m;
    m.timestamp_ms = dec.u64();
    m.nonce = dec.u64();
    m.identification = dec.fixed<PublicKey>();
    m.body = dec.bytes();
    dec.expect_done();
    return m;
}

Bytes to_wire(const SecureEnvelope& env) { return concat(env.sender_hint.view(), env.ciphertext); }

std::optional<SecureEnvelope> from_wire(ByteView wire) {
    if (wire.size() < 32 + crypto::kAeadNonceBytes + crypto::kAeadTagBytes) return std::nullopt;
    SecureEnvelope env;
    env.sender_hint = *PublicKey::from_view(wire.first(32));
    env.ciphertext.assign(wire.begin() + 32, wire.end());
    return env;
}

std::string_view to_string(ChannelError e) {
    switch (e) {
        case ChannelError::InvalidPublicKey: return "InvalidPublicKey";
        case ChannelError::IdentityMismatch: return "IdentityMismatch";
        case ChannelError::DecryptFailed: return "DecryptFailed";
        case ChannelError::SignatureInvalid: return "SignatureInvalid";
    }
    return "?";
}

std::string_view to_string(ReplayReject r) {
    switch (r) {
        case ReplayReject::NonceReplayed: return "NonceReplayed";
        case ReplayReject::NonceGap: return "NonceGap";
        case ReplayReject::StaleTimestamp: return "StaleTimestamp";
    }
    return "?";
}

Result<SecureEnvelope, ChannelError> seal_message(const ChannelMessage& m, const KeyPair& sender,
                                                  const PublicKey& receiver) {
    return seal_message(m, sender, receiver, crypto::random_aead_nonce());
}

Result<SecureEnvelope, ChannelError> seal_message(const ChannelMessage& m, const KeyPair& sender,
                                                  const PublicKey& receiver,
                                                  const crypto::AeadNonce& aead_nonce) {
    if (m.identification != sender.public_key) return Err{ChannelError::IdentityMismatch};
    auto key = crypto::derive_shared_key(sender, receiver);
    if (!key) return Err{ChannelError::InvalidPublicKey};
    return seal_message(m, sender, *key, aead_nonce);
}

Result<SecureEnvelope, ChannelError> seal_message(const ChannelMessage& m, const KeyPair& sender,
                                                  const SymmetricKey& key,
                                                  const crypto::AeadNonce& aead_nonce) {
    if (m.identification != sender.public_key) return Err{ChannelError::IdentityMismatch};

    Bytes plaintext = canonical_encode(m);
    const auto sig = crypto::sign_digest(crypto::sha256(plaintext), sender);
    plaintext.insert(plaintext.end(), sig.begin(), sig.end());

    SecureEnvelope env;
    env.sender_hint = sender.public_key;
    auto sealed = crypto::aead_encrypt(plaintext, env.sender_hint.view(), aead_nonce, key);
    env.ciphertext.reserve(aead_nonce.size() + sealed.size());
    env.ciphertext.insert(env.ciphertext.end(), aead_nonce.begin(), aead_nonce.end());
    env.ciphertext.insert(env.ciphertext.end(), sealed.begin(), sealed.end());
    return env;
}

Result<ChannelMessage, ChannelError> open_message(const SecureEnvelope& env, const KeyPair& receiver,
                                                  const PublicKey& sender) {
    auto key = crypto::derive_shared_key(receiver, sender);
    if (!key) return Err{ChannelError::InvalidPublicKey};
    return open_message(env, *key, sender);
}

Result<ChannelMessage, ChannelError> open_message(const SecureEnvelope& env, const SymmetricKey& key,
                                                  const PublicKey& sender) {
    if (env.ciphertext.size() < kMinCiphertext) return Err{ChannelError::DecryptFailed};

    crypto::AeadNonce nonce{};
    std::memcpy(nonce.data(), env.ciphertext.data(), nonce.size());
    const ByteView sealed = ByteView(env.ciphertext).subspan(nonce.size());
    auto plaintext = crypto::aead_decrypt(sealed, env.sender_hint.view(), nonce, key);
    if (!plaintext) return Err{ChannelError::DecryptFailed};

    const ByteView all(*plaintext);
    if (all.size() < 64) return Err{ChannelError::SignatureInvalid};
    const ByteView encoded = all.first(all.size() - 64);
    const auto sig = *Signature::from_view(all.last(64));

    if (!crypto::verify_digest(crypto::sha256(encoded), sig, sender)) {
        return Err{ChannelError::SignatureInvalid};
    }
    ChannelMessage m;
    try {
        m = decode_channel_message(encoded);
    } catch (const DecodeError&) {
        return Err{ChannelError::SignatureInvalid};
    }
    if (m.identification != sender) return Err{ChannelError::SignatureInvalid};
    return m;
}

Result<SymmetricKey, ChannelError> SharedKeyCache::key_for(const PublicKey& peer) {
    if (auto it = keys_.find(peer); it != keys_.end()) return it->second;
    auto key = crypto::derive_shared_key(self_, peer);
    if (!key) return Err{ChannelError::InvalidPublicKey};
    keys_.emplace(peer, *key);
    return *key;
}

Status<ReplayReject> ReplayState::check_and_record(const ChannelMessage& m, std::uint64_t now_ms) {
    const std::uint64_t last = last_nonce(m.identification);
    if (m.nonce <= last) return Err{ReplayReject::NonceReplayed};
    if (m.nonce != last + 1) return Err{ReplayReject::NonceGap};
    const std::uint64_t skew =
        m.timestamp_ms > now_ms ? m.timestamp_ms - now_ms : now_ms - m.timestamp_ms;
    if (skew > tolerance_ms_) return Err{ReplayReject::StaleTimestamp};
    last_nonce_[m.identification] = m.nonce;
    return {};
}

std::uint64_t ReplayState::last_nonce(const PublicKey& sender) const {
    auto it = last_nonce_.find(sender);
    return it == last_nonce_.end() ? 0 : it->second;
}

}  // namespace edgelinker::channel
