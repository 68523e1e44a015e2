#include "edgelinker/chain.hpp"

#include <algorithm>
#include <numeric>
#include <type_traits>

namespace edgelinker::chain {

namespace {

enum class PayloadTag : std::uint8_t { Transfer = 0, Deploy = 1, Call = 2, Query = 3 };

void encode_payload(Encoder& enc, const Payload& p) {
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Transfer>) {
                enc.tag(static_cast<std::uint8_t>(PayloadTag::Transfer)).fixed(v.to).u64(v.amount);
            } else if constexpr (std::is_same_v<T, Deploy>) {
                enc.tag(static_cast<std::uint8_t>(PayloadTag::Deploy))
                    .tag(static_cast<std::uint8_t>(v.kind))
                    .bytes(v.init_args);
            } else if constexpr (std::is_same_v<T, Call>) {
                enc.tag(static_cast<std::uint8_t>(PayloadTag::Call))
                    .fixed(v.contract)
                    .str(v.method)
                    .bytes(v.args);
            } else {
                enc.tag(static_cast<std::uint8_t>(PayloadTag::Query))
                    .fixed(v.contract)
                    .u64(v.from_ts)
                    .u64(v.to_ts);
            }
        },
        p);
}

Payload decode_payload(Decoder& dec) {
    switch (static_cast<PayloadTag>(dec.tag())) {
        case PayloadTag::Transfer: {
            Transfer t;
            t.to = dec.fixed<Address>();
            t.amount = dec.u64();
            return t;
        }
        case PayloadTag::Deploy: {
            Deploy d;
            const auto kind = dec.tag();
            if (kind != static_cast<std::uint8_t>(ContractKind::HealthRecord)) {
                throw DecodeError("unknown contract kind");
            }
            d.kind = ContractKind::HealthRecord;
            d.init_args = dec.bytes();
            return d;
        }
        case PayloadTag::Call: {
            Call c;
            c.contract = dec.fixed<Address>();
            c.method = dec.str();
            c.args = dec.bytes();
            return c;
        }
        case PayloadTag::Query: {
            Query q;
            q.contract = dec.fixed<Address>();
            q.from_ts = dec.u64();
            q.to_ts = dec.u64();
            return q;
        }
    }
    throw DecodeError("unknown payload tag");
}

void encode_unsigned_into(Encoder& enc, const Transaction& tx) {
    enc.fixed(tx.sender).u64(tx.nonce).u64(tx.timestamp_ms);
    encode_payload(enc, tx.payload);
    enc.u64(tx.gas_limit);
}

Transaction decode_transaction_from(Decoder& dec) {
    Transaction tx;
    tx.sender = dec.fixed<PublicKey>();
    tx.nonce = dec.u64();
    tx.timestamp_ms = dec.u64();
    tx.payload = decode_payload(dec);
    tx.gas_limit = dec.u64();
    tx.signature = dec.fixed<Signature>();
    return tx;
}

void encode_unsigned_header(Encoder& enc, const BlockHeader& h) {
    enc.u64(h.height).u64(h.timestamp_ms).fixed(h.prev_hash).fixed(h.tx_root).fixed(h.proposer);
}

bool is_authority(std::span<const PublicKey> authorities, const PublicKey& pk) {
    return std::find(authorities.begin(), authorities.end(), pk) != authorities.end();
}

}  // namespace

void encode_into(Encoder& enc, const Transaction& tx) {
    encode_unsigned_into(enc, tx);
    enc.fixed(tx.signature);
}

Bytes canonical_encode(const Transaction& tx) {
    Encoder enc;
    encode_into(enc, tx);
    return std::move(enc).take();
}

Bytes encode_unsigned(const Transaction& tx) {
    Encoder enc;
    encode_unsigned_into(enc, tx);
    return std::move(enc).take();
}

Transaction decode_transaction(ByteView in) {
    Decoder dec(in);
    auto tx = decode_transaction_from(dec);
    dec.expect_done();
    return tx;
}

Digest hash_tx(const Transaction& tx) { return crypto::sha256(canonical_encode(tx)); }

void sign_transaction(Transaction& tx, const KeyPair& signer) {
    tx.sender = signer.public_key;
    tx.signature = crypto::sign_digest(crypto::sha256(encode_unsigned(tx)), signer);
}

bool verify_transaction(const Transaction& tx) {
    return crypto::verify_digest(crypto::sha256(encode_unsigned(tx)), tx.signature, tx.sender);
}

Bytes encode_unsigned(const BlockHeader& h) {
    Encoder enc;
    encode_unsigned_header(enc, h);
    return std::move(enc).take();
}

Bytes canonical_encode(const BlockHeader& h) {
    Encoder enc;
    encode_unsigned_header(enc, h);
    enc.fixed(h.proposer_signature);
    return std::move(enc).take();
}

Bytes canonical_encode(const Block& b) {
    Encoder enc;
    encode_unsigned_header(enc, b.header);
    enc.fixed(b.header.proposer_signature);
    enc.count(b.transactions.size());
    for (const auto& tx : b.transactions) encode_into(enc, tx);
    return std::move(enc).take();
}

Block decode_block(ByteView in) {
    Decoder dec(in);
    Block b;
    b.header.height = dec.u64();
    b.header.timestamp_ms = dec.u64();
    b.header.prev_hash = dec.fixed<Digest>();
    b.header.tx_root = dec.fixed<Digest>();
    b.header.proposer = dec.fixed<PublicKey>();
    b.header.proposer_signature = dec.fixed<Signature>();
    const auto n = dec.count();
    b.transactions.reserve(std::min<std::size_t>(n, 4096));
    for (std::size_t i = 0; i < n; ++i) b.transactions.push_back(decode_transaction_from(dec));
    dec.expect_done();
    return b;
}

Digest hash_block(const Block& b) { return crypto::sha256(canonical_encode(b.header)); }

Digest compute_tx_root(std::span<const Transaction> txs) {
    Bytes concat;
    concat.reserve(txs.size() * Digest::size());
    for (const auto& tx : txs) {
        const auto h = hash_tx(tx);
        concat.insert(concat.end(), h.begin(), h.end());
    }
    return crypto::sha256(concat);
}

Result<Block, BuildError> build_block(std::span<const Transaction> pending, const Block& parent,
                                      const KeyPair& proposer, std::uint64_t now_ms,
                                      std::size_t max_txs, std::span<const PublicKey> authorities) {
    if (!is_authority(authorities, proposer.public_key)) return Err{BuildError::NotAuthority};

    std::vector<std::size_t> order;
    order.reserve(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (!pending[i].is_query()) order.push_back(i);
    }
    // stable_sort keeps arrival order among equal (sender, nonce) keys
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ta = pending[a];
        const auto& tb = pending[b];
        if (ta.sender != tb.sender) return ta.sender < tb.sender;
        return ta.nonce < tb.nonce;
    });
    if (order.size() > max_txs) order.resize(max_txs);

    Block b;
    b.transactions.reserve(order.size());
    for (auto i : order) b.transactions.push_back(pending[i]);
    b.header.height = parent.header.height + 1;
    b.header.timestamp_ms = std::max(now_ms, parent.header.timestamp_ms + 1);
    b.header.prev_hash = hash_block(parent);
    b.header.tx_root = compute_tx_root(b.transactions);
    b.header.proposer = proposer.public_key;
    b.header.proposer_signature =
        crypto::sign_digest(crypto::sha256(encode_unsigned(b.header)), proposer);
    return b;
}

std::string_view to_string(Violation v) {
    switch (v) {
        case Violation::BadParentLink: return "BadParentLink";
        case Violation::BadHeight: return "BadHeight";
        case Violation::BadTimestamp: return "BadTimestamp";
        case Violation::NotAuthority: return "NotAuthority";
        case Violation::BadProposerSignature: return "BadProposerSignature";
        case Violation::BadTxRoot: return "BadTxRoot";
        case Violation::BadTxSignature: return "BadTxSignature";
    }
    return "?";
}

bool ValidationReport::has(Violation v) const {
    return std::find(violations.begin(), violations.end(), v) != violations.end();
}

std::string ValidationReport::summary() const {
    if (violations.empty()) return "Valid";
    std::string out = "Invalid[";
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) out += ',';
        out += to_string(violations[i]);
    }
    out += ']';
    return out;
}

ValidationReport validate_block(const Block& b, const Block& parent,
                                std::span<const PublicKey> authorities) {
    return validate_block(b, parent, authorities, verify_transaction);
}

ValidationReport validate_block(const Block& b, const Block& parent,
                                std::span<const PublicKey> authorities,
                                const TxVerifier& verify_tx) {
    ValidationReport report;
    auto& v = report.violations;
    const auto& h = b.header;
    if (h.prev_hash != hash_block(parent)) v.push_back(Violation::BadParentLink);
    if (h.height != parent.header.height + 1) v.push_back(Violation::BadHeight);
    if (h.timestamp_ms <= parent.header.timestamp_ms) v.push_back(Violation::BadTimestamp);
    if (!is_authority(authorities, h.proposer)) v.push_back(Violation::NotAuthority);
    if (!crypto::verify_digest(crypto::sha256(encode_unsigned(h)), h.proposer_signature,
                               h.proposer)) {
        v.push_back(Violation::BadProposerSignature);
    }
    if (h.tx_root != compute_tx_root(b.transactions)) v.push_back(Violation::BadTxRoot);
    for (const auto& tx : b.transactions) {
        if (!verify_tx(tx)) {
            v.push_back(Violation::BadTxSignature);
            break;
        }
    }
    return report;
}

bool verify_links(std::span<const Block> blocks) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].header.tx_root != compute_tx_root(blocks[i].transactions)) return false;
        if (i > 0 && blocks[i].header.prev_hash != hash_block(blocks[i - 1])) return false;
    }
    return true;
}

bool verify_links(std::span<const Block> blocks, const Digest& expected_tip) {
    return !blocks.empty() && verify_links(blocks) && hash_block(blocks.back()) == expected_tip;
}

Chain::Chain(Block genesis, std::vector<PublicKey> authorities)
    : authorities_(std::move(authorities)) {
    hashes_.push_back(hash_block(genesis));
    blocks_.push_back(std::move(genesis));
}

Status<AppendError> Chain::append_block(Block b) { return append_block(std::move(b), verify_transaction); }

Status<AppendError> Chain::append_block(Block b, const TxVerifier& verify_tx) {
    if (!validate_block(b, tip(), authorities_, verify_tx).valid()) {
        return Err{AppendError::ValidationRequired};
    }
    hashes_.push_back(hash_block(b));
    blocks_.push_back(std::move(b));
    return {};
}

const Block* Chain::find(const Digest& hash) const {
    for (std::size_t i = hashes_.size(); i-- > 0;) {
        if (hashes_[i] == hash) return &blocks_[i];
    }
    return nullptr;
}

bool Chain::verify_integrity() const {
    if (!verify_links(blocks_)) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (hash_block(blocks_[i]) != hashes_[i]) return false;
    }
    return true;
}

}  // namespace edgelinker::chain
