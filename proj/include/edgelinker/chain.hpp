#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edgelinker/bytes.hpp"
#include "edgelinker/codec.hpp"
#include "edgelinker/crypto.hpp"
#include "edgelinker/result.hpp"

namespace edgelinker::chain {

using crypto::KeyPair;

enum class ContractKind : std::uint8_t { HealthRecord = 1 };

struct Transfer {
    Address to;
    std::uint64_t amount = 0;
    bool operator==(const Transfer&) const = default;
};

struct Deploy {
    ContractKind kind = ContractKind::HealthRecord;
    Bytes init_args;
    bool operator==(const Deploy&) const = default;
};

struct Call {
    Address contract;
    std::string method;
    Bytes args;
    bool operator==(const Call&) const = default;
};

// Read request; travels over the channel but is never placed in a block.
struct Query {
    Address contract;
    std::uint64_t from_ts = 0;
    std::uint64_t to_ts = 0;
    bool operator==(const Query&) const = default;
};

using Payload = std::variant<Transfer, Deploy, Call, Query>;

struct Transaction {
    PublicKey sender;
    std::uint64_t nonce = 0;
    std::uint64_t timestamp_ms = 0;
    Payload payload;
    std::uint64_t gas_limit = 0;
    Signature signature;

    bool is_query() const noexcept { return std::holds_alternative<Query>(payload); }
    bool operator==(const Transaction&) const = default;
};

void encode_into(Encoder& enc, const Transaction& tx);
Bytes canonical_encode(const Transaction& tx);
Bytes encode_unsigned(const Transaction& tx);
// Throws DecodeError.
Transaction decode_transaction(ByteView in);

Digest hash_tx(const Transaction& tx);
void sign_transaction(Transaction& tx, const KeyPair& signer);
bool verify_transaction(const Transaction& tx);

struct BlockHeader {
    std::uint64_t height = 0;
    std::uint64_t timestamp_ms = 0;
    Digest prev_hash;
    Digest tx_root;
    PublicKey proposer;
    Signature proposer_signature;

    bool operator==(const BlockHeader&) const = default;
};

struct Block {
    BlockHeader header;
    std::vector<Transaction> transactions;

    bool operator==(const Block&) const = default;
};

Bytes canonical_encode(const BlockHeader& h);
Bytes encode_unsigned(const BlockHeader& h);
Bytes canonical_encode(const Block& b);
Block decode_block(ByteView in);

// Hash of the header, which commits to the body through tx_root.
Digest hash_block(const Block& b);
// Flat hash over the ordered transaction hashes.
Digest compute_tx_root(std::span<const Transaction> txs);

inline constexpr std::size_t kDefaultMaxTxs = 500;

enum class BuildError { NotAuthority };

// Takes up to max_txs non-query transactions ordered by (sender, nonce) with
// arrival order breaking ties, and signs the header. Timestamp is clamped to
// parent + 1 ms when `now_ms` does not advance past the parent.
Result<Block, BuildError> build_block(std::span<const Transaction> pending, const Block& parent,
                                      const KeyPair& proposer, std::uint64_t now_ms,
                                      std::size_t max_txs, std::span<const PublicKey> authorities);

enum class Violation : std::uint8_t {
    BadParentLink,
    BadHeight,
    BadTimestamp,
    NotAuthority,
    BadProposerSignature,
    BadTxRoot,
    BadTxSignature,
};

std::string_view to_string(Violation v);

struct ValidationReport {
    std::vector<Violation> violations;

    bool valid() const noexcept { return violations.empty(); }
    bool has(Violation v) const;
    std::string summary() const;
};

// Signature check for a single transaction; nodes plug in a cache of
// already-verified hashes here.
using TxVerifier = std::function<bool(const Transaction&)>;

// Runs every check and reports all violations, in the order above.
ValidationReport validate_block(const Block& b, const Block& parent,
                                std::span<const PublicKey> authorities);
ValidationReport validate_block(const Block& b, const Block& parent,
                                std::span<const PublicKey> authorities,
                                const TxVerifier& verify_tx);

// True when every block links to the hash of its predecessor and every
// tx_root matches its body.
bool verify_links(std::span<const Block> blocks);
// Same, anchored at a known tip hash so edits to the newest block are caught.
bool verify_links(std::span<const Block> blocks, const Digest& expected_tip);

enum class AppendError { ValidationRequired };

class Chain {
public:
    Chain(Block genesis, std::vector<PublicKey> authorities);

    Status<AppendError> append_block(Block b);
    Status<AppendError> append_block(Block b, const TxVerifier& verify_tx);

    const Block& tip() const noexcept { return blocks_.back(); }
    const Digest& tip_hash() const noexcept { return hashes_.back(); }
    std::uint64_t height() const noexcept { return tip().header.height; }
    std::size_t size() const noexcept { return blocks_.size(); }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const Block& at(std::size_t height) const { return blocks_.at(height); }
    const Digest& hash_at(std::size_t height) const { return hashes_.at(height); }
    const std::vector<PublicKey>& authority_set() const noexcept { return authorities_; }
    const Block* find(const Digest& hash) const;

    // Recomputes every link; false if any stored block was altered.
    bool verify_integrity() const;

private:
    std::vector<Block> blocks_;
    std::vector<Digest> hashes_;
    std::vector<PublicKey> authorities_;
};

}  // namespace edgelinker::chain
