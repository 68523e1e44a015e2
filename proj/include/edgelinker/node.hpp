#pragma once

// Fog-layer miner: terminates the device channel, filters replays, keeps the
// mempool, drives consensus, serves reads from finalized state, raises
// monitoring alerts and proxies legacy devices.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <variant>
#include <vector>

#include "edgelinker/chain.hpp"
#include "edgelinker/channel.hpp"
#include "edgelinker/consensus.hpp"
#include "edgelinker/contract.hpp"
#include "edgelinker/genesis.hpp"

namespace edgelinker::node {

using chain::Block;
using chain::Transaction;
using consensus::TimeUs;
using crypto::KeyPair;

enum class ChannelMode : std::uint8_t { Secure, Plain };

std::string_view to_string(ChannelMode m);
std::optional<ChannelMode> parse_channel_mode(std::string_view s);

// Test-only misbehavior of an authority.
enum class Behavior : std::uint8_t {
    Honest,
    // Sends conflicting proposals to the two halves of the authority set and
    // votes PREPARE and COMMIT for every proposal it sees.
    Equivocate,
    // Proposes blocks whose tx_root does not match the body.
    InvalidProposals,
};

struct NodeConfig {
    std::size_t mempool_cap = 10'000;
    ChannelMode channel = ChannelMode::Secure;
    std::uint64_t clock_skew_ms = channel::kDefaultClockSkewMs;
    // Unix time of sim time zero.
    std::uint64_t epoch_ms = 0;
    Behavior behavior = Behavior::Honest;
};

enum class AlertKind : std::uint8_t { InvalidBlock, Equivocation, ReplayDetected };

std::string_view to_string(AlertKind k);

struct Alert {
    AlertKind kind = AlertKind::InvalidBlock;
    std::uint64_t height = 0;
    PublicKey offender;
    std::string detail;
    TimeUs sim_time = 0;
    // Distinguishes separate incidents at one height; the replayed channel
    // nonce for ReplayDetected, zero otherwise.
    std::uint64_t subject = 0;
};

enum class RejectReason : std::uint8_t {
    InvalidPublicKey,
    IdentityMismatch,
    DecryptFailed,
    SignatureInvalid,
    NonceReplayed,
    NonceGap,
    StaleTimestamp,
    MalformedBody,
    SenderMismatch,
    BadTxSignature,
    StaleTxNonce,
    DuplicateTx,
    InsufficientBalance,
    MempoolFull,
    PermissionDenied,
    UnknownContract,
    UnknownLegacyDevice,
};

std::string_view to_string(RejectReason r);

struct Accepted {
    enum class Kind : std::uint8_t { Admitted, Answered } kind = Kind::Admitted;
    Digest tx_hash;
    std::vector<vm::Reading> readings;  // Answered only
};

using Response = Result<Accepted, RejectReason>;

// Peer-to-peer traffic between fog nodes.
struct TxGossip {
    Transaction tx;
};
struct AlertNotice {
    Alert alert;
    PublicKey reporter;
};
struct BlockRequest {
    Digest hash;
};
struct BlockResponse {
    Block block;
};
// A finalized block plus the COMMIT quorum that finalized it, sent to peers
// still voting on an earlier height.
struct CatchUp {
    Block block;
    std::vector<consensus::ConsensusMessage> certificate;
};

using PeerMessage =
    std::variant<consensus::ConsensusMessage, TxGossip, AlertNotice, BlockRequest, BlockResponse, CatchUp>;

struct PeerEnvelope {
    std::optional<PublicKey> to;  // all peers when empty
    PeerMessage msg;
};

// Finalization of a transaction this node admitted directly from a client.
struct Confirmation {
    Digest tx_hash;
    std::uint64_t height = 0;
    std::optional<vm::Receipt> receipt;
    std::optional<vm::ExecError> skipped;
    TimeUs finalized_at = 0;
};

struct Outbox {
    std::vector<PeerEnvelope> peers;
    std::vector<Confirmation> confirmations;
    std::vector<Alert> alerts;
    std::vector<std::uint64_t> finalized_heights;

    void merge(Outbox&& other);
};

struct NodeCounters {
    std::map<RejectReason, std::uint64_t> rejections;
    std::uint64_t admitted = 0;
    std::uint64_t gossip_admitted = 0;
    std::uint64_t queries_served = 0;
    std::uint64_t blocks_finalized = 0;
    std::uint64_t catch_ups = 0;
};

class FogNode {
public:
    FogNode(KeyPair key, const GenesisConfig& genesis, NodeConfig cfg = {});
    FogNode(const FogNode&) = delete;
    FogNode& operator=(const FogNode&) = delete;

    // Starts consensus at height 1.
    Outbox start(TimeUs now);

    Response handle_envelope(const channel::SecureEnvelope& env, TimeUs now);
    // Plain-channel path: no encryption or message signature, same replay and
    // admission checks.
    Response handle_plain(const channel::ChannelMessage& m, TimeUs now);

    Result<std::vector<vm::Reading>, vm::ReadError> serve_query(const chain::Query& q,
                                                                const Address& caller) const;

    std::optional<Alert> monitor_block(const Block& b, const chain::ValidationReport& verdict,
                                       TimeUs now);

    // Registers a legacy sensor whose payloads are add_reading arguments for
    // `contract`; returns the proxy public key generated for it.
    PublicKey register_legacy_device(const std::string& legacy_id, const Address& contract);
    Response proxy_submit(ByteView legacy_payload, const std::string& legacy_id, TimeUs now);

    Outbox tick(TimeUs now);
    Outbox on_peer_message(const PublicKey& from, const PeerMessage& msg, TimeUs now);
    // Output produced by handle_envelope / proxy_submit (gossip, alerts).
    Outbox drain();
    // Next time tick() has work to do.
    TimeUs next_wakeup() const;

    // Seals a reply to a client with a per-peer deterministic AEAD nonce.
    Result<channel::SecureEnvelope, channel::ChannelError> seal_reply(const PublicKey& to, Bytes body,
                                                                      TimeUs now);

    const PublicKey& id() const noexcept { return key_.public_key; }
    const chain::Chain& chain() const noexcept { return chain_; }
    const vm::WorldState& world() const noexcept { return world_; }
    const std::vector<Transaction>& mempool() const noexcept { return mempool_; }
    const std::vector<Alert>& alerts() const noexcept { return alerts_; }
    const std::vector<AlertNotice>& peer_alerts() const noexcept { return peer_alerts_; }
    const channel::ReplayState& replay_state() const noexcept { return replay_; }
    const consensus::ConsensusEngine& engine() const noexcept { return engine_; }
    const NodeCounters& counters() const noexcept { return counters_; }
    const GenesisConfig& genesis() const noexcept { return genesis_; }
    const NodeConfig& config() const noexcept { return cfg_; }
    std::uint64_t now_ms(TimeUs now) const noexcept { return cfg_.epoch_ms + now / 1000; }
    bool included(const Digest& tx_hash) const { return included_.contains(tx_hash); }

private:
    struct LegacyDevice {
        KeyPair key;
        Address contract;
        std::uint64_t channel_nonce = 0;
        std::uint64_t tx_nonce = 0;
    };
    struct AlertKey {
        AlertKind kind;
        PublicKey offender;
        std::uint64_t height;
        std::uint64_t subject;
        auto operator<=>(const AlertKey&) const = default;
    };

    Response accept_message(const channel::ChannelMessage& m, TimeUs now);
    Response admit(const Transaction& tx, bool from_client);
    bool verify_cached(const Transaction& tx);
    Response reject(RejectReason r);
    std::optional<Alert> raise_alert(AlertKind kind, const PublicKey& offender, std::uint64_t height,
                                     std::string detail, TimeUs now, std::uint64_t subject = 0);

    void process(consensus::Step&& step, TimeUs now);
    void finalize(const Block& block, TimeUs now);
    Block fresh_block(TimeUs now);
    std::vector<Transaction> executable_batch() const;
    void propose(TimeUs now);
    void equivocating_votes(const consensus::ConsensusMessage& proposal);
    void send(const std::optional<PublicKey>& to, PeerMessage msg);
    crypto::AeadNonce next_aead_nonce();
    bool verify_certificate(const CatchUp& c) const;
    void remember_commit(const consensus::ConsensusMessage& m);
    void prune_mempool();
    std::uint64_t pending_spend(const Address& sender) const;

    KeyPair key_;
    GenesisConfig genesis_;
    NodeConfig cfg_;
    consensus::AuthorityConfig authority_;
    chain::Chain chain_;
    vm::WorldState world_;
    channel::ReplayState replay_;
    channel::SharedKeyCache keys_;
    consensus::ConsensusEngine engine_;

    std::vector<Transaction> mempool_;
    std::unordered_set<Digest, FixedBytesHash> pending_;
    std::unordered_set<Digest, FixedBytesHash> included_;
    std::unordered_set<Digest, FixedBytesHash> verified_;
    std::unordered_set<Digest, FixedBytesHash> client_origin_;

    std::vector<Alert> alerts_;
    std::set<AlertKey> alert_keys_;
    std::vector<AlertNotice> peer_alerts_;
    std::set<AlertKey> peer_alert_keys_;

    std::map<std::string, LegacyDevice> legacy_;
    std::map<PublicKey, std::uint64_t> reply_nonce_;
    std::uint64_t aead_counter_ = 0;

    // COMMIT messages per (height, round) and the certificates of finalized heights.
    std::map<std::pair<std::uint64_t, std::uint32_t>, std::vector<consensus::ConsensusMessage>> commits_;
    std::map<std::uint64_t, std::vector<consensus::ConsensusMessage>> certificates_;
    std::set<std::tuple<PublicKey, std::uint64_t, std::uint32_t>> catch_up_sent_;
    std::set<std::tuple<std::uint64_t, std::uint32_t, Digest>> byzantine_voted_;

    std::set<std::pair<std::uint64_t, std::uint32_t>> bad_proposals_sent_;

    TimeUs last_finalized_us_ = 0;
    NodeCounters counters_;
    Outbox outbox_;
};

}  // namespace edgelinker::node
