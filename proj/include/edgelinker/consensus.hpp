#pragma once

// IBFT-style finality over a fixed authority set.
//
// Per height: the round proposer broadcasts PRE_PREPARE; authorities answer
// with PREPARE; a quorum of PREPAREs on one hash locks the block and
// triggers COMMIT; a quorum of COMMITs finalizes it. Round timeouts (base
// 2 x block interval, doubling per round) broadcast ROUND_CHANGE carrying the
// sender's lock; the next proposer re-proposes the highest locked block it
// learns of. A locked node only prepares its locked block, unless the
// proposal names a higher prepared round for which the node has itself seen
// a PREPARE quorum.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edgelinker/bytes.hpp"
#include "edgelinker/chain.hpp"
#include "edgelinker/crypto.hpp"

namespace edgelinker::consensus {

using chain::Block;
using crypto::KeyPair;

using TimeUs = std::uint64_t;

enum class Phase : std::uint8_t { PrePrepare = 0, Prepare = 1, Commit = 2, RoundChange = 3 };

std::string_view to_string(Phase p);

struct ConsensusMessage {
    Phase phase = Phase::Prepare;
    std::uint64_t height = 0;
    std::uint32_t round = 0;
    // Proposed/voted hash; for ROUND_CHANGE the sender's locked hash or zero.
    Digest block_hash;
    // PRE_PREPARE: round in which a re-proposed block gathered a PREPARE quorum.
    // ROUND_CHANGE: round of the sender's lock.
    std::optional<std::uint32_t> prepared_round;
    // PRE_PREPARE always; ROUND_CHANGE when the sender is locked. Bound to
    // the signature through block_hash.
    std::optional<Block> block;
    PublicKey sender;
    Signature signature;

    bool operator==(const ConsensusMessage&) const = default;
};

Bytes signing_bytes(const ConsensusMessage& m);
Bytes canonical_encode(const ConsensusMessage& m);
ConsensusMessage decode_consensus_message(ByteView in);
void sign_message(ConsensusMessage& m, const KeyPair& signer);
bool verify_message(const ConsensusMessage& m);

struct AuthorityConfig {
    std::vector<PublicKey> authorities;
    TimeUs round_timeout_us = 2'000'000;

    std::size_t n() const noexcept { return authorities.size(); }
    std::size_t f() const noexcept { return authorities.empty() ? 0 : (authorities.size() - 1) / 3; }
    // 2f+1 when n = 3f+1. Other sizes need ceil((n+f+1)/2) so that any two
    // quorums still share f+1 authorities.
    std::size_t quorum() const noexcept { return (n() + f() + 2) / 2; }
    bool contains(const PublicKey& pk) const;
    std::optional<std::size_t> index_of(const PublicKey& pk) const;
    // base * 2^round, saturating.
    TimeUs timeout_for_round(std::uint32_t round) const;
};

// authorities[(height + round) mod n]
const PublicKey& select_proposer(std::uint64_t height, std::uint32_t round, const AuthorityConfig& cfg);

enum class MisbehaviorKind : std::uint8_t {
    InvalidBlock,
    Equivocation,
    NonAuthority,
    BadSignature,
    WrongProposer,
};

std::string_view to_string(MisbehaviorKind k);

struct Misbehavior {
    MisbehaviorKind kind;
    PublicKey offender;
    std::uint64_t height = 0;
    std::uint32_t round = 0;
    std::string detail;
    std::optional<Digest> block_hash;
};

struct Outgoing {
    ConsensusMessage msg;
    std::optional<PublicKey> to;  // broadcast when empty
};

struct Step {
    std::vector<Outgoing> outbound;
    std::optional<Block> finalized;
    std::vector<Misbehavior> misbehavior;
    std::vector<Digest> missing_blocks;

    void merge(Step&& other);
};

enum class RoundPhase : std::uint8_t { AwaitingProposal, Prepared, Committed, Finalized };

struct LockedBlock {
    Block block;
    Digest hash;
    std::uint32_t round = 0;
};

struct RoundChangeVote {
    Digest locked_hash;
    std::optional<std::uint32_t> locked_round;
};

struct ConsensusState {
    std::uint64_t height = 1;
    std::uint32_t round = 0;
    RoundPhase phase = RoundPhase::AwaitingProposal;
    std::optional<LockedBlock> locked;
    std::map<std::uint32_t, std::map<PublicKey, Digest>> prepare_votes;
    std::map<std::uint32_t, std::map<PublicKey, Digest>> commit_votes;
    std::map<std::uint32_t, std::map<PublicKey, RoundChangeVote>> round_changes;
    std::map<std::uint32_t, Digest> accepted_proposal;
    std::set<std::uint32_t> prepared_rounds;
    std::set<std::uint32_t> committed_rounds;
    std::set<std::uint32_t> proposed_rounds;
    std::set<std::uint32_t> round_change_sent;
    std::map<Digest, Block> known_blocks;
    std::set<Digest> requested_blocks;
    TimeUs round_started_us = 0;
    TimeUs round_deadline_us = 0;
};

struct EngineCounters {
    std::uint64_t dropped = 0;
    std::uint64_t invalid = 0;
    std::uint64_t round_changes = 0;
};

class ConsensusEngine {
public:
    using BlockFactory = std::function<Block()>;

    ConsensusEngine(AuthorityConfig cfg, KeyPair self,
                    chain::TxVerifier verify_tx = chain::verify_transaction);

    // Resets per-height state and replays messages buffered for `height`.
    Step start_height(std::uint64_t height, const chain::Chain& chain, TimeUs now);

    // Signature and membership are checked here; bad input is dropped and
    // reported as misbehavior.
    Step on_message(const ConsensusMessage& msg, const chain::Chain& chain, TimeUs now);

    // A block fetched from a peer after a quorum formed on its hash.
    Step on_block(const Block& block, const chain::Chain& chain, TimeUs now);

    // No-op before the deadline.
    Step on_timeout(const chain::Chain& chain, TimeUs now);

    bool is_proposer() const;
    // Proposer for the current round that has not proposed yet, and (for
    // rounds > 0) holds a ROUND_CHANGE quorum.
    bool proposal_due() const;
    // Re-proposes the best locked block known, or asks `fresh` for a new one.
    Step propose(const chain::Chain& chain, TimeUs now, const BlockFactory& fresh);

    const Block* known_block(const Digest& hash) const;
    const ConsensusState& state() const noexcept { return st_; }
    const AuthorityConfig& config() const noexcept { return cfg_; }
    const EngineCounters& counters() const noexcept { return counters_; }
    TimeUs deadline_us() const noexcept { return st_.round_deadline_us; }
    const PublicKey& self_key() const noexcept { return self_.public_key; }

private:
    ConsensusMessage make(Phase phase, std::uint32_t round, const Digest& hash) const;
    void broadcast(Step& step, ConsensusMessage msg);

    void handle_pre_prepare(const ConsensusMessage& msg, const chain::Chain& chain, TimeUs now, Step& step);
    void handle_vote(const ConsensusMessage& msg, Step& step);
    void handle_round_change(const ConsensusMessage& msg, const chain::Chain& chain, TimeUs now,
                             Step& step);
    void accept_proposal(const ConsensusMessage& msg, Step& step);
    bool learn_block(const Block& block, const chain::Chain& chain, const PublicKey& from,
                     Step& step);
    void enter_round(std::uint32_t round, const chain::Chain& chain, TimeUs now, Step& step);
    void send_round_change(Step& step);
    void evaluate(Step& step);
    std::optional<Digest> quorum_hash(const std::map<PublicKey, Digest>& votes) const;
    bool has_prepare_quorum(std::uint32_t round, const Digest& hash) const;
    void dispatch(const ConsensusMessage& msg, const chain::Chain& chain, TimeUs now, Step& step);

    AuthorityConfig cfg_;
    KeyPair self_;
    chain::TxVerifier verify_tx_;
    ConsensusState st_;
    EngineCounters counters_;
    std::vector<ConsensusMessage> future_;
};

}  // namespace edgelinker::consensus
