#include "edgelinker/consensus.hpp"

#include <algorithm>

#include "edgelinker/codec.hpp"

namespace edgelinker::consensus {

namespace {

constexpr std::size_t kMaxBufferedMessages = 20'000;

void encode_optional_round(Encoder& enc, const std::optional<std::uint32_t>& r) {
    if (r) {
        enc.tag(1).u64(*r);
    } else {
        enc.tag(0);
    }
}

}  // namespace

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::PrePrepare: return "PRE_PREPARE";
        case Phase::Prepare: return "PREPARE";
        case Phase::Commit: return "COMMIT";
        case Phase::RoundChange: return "ROUND_CHANGE";
    }
    return "?";
}

std::string_view to_string(MisbehaviorKind k) {
    switch (k) {
        case MisbehaviorKind::InvalidBlock: return "InvalidBlock";
        case MisbehaviorKind::Equivocation: return "Equivocation";
        case MisbehaviorKind::NonAuthority: return "NonAuthority";
        case MisbehaviorKind::BadSignature: return "BadSignature";
        case MisbehaviorKind::WrongProposer: return "WrongProposer";
    }
    return "?";
}

Bytes signing_bytes(const ConsensusMessage& m) {
    Encoder enc;
    enc.tag(static_cast<std::uint8_t>(m.phase)).u64(m.height).u64(m.round).fixed(m.block_hash);
    encode_optional_round(enc, m.prepared_round);
    enc.fixed(m.sender);
    return std::move(enc).take();
}

Bytes canonical_encode(const ConsensusMessage& m) {
    Encoder enc;
    enc.tag(static_cast<std::uint8_t>(m.phase)).u64(m.height).u64(m.round).fixed(m.block_hash);
    encode_optional_round(enc, m.prepared_round);
    enc.fixed(m.sender).fixed(m.signature);
    if (m.block) {
        enc.tag(1).bytes(chain::canonical_encode(*m.block));
    } else {
        enc.tag(0);
    }
    return std::move(enc).take();
}

ConsensusMessage decode_consensus_message(ByteView in) {
    Decoder dec(in);
    ConsensusMessage m;
    const auto phase = dec.tag();
    if (phase > static_cast<std::uint8_t>(Phase::RoundChange)) throw DecodeError("unknown phase");
    m.phase = static_cast<Phase>(phase);
    m.height = dec.u64();
    const auto round = dec.u64();
    if (round > UINT32_MAX) throw DecodeError("round overflow");
    m.round = static_cast<std::uint32_t>(round);
    m.block_hash = dec.fixed<Digest>();
    if (dec.tag() == 1) {
        const auto pr = dec.u64();
        if (pr > UINT32_MAX) throw DecodeError("prepared round overflow");
        m.prepared_round = static_cast<std::uint32_t>(pr);
    }
    m.sender = dec.fixed<PublicKey>();
    m.signature = dec.fixed<Signature>();
    if (dec.tag() == 1) {
        auto raw = dec.bytes();
        m.block = chain::decode_block(raw);
    }
    dec.expect_done();
    return m;
}

void sign_message(ConsensusMessage& m, const KeyPair& signer) {
    m.sender = signer.public_key;
    m.signature = crypto::sign_digest(crypto::sha256(signing_bytes(m)), signer);
}

bool verify_message(const ConsensusMessage& m) {
    return crypto::verify_digest(crypto::sha256(signing_bytes(m)), m.signature, m.sender);
}

bool AuthorityConfig::contains(const PublicKey& pk) const { return index_of(pk).has_value(); }

std::optional<std::size_t> AuthorityConfig::index_of(const PublicKey& pk) const {
    auto it = std::find(authorities.begin(), authorities.end(), pk);
    if (it == authorities.end()) return std::nullopt;
    return static_cast<std::size_t>(it - authorities.begin());
}

TimeUs AuthorityConfig::timeout_for_round(std::uint32_t round) const {
    const std::uint32_t shift = std::min<std::uint32_t>(round, 20);
    return round_timeout_us << shift;
}

const PublicKey& select_proposer(std::uint64_t height, std::uint32_t round,
                                 const AuthorityConfig& cfg) {
    return cfg.authorities.at((height + round) % cfg.n());
}

void Step::merge(Step&& other) {
    for (auto& o : other.outbound) outbound.push_back(std::move(o));
    for (auto& m : other.misbehavior) misbehavior.push_back(std::move(m));
    for (auto& h : other.missing_blocks) missing_blocks.push_back(h);
    if (other.finalized && !finalized) finalized = std::move(other.finalized);
}

ConsensusEngine::ConsensusEngine(AuthorityConfig cfg, KeyPair self, chain::TxVerifier verify_tx)
    : cfg_(std::move(cfg)), self_(std::move(self)), verify_tx_(std::move(verify_tx)) {
    if (cfg_.authorities.empty()) throw std::invalid_argument("authority set must not be empty");
}

Step ConsensusEngine::start_height(std::uint64_t height, const chain::Chain& chain, TimeUs now) {
    st_ = ConsensusState{};
    st_.height = height;
    st_.round_started_us = now;
    st_.round_deadline_us = now + cfg_.timeout_for_round(0);

    std::vector<ConsensusMessage> ready;
    std::vector<ConsensusMessage> later;
    for (auto& m : future_) {
        if (m.height == height) {
            ready.push_back(std::move(m));
        } else if (m.height > height) {
            later.push_back(std::move(m));
        }
    }
    future_ = std::move(later);

    Step step;
    // Votes first so that a replayed proposal sees the full tally.
    std::stable_partition(ready.begin(), ready.end(),
                          [](const ConsensusMessage& m) { return m.phase != Phase::PrePrepare; });
    for (const auto& m : ready) dispatch(m, chain, now, step);
    return step;
}

Step ConsensusEngine::on_message(const ConsensusMessage& msg, const chain::Chain& chain, TimeUs now) {
    Step step;
    if (!cfg_.contains(msg.sender)) {
        ++counters_.dropped;
        step.misbehavior.push_back(Misbehavior{MisbehaviorKind::NonAuthority, msg.sender, msg.height,
                                               msg.round, "message from non-authority", std::nullopt});
        if (msg.phase == Phase::PrePrepare && msg.block && msg.height == st_.height) {
            const auto report = chain::validate_block(*msg.block, chain.tip(), cfg_.authorities, verify_tx_);
            if (!report.valid()) {
                ++counters_.invalid;
                step.misbehavior.push_back(Misbehavior{MisbehaviorKind::InvalidBlock, msg.sender,
                                                       msg.height, msg.round, report.summary(),
                                                       chain::hash_block(*msg.block)});
            }
        }
        return step;
    }
    if (!verify_message(msg)) {
        ++counters_.dropped;
        step.misbehavior.push_back(Misbehavior{MisbehaviorKind::BadSignature, msg.sender, msg.height,
                                               msg.round, "bad consensus signature", std::nullopt});
        return step;
    }
    if (msg.height < st_.height) {
        ++counters_.dropped;
        return step;
    }
    if (msg.height > st_.height) {
        if (future_.size() < kMaxBufferedMessages) future_.push_back(msg);
        return step;
    }
    dispatch(msg, chain, now, step);
    return step;
}

void ConsensusEngine::dispatch(const ConsensusMessage& msg, const chain::Chain& chain, TimeUs now,
                               Step& step) {
    if (st_.phase == RoundPhase::Finalized) return;
    switch (msg.phase) {
        case Phase::PrePrepare: handle_pre_prepare(msg, chain, now, step); break;
        case Phase::Prepare:
        case Phase::Commit: handle_vote(msg, step); break;
        case Phase::RoundChange: handle_round_change(msg, chain, now, step); break;
    }
}

bool ConsensusEngine::learn_block(const Block& block, const chain::Chain& chain, const PublicKey& from,
                                  Step& step) {
    const auto hash = chain::hash_block(block);
    if (st_.known_blocks.contains(hash)) return true;
    const auto report = chain::validate_block(block, chain.tip(), cfg_.authorities, verify_tx_);
    if (!report.valid()) {
        ++counters_.invalid;
        step.misbehavior.push_back(Misbehavior{MisbehaviorKind::InvalidBlock, from, st_.height,
                                               st_.round, report.summary(), hash});
        return false;
    }
    st_.known_blocks.emplace(hash, block);
    return true;
}

void ConsensusEngine::handle_pre_prepare(const ConsensusMessage& msg, const chain::Chain& chain,
                                         TimeUs now, Step& step) {
    (void)now;
    if (!msg.block || chain::hash_block(*msg.block) != msg.block_hash) {
        ++counters_.invalid;
        step.misbehavior.push_back(Misbehavior{MisbehaviorKind::InvalidBlock, msg.sender, msg.height,
                                               msg.round, "proposal body does not match hash",
                                               msg.block_hash});
        return;
    }
    if (!learn_block(*msg.block, chain, msg.sender, step)) return;
    if (msg.sender != select_proposer(st_.height, msg.round, cfg_)) {
        ++counters_.dropped;
        step.misbehavior.push_back(Misbehavior{MisbehaviorKind::WrongProposer, msg.sender, msg.height,
                                               msg.round, "not the proposer for this round",
                                               msg.block_hash});
        evaluate(step);
        return;
    }
    if (msg.round > st_.round) {
        if (future_.size() < kMaxBufferedMessages) future_.push_back(msg);
        evaluate(step);
        return;
    }
    if (msg.round == st_.round) accept_proposal(msg, step);
    evaluate(step);
}

void ConsensusEngine::accept_proposal(const ConsensusMessage& msg, Step& step) {
    const auto r = msg.round;
    if (auto it = st_.accepted_proposal.find(r); it != st_.accepted_proposal.end()) {
        if (it->second != msg.block_hash) {
            ++counters_.invalid;
            step.misbehavior.push_back(Misbehavior{MisbehaviorKind::Equivocation, msg.sender,
                                                   msg.height, r, "conflicting proposals",
                                                   msg.block_hash});
        }
        return;
    }
    st_.accepted_proposal[r] = msg.block_hash;
    if (st_.prepared_rounds.contains(r)) return;

    const auto& lock = st_.locked;
    const bool justified = msg.prepared_round && lock && *msg.prepared_round >= lock->round &&
                           *msg.prepared_round < r &&
                           has_prepare_quorum(*msg.prepared_round, msg.block_hash);
    if (lock && lock->hash != msg.block_hash && !justified) return;

    st_.prepared_rounds.insert(r);
    if (st_.phase == RoundPhase::AwaitingProposal) st_.phase = RoundPhase::Prepared;
    broadcast(step, make(Phase::Prepare, r, msg.block_hash));
}

void ConsensusEngine::handle_vote(const ConsensusMessage& msg, Step& step) {
    auto& table = msg.phase == Phase::Prepare ? st_.prepare_votes : st_.commit_votes;
    auto& votes = table[msg.round];
    if (auto it = votes.find(msg.sender); it != votes.end()) {
        if (it->second != msg.block_hash) {
            ++counters_.invalid;
            step.misbehavior.push_back(Misbehavior{
                MisbehaviorKind::Equivocation, msg.sender, msg.height, msg.round,
                std::string("conflicting ") + std::string(to_string(msg.phase)) + " votes",
                msg.block_hash});
        } else {
            ++counters_.dropped;
        }
        return;
    }
    votes.emplace(msg.sender, msg.block_hash);
    evaluate(step);
}

void ConsensusEngine::handle_round_change(const ConsensusMessage& msg, const chain::Chain& chain,
                                          TimeUs now, Step& step) {
    auto& rcs = st_.round_changes[msg.round];
    if (rcs.contains(msg.sender)) {
        ++counters_.dropped;
        return;
    }
    rcs.emplace(msg.sender, RoundChangeVote{msg.block_hash, msg.prepared_round});
    if (msg.block && msg.prepared_round && chain::hash_block(*msg.block) == msg.block_hash) {
        learn_block(*msg.block, chain, msg.sender, step);
    }
    if (msg.round > st_.round && rcs.size() >= cfg_.f() + 1) {
        enter_round(msg.round, chain, now, step);
    }
    evaluate(step);
}

Step ConsensusEngine::on_block(const Block& block, const chain::Chain& chain, TimeUs now) {
    (void)now;
    Step step;
    if (st_.phase == RoundPhase::Finalized || block.header.height != st_.height) return step;
    if (learn_block(block, chain, block.header.proposer, step)) evaluate(step);
    return step;
}

Step ConsensusEngine::on_timeout(const chain::Chain& chain, TimeUs now) {
    Step step;
    if (st_.phase == RoundPhase::Finalized || now < st_.round_deadline_us) return step;
    enter_round(st_.round + 1, chain, now, step);
    evaluate(step);
    return step;
}

void ConsensusEngine::enter_round(std::uint32_t round, const chain::Chain& chain, TimeUs now,
                                  Step& step) {
    if (round <= st_.round) return;
    st_.round = round;
    st_.phase = RoundPhase::AwaitingProposal;
    st_.round_started_us = now;
    st_.round_deadline_us = now + cfg_.timeout_for_round(round);
    ++counters_.round_changes;
    send_round_change(step);

    std::vector<ConsensusMessage> replay;
    std::vector<ConsensusMessage> keep;
    for (auto& m : future_) {
        if (m.height == st_.height && m.phase == Phase::PrePrepare && m.round <= round) {
            if (m.round == round) replay.push_back(std::move(m));
        } else {
            keep.push_back(std::move(m));
        }
    }
    future_ = std::move(keep);
    for (const auto& m : replay) {
        accept_proposal(m, step);
    }
    (void)chain;
}

void ConsensusEngine::send_round_change(Step& step) {
    if (st_.round_change_sent.contains(st_.round)) return;
    st_.round_change_sent.insert(st_.round);
    auto msg = make(Phase::RoundChange, st_.round, st_.locked ? st_.locked->hash : Digest{});
    if (st_.locked) {
        msg.prepared_round = st_.locked->round;
        msg.block = st_.locked->block;
    }
    broadcast(step, std::move(msg));
}

std::optional<Digest> ConsensusEngine::quorum_hash(const std::map<PublicKey, Digest>& votes) const {
    if (votes.size() < cfg_.quorum()) return std::nullopt;
    std::map<Digest, std::size_t> tally;
    for (const auto& [_, h] : votes) {
        if (++tally[h] >= cfg_.quorum()) return h;
    }
    return std::nullopt;
}

bool ConsensusEngine::has_prepare_quorum(std::uint32_t round, const Digest& hash) const {
    auto it = st_.prepare_votes.find(round);
    if (it == st_.prepare_votes.end()) return false;
    const auto n = std::count_if(it->second.begin(), it->second.end(),
                                 [&](const auto& kv) { return kv.second == hash; });
    return static_cast<std::size_t>(n) >= cfg_.quorum();
}

void ConsensusEngine::evaluate(Step& step) {
    if (st_.phase == RoundPhase::Finalized) return;

    auto request = [&](const Digest& h) {
        if (st_.requested_blocks.insert(h).second) step.missing_blocks.push_back(h);
    };

    for (const auto& [round, votes] : st_.commit_votes) {
        auto h = quorum_hash(votes);
        if (!h) continue;
        if (auto it = st_.known_blocks.find(*h); it != st_.known_blocks.end()) {
            step.finalized = it->second;
            st_.phase = RoundPhase::Finalized;
            return;
        }
        request(*h);
    }

    for (const auto& [round, votes] : st_.prepare_votes) {
        auto h = quorum_hash(votes);
        if (!h) continue;
        auto it = st_.known_blocks.find(*h);
        if (it == st_.known_blocks.end()) {
            request(*h);
            continue;
        }
        if (!st_.locked || round > st_.locked->round) {
            st_.locked = LockedBlock{it->second, *h, round};
        }
    }

    if (!st_.committed_rounds.contains(st_.round)) {
        auto it = st_.prepare_votes.find(st_.round);
        if (it != st_.prepare_votes.end()) {
            auto h = quorum_hash(it->second);
            if (h && st_.known_blocks.contains(*h)) {
                st_.committed_rounds.insert(st_.round);
                st_.phase = RoundPhase::Committed;
                broadcast(step, make(Phase::Commit, st_.round, *h));
                evaluate(step);
            }
        }
    }
}

bool ConsensusEngine::is_proposer() const {
    return select_proposer(st_.height, st_.round, cfg_) == self_.public_key;
}

bool ConsensusEngine::proposal_due() const {
    if (st_.phase == RoundPhase::Finalized || !is_proposer()) return false;
    if (st_.proposed_rounds.contains(st_.round)) return false;
    if (st_.round == 0) return true;
    auto it = st_.round_changes.find(st_.round);
    return it != st_.round_changes.end() && it->second.size() >= cfg_.quorum();
}

Step ConsensusEngine::propose(const chain::Chain& chain, TimeUs now, const BlockFactory& fresh) {
    Step step;
    if (!proposal_due()) return step;
    st_.proposed_rounds.insert(st_.round);

    std::optional<std::pair<Digest, std::uint32_t>> best;
    if (st_.locked) best = {st_.locked->hash, st_.locked->round};
    if (auto it = st_.round_changes.find(st_.round); it != st_.round_changes.end()) {
        for (const auto& [_, vote] : it->second) {
            if (!vote.locked_round || !st_.known_blocks.contains(vote.locked_hash)) continue;
            if (!best || *vote.locked_round > best->second) best = {vote.locked_hash, *vote.locked_round};
        }
    }

    ConsensusMessage msg = make(Phase::PrePrepare, st_.round, Digest{});
    if (best) {
        msg.block = st_.known_blocks.at(best->first);
        msg.block_hash = best->first;
        msg.prepared_round = best->second;
    } else {
        Block b = fresh();
        if (!learn_block(b, chain, self_.public_key, step)) return step;
        msg.block_hash = chain::hash_block(b);
        msg.block = std::move(b);
    }
    (void)now;
    sign_message(msg, self_);
    step.outbound.push_back(Outgoing{msg, std::nullopt});
    accept_proposal(msg, step);
    evaluate(step);
    return step;
}

const Block* ConsensusEngine::known_block(const Digest& hash) const {
    auto it = st_.known_blocks.find(hash);
    return it == st_.known_blocks.end() ? nullptr : &it->second;
}

ConsensusMessage ConsensusEngine::make(Phase phase, std::uint32_t round, const Digest& hash) const {
    ConsensusMessage m;
    m.phase = phase;
    m.height = st_.height;
    m.round = round;
    m.block_hash = hash;
    m.sender = self_.public_key;
    return m;
}

void ConsensusEngine::broadcast(Step& step, ConsensusMessage msg) {
    sign_message(msg, self_);
    switch (msg.phase) {
        case Phase::Prepare: st_.prepare_votes[msg.round].emplace(msg.sender, msg.block_hash); break;
        case Phase::Commit: st_.commit_votes[msg.round].emplace(msg.sender, msg.block_hash); break;
        case Phase::RoundChange:
            st_.round_changes[msg.round].emplace(msg.sender,
                                                 RoundChangeVote{msg.block_hash, msg.prepared_round});
            break;
        case Phase::PrePrepare: break;
    }
    step.outbound.push_back(Outgoing{std::move(msg), std::nullopt});
}

}  // namespace edgelinker::consensus
