#include "edgelinker/node.hpp"

#include <algorithm>
#include <stdexcept>

#include "edgelinker/codec.hpp"

namespace edgelinker::node {

using consensus::ConsensusMessage;
using consensus::Phase;

std::string_view to_string(ChannelMode m) {
    return m == ChannelMode::Secure ? "secure" : "plain";
}

std::optional<ChannelMode> parse_channel_mode(std::string_view s) {
    if (s == "secure") return ChannelMode::Secure;
    if (s == "plain") return ChannelMode::Plain;
    return std::nullopt;
}

std::string_view to_string(AlertKind k) {
    switch (k) {
        case AlertKind::InvalidBlock: return "InvalidBlock";
        case AlertKind::Equivocation: return "Equivocation";
        case AlertKind::ReplayDetected: return "ReplayDetected";
    }
    return "?";
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::InvalidPublicKey: return "InvalidPublicKey";
        case RejectReason::IdentityMismatch: return "IdentityMismatch";
        case RejectReason::DecryptFailed: return "DecryptFailed";
        case RejectReason::SignatureInvalid: return "SignatureInvalid";
        case RejectReason::NonceReplayed: return "NonceReplayed";
        case RejectReason::NonceGap: return "NonceGap";
        case RejectReason::StaleTimestamp: return "StaleTimestamp";
        case RejectReason::MalformedBody: return "MalformedBody";
        case RejectReason::SenderMismatch: return "SenderMismatch";
        case RejectReason::BadTxSignature: return "BadTxSignature";
        case RejectReason::StaleTxNonce: return "StaleTxNonce";
        case RejectReason::DuplicateTx: return "DuplicateTx";
        case RejectReason::InsufficientBalance: return "InsufficientBalance";
        case RejectReason::MempoolFull: return "MempoolFull";
        case RejectReason::PermissionDenied: return "PermissionDenied";
        case RejectReason::UnknownContract: return "UnknownContract";
        case RejectReason::UnknownLegacyDevice: return "UnknownLegacyDevice";
    }
    return "?";
}

void Outbox::merge(Outbox&& other) {
    for (auto& p : other.peers) peers.push_back(std::move(p));
    for (auto& c : other.confirmations) confirmations.push_back(std::move(c));
    for (auto& a : other.alerts) alerts.push_back(std::move(a));
    for (auto h : other.finalized_heights) finalized_heights.push_back(h);
}

namespace {

RejectReason from_channel(channel::ChannelError e) {
    switch (e) {
        case channel::ChannelError::InvalidPublicKey: return RejectReason::InvalidPublicKey;
        case channel::ChannelError::IdentityMismatch: return RejectReason::IdentityMismatch;
        case channel::ChannelError::DecryptFailed: return RejectReason::DecryptFailed;
        case channel::ChannelError::SignatureInvalid: return RejectReason::SignatureInvalid;
    }
    return RejectReason::DecryptFailed;
}

RejectReason from_replay(channel::ReplayReject r) {
    switch (r) {
        case channel::ReplayReject::NonceReplayed: return RejectReason::NonceReplayed;
        case channel::ReplayReject::NonceGap: return RejectReason::NonceGap;
        case channel::ReplayReject::StaleTimestamp: return RejectReason::StaleTimestamp;
    }
    return RejectReason::NonceReplayed;
}

// Gas plus transferred value a transaction can take from its sender.
std::uint64_t max_spend(const Transaction& tx, const vm::GasSchedule& gas) {
    const auto cost = vm::operation_cost(tx, gas);
    std::uint64_t spend = std::min(cost, tx.gas_limit);
    if (const auto* t = std::get_if<chain::Transfer>(&tx.payload); t && tx.gas_limit >= cost) {
        spend += t->amount;
    }
    return spend;
}

std::uint64_t next_nonce_of(const vm::WorldState& ws, const Address& a) {
    const auto* acct = ws.account(a);
    return acct ? acct->next_nonce : 0;
}

}  // namespace

FogNode::FogNode(KeyPair key, const GenesisConfig& genesis, NodeConfig cfg)
    : key_(key),
      genesis_(genesis),
      cfg_(cfg),
      authority_{genesis.authorities, 2 * genesis.block_interval_ms * 1000},
      chain_(make_genesis_block(genesis), genesis.authorities),
      world_(genesis_world_state(genesis)),
      replay_(cfg.clock_skew_ms),
      keys_(key),
      engine_(authority_, key, [this](const Transaction& tx) { return verify_cached(tx); }) {}

Outbox FogNode::start(TimeUs now) {
    last_finalized_us_ = now;
    process(engine_.start_height(chain_.height() + 1, chain_, now), now);
    return drain();
}

Outbox FogNode::drain() { return std::exchange(outbox_, Outbox{}); }

Response FogNode::reject(RejectReason r) {
    ++counters_.rejections[r];
    return Err{r};
}

Response FogNode::handle_envelope(const channel::SecureEnvelope& env, TimeUs now) {
    auto key = keys_.key_for(env.sender_hint);
    if (!key) return reject(from_channel(key.error()));
    auto opened = channel::open_message(env, *key, env.sender_hint);
    if (!opened) return reject(from_channel(opened.error()));
    return accept_message(*opened, now);
}

Response FogNode::handle_plain(const channel::ChannelMessage& m, TimeUs now) {
    return accept_message(m, now);
}

Response FogNode::accept_message(const channel::ChannelMessage& m, TimeUs now) {
    auto fresh = replay_.check_and_record(m, now_ms(now));
    if (!fresh) {
        if (fresh.error() == channel::ReplayReject::NonceReplayed) {
            raise_alert(AlertKind::ReplayDetected, m.identification, chain_.height(),
                        "channel nonce " + std::to_string(m.nonce) + " replayed", now, m.nonce);
        }
        return reject(from_replay(fresh.error()));
    }

    Transaction tx;
    try {
        tx = chain::decode_transaction(m.body);
    } catch (const DecodeError&) {
        return reject(RejectReason::MalformedBody);
    }
    if (tx.sender != m.identification) return reject(RejectReason::SenderMismatch);

    if (const auto* q = std::get_if<chain::Query>(&tx.payload)) {
        auto readings = serve_query(*q, tx.sender);
        ++counters_.queries_served;
        if (!readings) {
            return reject(readings.error() == vm::ReadError::PermissionDenied
                              ? RejectReason::PermissionDenied
                              : RejectReason::UnknownContract);
        }
        return Accepted{Accepted::Kind::Answered, chain::hash_tx(tx), std::move(readings).value()};
    }
    return admit(tx, true);
}

bool FogNode::verify_cached(const Transaction& tx) {
    const auto h = chain::hash_tx(tx);
    if (verified_.contains(h)) return true;
    if (!chain::verify_transaction(tx)) return false;
    verified_.insert(h);
    return true;
}

std::uint64_t FogNode::pending_spend(const Address& sender) const {
    std::uint64_t total = 0;
    for (const auto& tx : mempool_) {
        if (tx.sender == sender) total += max_spend(tx, genesis_.gas_schedule);
    }
    return total;
}

Response FogNode::admit(const Transaction& tx, bool from_client) {
    if (tx.is_query()) return reject(RejectReason::MalformedBody);
    const auto h = chain::hash_tx(tx);
    if (included_.contains(h) || pending_.contains(h)) return reject(RejectReason::DuplicateTx);
    if (!verify_cached(tx)) return reject(RejectReason::BadTxSignature);
    if (tx.nonce < next_nonce_of(world_, tx.sender)) return reject(RejectReason::StaleTxNonce);

    const auto* acct = world_.account(tx.sender);
    const std::uint64_t balance = acct ? acct->balance : 0;
    if (balance < pending_spend(tx.sender) + max_spend(tx, genesis_.gas_schedule)) {
        return reject(RejectReason::InsufficientBalance);
    }
    if (mempool_.size() >= cfg_.mempool_cap) return reject(RejectReason::MempoolFull);

    mempool_.push_back(tx);
    pending_.insert(h);
    if (from_client) {
        ++counters_.admitted;
        client_origin_.insert(h);
        send(std::nullopt, TxGossip{tx});
    } else {
        ++counters_.gossip_admitted;
    }
    return Accepted{Accepted::Kind::Admitted, h, {}};
}

Result<std::vector<vm::Reading>, vm::ReadError> FogNode::serve_query(const chain::Query& q,
                                                                     const Address& caller) const {
    return vm::read_history(world_, q.contract, caller, q.from_ts, q.to_ts);
}

std::optional<Alert> FogNode::monitor_block(const Block& b, const chain::ValidationReport& verdict,
                                            TimeUs now) {
    if (verdict.valid()) return std::nullopt;
    return raise_alert(AlertKind::InvalidBlock, b.header.proposer, b.header.height, verdict.summary(),
                       now);
}

std::optional<Alert> FogNode::raise_alert(AlertKind kind, const PublicKey& offender,
                                          std::uint64_t height, std::string detail, TimeUs now,
                                          std::uint64_t subject) {
    if (!alert_keys_.insert(AlertKey{kind, offender, height, subject}).second) return std::nullopt;
    Alert a{kind, height, offender, std::move(detail), now, subject};
    alerts_.push_back(a);
    outbox_.alerts.push_back(a);
    send(std::nullopt, AlertNotice{a, key_.public_key});
    return a;
}

PublicKey FogNode::register_legacy_device(const std::string& legacy_id, const Address& contract) {
    Bytes seed_input(key_.private_key.begin(), key_.private_key.end());
    const std::string label = "legacy-device:" + legacy_id;
    seed_input.insert(seed_input.end(), label.begin(), label.end());
    const auto seed = crypto::sha256(seed_input);
    LegacyDevice dev{crypto::generate_keypair(seed.view()), contract, 0, 0};
    const auto pk = dev.key.public_key;
    legacy_.insert_or_assign(legacy_id, std::move(dev));
    return pk;
}

Response FogNode::proxy_submit(ByteView legacy_payload, const std::string& legacy_id, TimeUs now) {
    auto it = legacy_.find(legacy_id);
    if (it == legacy_.end()) return reject(RejectReason::UnknownLegacyDevice);
    auto& dev = it->second;

    Transaction tx;
    tx.nonce = std::max(dev.tx_nonce, next_nonce_of(world_, dev.key.public_key));
    tx.timestamp_ms = now_ms(now);
    tx.payload = chain::Call{dev.contract, std::string(vm::kMethodAddReading),
                             Bytes(legacy_payload.begin(), legacy_payload.end())};
    tx.gas_limit = genesis_.gas_schedule.add_data;
    chain::sign_transaction(tx, dev.key);

    channel::ChannelMessage m{now_ms(now), dev.channel_nonce + 1, dev.key.public_key,
                              chain::canonical_encode(tx)};
    auto env = channel::seal_message(m, dev.key, key_.public_key, next_aead_nonce());
    if (!env) return reject(from_channel(env.error()));
    dev.channel_nonce += 1;
    auto r = handle_envelope(*env, now);
    if (r) dev.tx_nonce = tx.nonce + 1;
    return r;
}

crypto::AeadNonce FogNode::next_aead_nonce() {
    crypto::AeadNonce n{};
    std::copy_n(key_.public_key.begin(), 4, n.begin());
    const std::uint64_t c = ++aead_counter_;
    for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(c >> (56 - 8 * i));
    return n;
}

Result<channel::SecureEnvelope, channel::ChannelError> FogNode::seal_reply(const PublicKey& to,
                                                                           Bytes body, TimeUs now) {
    auto key = keys_.key_for(to);
    if (!key) return Err{key.error()};
    channel::ChannelMessage m{now_ms(now), ++reply_nonce_[to], key_.public_key, std::move(body)};
    return channel::seal_message(m, key_, *key, next_aead_nonce());
}

void FogNode::send(const std::optional<PublicKey>& to, PeerMessage msg) {
    outbox_.peers.push_back(PeerEnvelope{to, std::move(msg)});
}

std::vector<Transaction> FogNode::executable_batch() const {
    struct Cursor {
        std::uint64_t next_nonce;
        std::uint64_t balance;
    };
    std::vector<const Transaction*> order;
    order.reserve(mempool_.size());
    for (const auto& tx : mempool_) order.push_back(&tx);
    std::stable_sort(order.begin(), order.end(), [](const Transaction* a, const Transaction* b) {
        if (a->sender != b->sender) return a->sender < b->sender;
        return a->nonce < b->nonce;
    });

    std::map<Address, Cursor> cursors;
    std::vector<Transaction> out;
    for (const auto* tx : order) {
        auto it = cursors.find(tx->sender);
        if (it == cursors.end()) {
            const auto* acct = world_.account(tx->sender);
            it = cursors.emplace(tx->sender, Cursor{acct ? acct->next_nonce : 0, acct ? acct->balance : 0})
                     .first;
        }
        auto& c = it->second;
        if (tx->nonce != c.next_nonce) continue;
        const auto spend = max_spend(*tx, genesis_.gas_schedule);
        if (c.balance < spend) continue;
        c.balance -= spend;
        c.next_nonce += 1;
        out.push_back(*tx);
    }
    return out;
}

Block FogNode::fresh_block(TimeUs now) {
    const auto batch = executable_batch();
    auto b = chain::build_block(batch, chain_.tip(), key_, now_ms(now), genesis_.max_txs,
                                genesis_.authorities);
    if (!b) throw std::logic_error("fog node is not an authority");
    return std::move(b).value();
}

TimeUs FogNode::next_wakeup() const {
    TimeUs t = engine_.deadline_us();
    const auto& st = engine_.state();
    bool due = engine_.proposal_due();
    if (due && cfg_.behavior == Behavior::InvalidProposals) {
        due = !bad_proposals_sent_.contains({st.height, st.round});
    }
    if (due) {
        const TimeUs ready =
            st.round > 0 ? 0 : last_finalized_us_ + genesis_.block_interval_ms * 1000;
        t = std::min(t, ready);
    }
    return t;
}

Outbox FogNode::tick(TimeUs now) {
    process(engine_.on_timeout(chain_, now), now);
    if (engine_.proposal_due()) {
        const auto& st = engine_.state();
        const bool ready =
            st.round > 0 || now >= last_finalized_us_ + genesis_.block_interval_ms * 1000;
        if (ready) propose(now);
    }
    return drain();
}

void FogNode::propose(TimeUs now) {
    const auto& st = engine_.state();
    if (cfg_.behavior == Behavior::InvalidProposals) {
        if (!bad_proposals_sent_.insert({st.height, st.round}).second) return;
        Block b = fresh_block(now);
        b.header.tx_root.bytes[0] ^= 0xff;
        b.header.proposer_signature =
            crypto::sign_digest(crypto::sha256(chain::encode_unsigned(b.header)), key_);
        ConsensusMessage m;
        m.phase = Phase::PrePrepare;
        m.height = st.height;
        m.round = st.round;
        m.block_hash = chain::hash_block(b);
        m.block = std::move(b);
        consensus::sign_message(m, key_);
        send(std::nullopt, std::move(m));
        return;
    }

    auto step = engine_.propose(chain_, now, [&] { return fresh_block(now); });
    std::vector<ConsensusMessage> own_proposals;
    if (cfg_.behavior == Behavior::Equivocate) {
        std::vector<consensus::Outgoing> rewritten;
        for (auto& o : step.outbound) {
            if (o.msg.phase != Phase::PrePrepare || !o.msg.block) {
                rewritten.push_back(std::move(o));
                continue;
            }
            const Block& a = *o.msg.block;
            auto other = chain::build_block(a.transactions, chain_.tip(), key_, a.header.timestamp_ms + 1,
                                            genesis_.max_txs, genesis_.authorities);
            ConsensusMessage mb = o.msg;
            mb.block = std::move(other).value();
            mb.block_hash = chain::hash_block(*mb.block);
            mb.prepared_round.reset();
            consensus::sign_message(mb, key_);
            for (std::size_t i = 0; i < authority_.n(); ++i) {
                const auto& peer = authority_.authorities[i];
                if (peer == key_.public_key) continue;
                rewritten.push_back(consensus::Outgoing{i % 2 == 0 ? o.msg : mb, peer});
            }
            own_proposals.push_back(o.msg);
            own_proposals.push_back(std::move(mb));
        }
        step.outbound = std::move(rewritten);
    }
    process(std::move(step), now);
    for (const auto& p : own_proposals) equivocating_votes(p);
}

void FogNode::equivocating_votes(const ConsensusMessage& proposal) {
    if (!byzantine_voted_.insert({proposal.height, proposal.round, proposal.block_hash}).second) return;
    for (Phase p : {Phase::Prepare, Phase::Commit}) {
        ConsensusMessage v;
        v.phase = p;
        v.height = proposal.height;
        v.round = proposal.round;
        v.block_hash = proposal.block_hash;
        consensus::sign_message(v, key_);
        send(std::nullopt, std::move(v));
    }
}

void FogNode::remember_commit(const ConsensusMessage& m) {
    commits_[{m.height, m.round}].push_back(m);
}

void FogNode::process(consensus::Step&& step, TimeUs now) {
    for (auto& o : step.outbound) {
        if (o.msg.phase == Phase::Commit && o.msg.sender == key_.public_key) remember_commit(o.msg);
        send(o.to, std::move(o.msg));
    }
    for (const auto& m : step.misbehavior) {
        if (m.kind == consensus::MisbehaviorKind::InvalidBlock) {
            raise_alert(AlertKind::InvalidBlock, m.offender, m.height, m.detail, now);
        } else if (m.kind == consensus::MisbehaviorKind::Equivocation) {
            raise_alert(AlertKind::Equivocation, m.offender, m.height, m.detail, now);
        }
    }
    for (const auto& h : step.missing_blocks) send(std::nullopt, BlockRequest{h});
    if (step.finalized) finalize(*step.finalized, now);
}

void FogNode::finalize(const Block& block, TimeUs now) {
    auto appended = chain_.append_block(block, [this](const Transaction& tx) { return verify_cached(tx); });
    if (!appended) throw std::logic_error("consensus finalized a block that fails validation");
    const auto height = block.header.height;
    const auto hash = chain_.tip_hash();

    auto outcomes = vm::apply_block(world_, block, genesis_.gas_schedule);
    std::unordered_set<Digest, FixedBytesHash> in_block;
    for (auto& o : outcomes) {
        in_block.insert(o.tx_hash);
        included_.insert(o.tx_hash);
        pending_.erase(o.tx_hash);
        if (client_origin_.erase(o.tx_hash)) {
            outbox_.confirmations.push_back(
                Confirmation{o.tx_hash, height, std::move(o.receipt), o.skipped, now});
        }
    }
    if (!in_block.empty()) {
        std::erase_if(mempool_, [&](const Transaction& tx) { return in_block.contains(chain::hash_tx(tx)); });
    }
    prune_mempool();

    std::vector<ConsensusMessage> cert;
    std::set<PublicKey> signers;
    for (auto it = commits_.begin(); it != commits_.end() && it->first.first <= height;) {
        if (it->first.first == height) {
            for (const auto& m : it->second) {
                if (m.block_hash == hash && signers.insert(m.sender).second) cert.push_back(m);
            }
        }
        it = commits_.erase(it);
    }
    certificates_[height] = std::move(cert);

    last_finalized_us_ = now;
    ++counters_.blocks_finalized;
    outbox_.finalized_heights.push_back(height);
    process(engine_.start_height(height + 1, chain_, now), now);
}

void FogNode::prune_mempool() {
    std::erase_if(mempool_, [&](const Transaction& tx) {
        if (tx.nonce >= next_nonce_of(world_, tx.sender)) return false;
        const auto h = chain::hash_tx(tx);
        pending_.erase(h);
        client_origin_.erase(h);
        return true;
    });
}

bool FogNode::verify_certificate(const CatchUp& c) const {
    const auto hash = chain::hash_block(c.block);
    std::set<PublicKey> signers;
    for (const auto& m : c.certificate) {
        if (m.phase != Phase::Commit || m.height != c.block.header.height || m.block_hash != hash) continue;
        if (!authority_.contains(m.sender) || !consensus::verify_message(m)) continue;
        signers.insert(m.sender);
    }
    return signers.size() >= authority_.quorum();
}

Outbox FogNode::on_peer_message(const PublicKey& from, const PeerMessage& msg, TimeUs now) {
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ConsensusMessage>) {
                if (m.height <= chain_.height() && m.phase == Phase::RoundChange &&
                    authority_.contains(m.sender) && m.height > 0 &&
                    catch_up_sent_.insert({m.sender, m.height, m.round}).second) {
                    auto it = certificates_.find(m.height);
                    if (it != certificates_.end()) {
                        send(m.sender, CatchUp{chain_.at(m.height), it->second});
                    }
                }
                auto step = engine_.on_message(m, chain_, now);
                const bool rejected = std::any_of(step.misbehavior.begin(), step.misbehavior.end(), [](const auto& x) {
                    return x.kind == consensus::MisbehaviorKind::BadSignature ||
                           x.kind == consensus::MisbehaviorKind::NonAuthority;
                });
                if (!rejected && m.phase == Phase::Commit && m.height > chain_.height()) remember_commit(m);
                if (!rejected && cfg_.behavior == Behavior::Equivocate && m.phase == Phase::PrePrepare &&
                    m.block && m.height == chain_.height() + 1) {
                    equivocating_votes(m);
                }
                process(std::move(step), now);
            } else if constexpr (std::is_same_v<T, TxGossip>) {
                (void)admit(m.tx, false);
            } else if constexpr (std::is_same_v<T, AlertNotice>) {
                const auto& a = m.alert;
                if (peer_alert_keys_.insert(AlertKey{a.kind, a.offender, a.height, a.subject}).second) {
                    peer_alerts_.push_back(m);
                }
            } else if constexpr (std::is_same_v<T, BlockRequest>) {
                if (const auto* b = engine_.known_block(m.hash)) {
                    send(from, BlockResponse{*b});
                } else if (const auto* fb = chain_.find(m.hash)) {
                    send(from, BlockResponse{*fb});
                }
            } else if constexpr (std::is_same_v<T, BlockResponse>) {
                process(engine_.on_block(m.block, chain_, now), now);
            } else if constexpr (std::is_same_v<T, CatchUp>) {
                if (m.block.header.height != chain_.height() + 1 || !verify_certificate(m)) return;
                const auto report = chain::validate_block(
                    m.block, chain_.tip(), genesis_.authorities,
                    [this](const Transaction& tx) { return verify_cached(tx); });
                if (!report.valid()) return;
                ++counters_.catch_ups;
                finalize(m.block, now);
            }
        },
        msg);
    return drain();
}

}  // namespace edgelinker::node
