#include "edgelinker/scenario.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

namespace edgelinker::scenario {

using nlohmann::json;
using sim::ClientEvent;
using sim::TimeUs;
using crypto::KeyPair;

std::string_view to_string(AttackKind k) {
    switch (k) {
        case AttackKind::Replay: return "replay";
        case AttackKind::Eavesdrop: return "eavesdrop";
        case AttackKind::Insertion: return "insertion";
        case AttackKind::DoSFlood: return "dos";
        case AttackKind::Spoof: return "spoof";
    }
    return "?";
}

std::optional<AttackKind> parse_attack_kind(std::string_view s) {
    for (auto k : {AttackKind::Replay, AttackKind::Eavesdrop, AttackKind::Insertion, AttackKind::DoSFlood,
                   AttackKind::Spoof}) {
        if (s == to_string(k)) return k;
    }
    if (s == "dosflood" || s == "dos_flood") return AttackKind::DoSFlood;
    return std::nullopt;
}

void validate(const ScenarioConfig& cfg) {
    if (cfg.nodes == 0) throw ConfigError("scenario: nodes must be >= 1");
    if (cfg.block_interval_ms == 0) throw ConfigError("scenario: block_interval_ms must be > 0");
    if (cfg.writes == 0) throw ConfigError("scenario: writes must be >= 1");
    if (cfg.write_period_ms == 0) throw ConfigError("scenario: write_period_ms must be > 0");
    if (cfg.duration_ms == 0) throw ConfigError("scenario: duration_ms must be > 0");
    if (!(cfg.link.drop_probability >= 0.0 && cfg.link.drop_probability <= 1.0)) {
        throw ConfigError("scenario: link.drop_probability must lie in [0, 1]");
    }
    for (const auto* set : {&cfg.crashed, &cfg.equivocators, &cfg.invalid_proposers}) {
        for (auto i : *set) {
            if (i >= cfg.nodes) throw ConfigError("scenario: fault index " + std::to_string(i) + " out of range");
        }
    }
    if (cfg.crashed.size() >= cfg.nodes) throw ConfigError("scenario: every node is crashed");
}

namespace {

std::set<std::size_t> index_set(const json& j) {
    std::set<std::size_t> out;
    for (const auto& v : j) out.insert(v.get<std::size_t>());
    return out;
}

json index_array(const std::set<std::size_t>& s) { return json(std::vector<std::size_t>(s.begin(), s.end())); }

}  // namespace

ScenarioConfig parse_scenario_json(std::string_view text) {
    ScenarioConfig cfg;
    try {
        const auto j = json::parse(text);
        cfg.nodes = j.value("nodes", cfg.nodes);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.duration_ms = j.value("duration_ms", cfg.duration_ms);
        cfg.block_interval_ms = j.value("block_interval_ms", cfg.block_interval_ms);
        if (j.contains("channel")) {
            auto mode = node::parse_channel_mode(j.at("channel").get<std::string>());
            if (!mode) throw ConfigError("scenario: channel must be secure or plain");
            cfg.channel = *mode;
        }
        if (j.contains("link")) {
            const auto& l = j.at("link");
            cfg.link.base_latency_us = l.value("base_latency_us", cfg.link.base_latency_us);
            cfg.link.jitter_us = l.value("jitter_us", cfg.link.jitter_us);
            cfg.link.drop_probability = l.value("drop_probability", cfg.link.drop_probability);
        }
        if (j.contains("actors")) {
            const auto& a = j.at("actors");
            cfg.writes = a.value("writes", cfg.writes);
            cfg.write_period_ms = a.value("write_period_ms", cfg.write_period_ms);
        }
        if (j.contains("faults")) {
            const auto& f = j.at("faults");
            if (f.contains("crashed")) cfg.crashed = index_set(f.at("crashed"));
            if (f.contains("equivocators")) cfg.equivocators = index_set(f.at("equivocators"));
            if (f.contains("invalid_proposers")) cfg.invalid_proposers = index_set(f.at("invalid_proposers"));
        }
        if (j.contains("attack") && !j.at("attack").is_null()) {
            const auto& a = j.at("attack");
            auto kind = parse_attack_kind(a.at("kind").get<std::string>());
            if (!kind) throw ConfigError("scenario: unknown attack kind " + a.at("kind").get<std::string>());
            cfg.attack = *kind;
            cfg.dos_balance = a.value("dos_balance", cfg.dos_balance);
            cfg.dos_attempts = a.value("dos_attempts", cfg.dos_attempts);
        }
        cfg.trace_messages = j.value("trace_messages", cfg.trace_messages);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["nodes"] = cfg.nodes;
    j["seed"] = cfg.seed;
    j["duration_ms"] = cfg.duration_ms;
    j["block_interval_ms"] = cfg.block_interval_ms;
    j["channel"] = std::string(node::to_string(cfg.channel));
    j["link"] = {{"base_latency_us", cfg.link.base_latency_us},
                 {"jitter_us", cfg.link.jitter_us},
                 {"drop_probability", cfg.link.drop_probability}};
    j["actors"] = {{"writes", cfg.writes}, {"write_period_ms", cfg.write_period_ms}};
    j["faults"] = {{"crashed", index_array(cfg.crashed)},
                   {"equivocators", index_array(cfg.equivocators)},
                   {"invalid_proposers", index_array(cfg.invalid_proposers)}};
    if (cfg.attack) {
        j["attack"] = {{"kind", std::string(to_string(*cfg.attack))},
                       {"dos_balance", cfg.dos_balance},
                       {"dos_attempts", cfg.dos_attempts}};
    } else {
        j["attack"] = nullptr;
    }
    j["trace_messages"] = cfg.trace_messages;
    return j.dump(2);
}

namespace {

constexpr std::uint64_t kPatientBalance = 1'000'000'000'000ULL;
constexpr std::uint64_t kForgedAmount = 1'000'000;

// Builds an envelope the way a sender would, but without the identity check
// seal_message enforces; lets an attacker lie about who it is.
channel::SecureEnvelope forge_envelope(const channel::ChannelMessage& m, const KeyPair& signer,
                                       const crypto::SymmetricKey& key, const PublicKey& hint,
                                       const crypto::AeadNonce& nonce) {
    Bytes plaintext = channel::canonical_encode(m);
    const auto sig = crypto::sign_digest(crypto::sha256(plaintext), signer);
    plaintext.insert(plaintext.end(), sig.begin(), sig.end());
    channel::SecureEnvelope env;
    env.sender_hint = hint;
    auto sealed = crypto::aead_encrypt(plaintext, hint.view(), nonce, key);
    env.ciphertext.assign(nonce.begin(), nonce.end());
    env.ciphertext.insert(env.ciphertext.end(), sealed.begin(), sealed.end());
    return env;
}

crypto::AeadNonce counter_nonce(std::uint64_t c) {
    crypto::AeadNonce n{};
    n[0] = 0xa7;
    for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(c >> (56 - 8 * i));
    return n;
}

class Driver {
public:
    Driver(const ScenarioConfig& cfg, std::optional<AttackKind> attack, std::uint64_t seed)
        : cfg_(cfg), attack_(attack), sim_(make_sim_config(cfg, attack, seed)) {
        gas_ = sim_.genesis().gas_schedule;
        interval_us_ = cfg.block_interval_ms * 1000;
        for (std::size_t i = 0; i < cfg.nodes; ++i) {
            if (!cfg.crashed.contains(i)) live_.push_back(i);
        }
        gateway_ = live_.front();
        doctor_gateway_ = live_.size() > 1 ? live_[1] : live_.front();

        patient_ = sim_.add_client(patient_key(), [this](const ClientEvent& ev) { on_patient(ev); });
        doctor_ = sim_.add_client(doctor_key(), [this](const ClientEvent& ev) { on_doctor(ev); });
        attacker_ = sim_.add_client(attacker_key(), [this](const ClientEvent& ev) { on_attacker(ev); });

        res_.patient = patient_key().public_key;
        res_.doctor = doctor_key().public_key;
        res_.attacker = attacker_key().public_key;
        res_.attack = attack;

        if (attack == AttackKind::Replay || attack == AttackKind::Eavesdrop) {
            sim_.tap = [this](std::size_t from, std::size_t to, const sim::ClientPacket& p) {
                if (from != sim_.client_endpoint(patient_)) return;
                ++res_.attack_stats.captured;
                if (attack_ == AttackKind::Replay) {
                    captured_.emplace_back(to, p);
                } else {
                    eavesdrop(p);
                }
            };
        }
    }

    static KeyPair patient_key() { return crypto::keypair_from_label("patient-device"); }
    static KeyPair doctor_key() { return crypto::keypair_from_label("doctor-client"); }
    static KeyPair attacker_key() { return crypto::keypair_from_label("attacker"); }
    static KeyPair rogue_key() { return crypto::keypair_from_label("rogue-miner"); }

    ScenarioResult run() {
        sim_.at(100'000, [this] { deploy(); });
        if (attack_ == AttackKind::Insertion) {
            for (int k = 0; k < 6; ++k) {
                sim_.at(2'500'000 + static_cast<TimeUs>(k) * 5'000'000, [this] { insert_rogue_block(); });
            }
        }
        const TimeUs deadline = cfg_.duration_ms * 1000;
        sim_.run_until([this] { return res_.completed || failed_; }, deadline);
        const TimeUs settled = std::min(deadline, sim_.now() + 2 * interval_us_);
        sim_.run_until(settled);

        if (res_.completed && (attack_ == AttackKind::Replay || attack_ == AttackKind::Spoof)) {
            post_phase_attack(deadline);
        }
        collect();
        return std::move(res_);
    }

private:
    static sim::SimConfig make_sim_config(const ScenarioConfig& cfg, std::optional<AttackKind> attack,
                                          std::uint64_t seed) {
        validate(cfg);
        sim::SimConfig sc;
        sc.nodes = cfg.nodes;
        sc.seed = seed;
        sc.link = cfg.link;
        sc.genesis.block_interval_ms = cfg.block_interval_ms;
        sc.genesis.initial_balances[patient_key().public_key] = kPatientBalance;
        if (attack == AttackKind::DoSFlood) sc.genesis.initial_balances[attacker_key().public_key] = cfg.dos_balance;
        sc.node.channel = cfg.channel;
        for (auto i : cfg.equivocators) sc.behaviors[i] = node::Behavior::Equivocate;
        for (auto i : cfg.invalid_proposers) sc.behaviors[i] = node::Behavior::InvalidProposals;
        sc.crashed = cfg.crashed;
        sc.trace_messages = cfg.trace_messages;
        return sc;
    }

    void step(const std::string& what) { sim_.trace().add(sim_.now(), "step", -1, -1, what); }

    void send_patient(const std::string& name, chain::Payload payload, std::uint64_t gas) {
        auto tx = sim_.make_tx(patient_, std::move(payload), gas);
        const auto h = sim_.submit(patient_, gateway_, tx);
        step_of_[h] = name;
        step(name + " sent " + h.hex().substr(0, 16));
    }

    void deploy() { send_patient("deploy", chain::Deploy{}, gas_.deploy); }

    void grant(const PermissionId& perm, const Address& who, const std::string& name) {
        send_patient(name,
                     chain::Call{*res_.contract, std::string(vm::kMethodGrant), vm::encode_permission_args(perm, who)},
                     gas_.grant);
    }

    void write(std::size_t k) {
        const auto hr = static_cast<std::uint16_t>(60 + (k * 7) % 40);
        send_patient("add_reading",
                     chain::Call{*res_.contract, std::string(vm::kMethodAddReading),
                                 vm::encode_add_reading_args(sim_.now_ms(), hr)},
                     gas_.add_data);
    }

    void doctor_read() {
        auto tx = sim_.make_tx(doctor_, chain::Query{*res_.contract, 0, std::numeric_limits<std::uint64_t>::max()}, 0);
        sim_.submit(doctor_, doctor_gateway_, tx);
        step("doctor read sent");
    }

    void on_patient(const ClientEvent& ev) {
        auto it = step_of_.find(ev.tx_hash);
        if (it == step_of_.end()) return;
        const std::string name = it->second;
        if (ev.kind == ClientEvent::Kind::Reject) {
            step(name + " rejected " + std::string(node::to_string(*ev.reason)));
            failed_ = true;
            return;
        }
        if (ev.kind != ClientEvent::Kind::Confirmed) return;
        res_.receipts.push_back(ReceiptLog{name, ev.tx_hash, ev.height, ev.status, ev.gas_used});
        step(name + " confirmed h=" + std::to_string(ev.height) + " " +
             (ev.status ? std::string(vm::to_string(*ev.status)) : std::string("skipped")));
        if (ev.status != vm::ExecStatus::Success) {
            failed_ = true;
            return;
        }
        if (name == "deploy") {
            res_.contract = ev.created_contract;
            grant(vm::kWritePermission, patient_key().public_key, "grant_write");
        } else if (name == "grant_write") {
            const TimeUs start = sim_.now();
            for (std::size_t k = 0; k < cfg_.writes; ++k) {
                sim_.at(start + k * cfg_.write_period_ms * 1000, [this, k] { write(k); });
            }
            if (attack_ == AttackKind::DoSFlood) sim_.at(start + 500, [this] { dos_flood(); });
        } else if (name == "add_reading") {
            if (++res_.confirmed_writes == cfg_.writes) {
                grant(vm::kReadPermission, doctor_key().public_key, "grant_read");
            }
        } else if (name == "grant_read" || name == "revoke_read") {
            sim_.at(sim_.now() + interval_us_, [this] { doctor_read(); });
        }
    }

    void on_doctor(const ClientEvent& ev) {
        if (ev.kind != ClientEvent::Kind::Answer && ev.kind != ClientEvent::Kind::Reject) return;
        if (!first_read_done_) {
            first_read_done_ = true;
            if (ev.kind == ClientEvent::Kind::Answer) {
                res_.first_read_count = ev.readings.size();
                step("doctor read " + std::to_string(ev.readings.size()) + " readings");
                send_patient("revoke_read",
                             chain::Call{*res_.contract, std::string(vm::kMethodRevoke),
                                         vm::encode_permission_args(vm::kReadPermission, doctor_key().public_key)},
                             gas_.revoke);
            } else {
                res_.first_read_reject = ev.reason;
                step("doctor read rejected " + std::string(node::to_string(*ev.reason)));
                failed_ = true;
            }
            return;
        }
        if (ev.kind == ClientEvent::Kind::Answer) {
            res_.second_read_count = ev.readings.size();
            step("doctor second read returned " + std::to_string(ev.readings.size()) + " readings");
        } else {
            res_.second_read_reject = ev.reason;
            step("doctor second read rejected " + std::string(node::to_string(*ev.reason)));
        }
        res_.completed = true;
    }

    void on_attacker(const ClientEvent& ev) {
        auto& st = res_.attack_stats;
        switch (ev.kind) {
            case ClientEvent::Kind::Reject: ++st.rejections[*ev.reason]; break;
            case ClientEvent::Kind::Ack:
            case ClientEvent::Kind::Answer: ++st.accepted; break;
            case ClientEvent::Kind::Confirmed:
                if (ev.status == vm::ExecStatus::Denied) ++st.dos_processed;
                break;
        }
    }

    void eavesdrop(const sim::ClientPacket& p) {
        if (const auto* env = std::get_if<channel::SecureEnvelope>(&p)) {
            // Offline attempt with the attacker's own key pair.
            if (channel::open_message(*env, attacker_key(), env->sender_hint)) ++res_.attack_stats.eavesdrop_opened;
        } else {
            ++res_.attack_stats.eavesdrop_opened;  // plaintext on the wire
        }
    }

    void dos_flood() {
        auto& st = res_.attack_stats;
        st.dos_expected = static_cast<std::size_t>(cfg_.dos_balance / gas_.add_data);
        const std::size_t attempts = cfg_.dos_attempts ? cfg_.dos_attempts : st.dos_expected + 5;
        step("dos flood " + std::to_string(attempts) + " denied calls");
        for (std::size_t k = 0; k < attempts; ++k) {
            sim_.at(sim_.now() + k * 2000, [this] {
                auto tx = sim_.make_tx(attacker_,
                                       chain::Call{*res_.contract, std::string(vm::kMethodAddReading),
                                                   vm::encode_add_reading_args(sim_.now_ms(), 250)},
                                       gas_.add_data);
                sim_.submit(attacker_, gateway_, tx);
                ++res_.attack_stats.sent;
            });
        }
    }

    void insert_rogue_block() {
        if (res_.completed) return;
        const auto& observed = sim_.node(gateway_);
        const auto rogue = rogue_key();

        chain::Transaction forged;
        forged.timestamp_ms = sim_.now_ms();
        forged.payload = chain::Transfer{rogue.public_key, kForgedAmount};
        forged.gas_limit = gas_.transfer;
        chain::sign_transaction(forged, rogue);
        forged.sender = patient_key().public_key;

        chain::Block b;
        b.header.height = observed.chain().height() + 1;
        b.header.timestamp_ms = sim_.now_ms();
        b.header.prev_hash = observed.chain().tip_hash();
        b.transactions.push_back(forged);
        b.header.tx_root = chain::compute_tx_root(b.transactions);
        b.header.proposer = rogue.public_key;
        b.header.proposer_signature = crypto::sign_digest(crypto::sha256(chain::encode_unsigned(b.header)), rogue);

        consensus::ConsensusMessage m;
        m.phase = consensus::Phase::PrePrepare;
        m.height = b.header.height;
        m.round = observed.engine().state().round;
        m.block_hash = chain::hash_block(b);
        m.block = b;
        consensus::sign_message(m, rogue);

        step("rogue pre-prepare h=" + std::to_string(m.height));
        ++res_.attack_stats.sent;
        for (std::size_t i = 0; i < sim_.node_count(); ++i) {
            sim_.inject_peer(sim_.client_endpoint(attacker_), rogue.public_key, i, m);
        }
    }

    std::vector<Bytes> snapshot_worlds() const {
        std::vector<Bytes> out;
        for (auto i : live_) out.push_back(vm::canonical_encode(sim_.node(i).world()));
        return out;
    }

    void post_phase_attack(TimeUs deadline) {
        const auto before = snapshot_worlds();
        const TimeUs start = sim_.now() + 100'000;
        std::size_t sent = 0;
        if (attack_ == AttackKind::Replay) {
            step("replaying " + std::to_string(captured_.size()) + " captured envelopes");
            for (std::size_t i = 0; i < captured_.size(); ++i) {
                sim_.at(start + i * 1000, [this, i] {
                    sim_.send_packet(sim_.client_endpoint(attacker_), captured_[i].first, captured_[i].second,
                                     sim::TrafficClass::Attacker);
                });
            }
            sent = captured_.size();
        } else {
            sent = schedule_spoofs(start);
        }
        res_.attack_stats.sent = sent;
        const TimeUs end = std::min(deadline, start + sent * 1000 + 3 * interval_us_);
        sim_.run_until(end);
        res_.attack_stats.worlds_unchanged = snapshot_worlds() == before;
    }

    std::size_t schedule_spoofs(TimeUs start) {
        const auto attacker = attacker_key();
        const auto patient = patient_key().public_key;
        const auto node_pk = sim_.node_key(gateway_).public_key;
        const auto key = crypto::derive_shared_key(attacker, node_pk).value();
        const std::size_t rounds = 3;
        std::size_t sent = 0;
        for (std::size_t r = 0; r < rounds; ++r) {
            for (int variant = 0; variant < 3; ++variant) {
                const TimeUs at = start + sent * 1000;
                ++sent;
                sim_.at(at, [this, variant, r, attacker, patient, key] {
                    chain::Transaction tx;
                    tx.timestamp_ms = sim_.now_ms();
                    tx.payload = chain::Transfer{attacker.public_key, kForgedAmount};
                    tx.gas_limit = gas_.transfer;
                    tx.nonce = r;
                    chain::sign_transaction(tx, attacker);
                    tx.sender = patient;

                    channel::ChannelMessage m{sim_.now_ms(), ++spoof_nonce_, patient, chain::canonical_encode(tx)};
                    const auto nonce = counter_nonce(spoof_nonce_);
                    channel::SecureEnvelope env;
                    if (variant == 0) {
                        // Claims the patient's identity inside, signs as itself.
                        env = forge_envelope(m, attacker, key, attacker.public_key, nonce);
                    } else if (variant == 1) {
                        // Claims the patient's identity on the outside.
                        env = forge_envelope(m, attacker, key, patient, nonce);
                    } else {
                        // Honest channel identity, but the transaction names the patient.
                        m.identification = attacker.public_key;
                        env = forge_envelope(m, attacker, key, attacker.public_key, nonce);
                    }
                    if (cfg_.channel == node::ChannelMode::Secure) {
                        sim_.send_packet(sim_.client_endpoint(attacker_), gateway_, env, sim::TrafficClass::Attacker);
                    } else {
                        sim_.send_packet(sim_.client_endpoint(attacker_), gateway_, m, sim::TrafficClass::Attacker);
                    }
                });
            }
        }
        return sent;
    }

    void collect() {
        const auto n = sim_.node_count();
        res_.trace = sim_.trace();
        res_.live_nodes = live_;
        for (auto i : live_) {
            if (!cfg_.equivocators.contains(i) && !cfg_.invalid_proposers.contains(i)) res_.honest_nodes.push_back(i);
        }
        res_.chain_bytes.assign(n, {});
        res_.tips.assign(n, {});
        res_.heights.assign(n, 0);
        res_.worlds.assign(n, {});
        res_.replay_matches.assign(n, false);
        res_.alerts.assign(n, {});
        const auto rogue = rogue_key().public_key;
        for (auto i : live_) {
            const auto& nd = sim_.node(i);
            Bytes all;
            for (const auto& b : nd.chain().blocks()) {
                auto enc = chain::canonical_encode(b);
                all.insert(all.end(), enc.begin(), enc.end());
            }
            res_.chain_bytes[i] = std::move(all);
            res_.tips[i] = nd.chain().tip_hash();
            res_.heights[i] = nd.chain().height();
            res_.worlds[i] = vm::canonical_encode(nd.world());
            res_.replay_matches[i] = vm::canonical_encode(replay_chain(nd.chain(), nd.genesis())) == res_.worlds[i];
            res_.alerts[i] = nd.alerts();
            for (const auto& a : nd.alerts()) {
                if (a.kind == node::AlertKind::ReplayDetected && a.offender == res_.patient) {
                    ++res_.attack_stats.replay_alerts;
                }
            }
            if (attack_ == AttackKind::Insertion &&
                std::any_of(nd.alerts().begin(), nd.alerts().end(), [&](const node::Alert& a) {
                    return a.kind == node::AlertKind::InvalidBlock && a.offender == rogue;
                })) {
                ++res_.attack_stats.insertion_alerting_nodes;
            }
        }
        if (attack_ == AttackKind::DoSFlood) {
            const auto* acct = sim_.node(gateway_).world().account(res_.attacker);
            res_.attack_stats.dos_final_balance = acct ? acct->balance : 0;
        }
        res_.network = sim_.network().counters();
        res_.end_time_us = sim_.now();
    }

    const ScenarioConfig& cfg_;
    std::optional<AttackKind> attack_;
    sim::Simulation sim_;
    vm::GasSchedule gas_;
    TimeUs interval_us_ = 0;
    std::vector<std::size_t> live_;
    std::size_t gateway_ = 0;
    std::size_t doctor_gateway_ = 0;
    std::size_t patient_ = 0;
    std::size_t doctor_ = 0;
    std::size_t attacker_ = 0;
    std::map<Digest, std::string> step_of_;
    bool failed_ = false;
    bool first_read_done_ = false;
    std::vector<std::pair<std::size_t, sim::ClientPacket>> captured_;
    std::uint64_t spoof_nonce_ = 0;
    ScenarioResult res_;
};

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
    return Driver(cfg, cfg.attack, seed).run();
}

ScenarioResult inject_attack(const ScenarioConfig& cfg, AttackKind attack, std::uint64_t seed) {
    return Driver(cfg, attack, seed).run();
}

bool AttackReport::pass() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

bool chains_consistent(const ScenarioResult& r) {
    for (std::size_t a = 0; a < r.honest_nodes.size(); ++a) {
        for (std::size_t b = a + 1; b < r.honest_nodes.size(); ++b) {
            const auto& x = r.chain_bytes[r.honest_nodes[a]];
            const auto& y = r.chain_bytes[r.honest_nodes[b]];
            const auto& shorter = x.size() <= y.size() ? x : y;
            const auto& longer = x.size() <= y.size() ? y : x;
            if (!std::equal(shorter.begin(), shorter.end(), longer.begin())) return false;
        }
    }
    return true;
}

namespace {

Check check(std::string name, bool pass, std::string detail = {}) {
    return Check{std::move(name), pass, std::move(detail)};
}

bool all_replays_match(const ScenarioResult& r) {
    return std::all_of(r.live_nodes.begin(), r.live_nodes.end(), [&](std::size_t i) { return r.replay_matches[i]; });
}

std::size_t rejected(const AttackStats& s, node::RejectReason reason) {
    auto it = s.rejections.find(reason);
    return it == s.rejections.end() ? 0 : it->second;
}

std::size_t total_rejected(const AttackStats& s) {
    std::size_t n = 0;
    for (const auto& [_, c] : s.rejections) n += c;
    return n;
}

}  // namespace

AttackReport evaluate_attack(const ScenarioConfig& cfg, AttackKind attack, std::uint64_t seed) {
    AttackReport rep{attack, {}};
    auto& c = rep.checks;
    const auto r = inject_attack(cfg, attack, seed);
    const auto& st = r.attack_stats;

    c.push_back(check("scenario completed", r.completed));
    c.push_back(check("state replay matches live world on every node", all_replays_match(r)));
    c.push_back(check("honest chains consistent", chains_consistent(r)));

    switch (attack) {
        case AttackKind::Replay:
            c.push_back(check("envelopes captured and replayed", st.sent > 0 && st.sent == st.captured,
                              std::to_string(st.sent) + " replayed"));
            c.push_back(check("every replay rejected as NonceReplayed",
                              rejected(st, node::RejectReason::NonceReplayed) == st.sent && st.accepted == 0,
                              std::to_string(rejected(st, node::RejectReason::NonceReplayed)) + "/" +
                                  std::to_string(st.sent)));
            c.push_back(check("one ReplayDetected alert per replay", st.replay_alerts >= st.sent,
                              std::to_string(st.replay_alerts) + " alerts"));
            c.push_back(check("world state unchanged by replays", st.worlds_unchanged));
            break;
        case AttackKind::Eavesdrop: {
            const auto base = run_scenario([&] {
                auto b = cfg;
                b.attack.reset();
                return b;
            }(), seed);
            c.push_back(check("ciphertexts captured", st.captured > 0, std::to_string(st.captured) + " envelopes"));
            c.push_back(check("no captured envelope opened with a foreign key", st.eavesdrop_opened == 0,
                              std::to_string(st.eavesdrop_opened) + " opened"));
            c.push_back(check("world state identical to attack-free run", r.worlds == base.worlds));
            break;
        }
        case AttackKind::Insertion: {
            const auto base = run_scenario([&] {
                auto b = cfg;
                b.attack.reset();
                return b;
            }(), seed);
            bool identical = true;
            for (auto i : r.honest_nodes) identical = identical && r.chain_bytes[i] == base.chain_bytes[i];
            c.push_back(check("rogue proposals sent", st.sent > 0, std::to_string(st.sent) + " pre-prepares"));
            c.push_back(check("honest chains byte-identical to baseline", identical));
            c.push_back(check("every honest node raised an InvalidBlock alert",
                              st.insertion_alerting_nodes == r.honest_nodes.size(),
                              std::to_string(st.insertion_alerting_nodes) + "/" +
                                  std::to_string(r.honest_nodes.size())));
            break;
        }
        case AttackKind::DoSFlood:
            c.push_back(check("processed denied calls equal floor(balance / add_data gas)",
                              st.dos_processed == st.dos_expected,
                              std::to_string(st.dos_processed) + " processed, expected " +
                                  std::to_string(st.dos_expected)));
            c.push_back(check("attacker balance drained below one call",
                              st.dos_final_balance < vm::GasSchedule{}.add_data,
                              std::to_string(st.dos_final_balance) + " left"));
            c.push_back(check("excess calls refused", rejected(st, node::RejectReason::InsufficientBalance) ==
                                                          st.sent - st.dos_processed));
            break;
        case AttackKind::Spoof:
            c.push_back(check("spoofed envelopes sent", st.sent > 0, std::to_string(st.sent)));
            c.push_back(check("every spoofed envelope rejected", total_rejected(st) == st.sent && st.accepted == 0,
                              std::to_string(total_rejected(st)) + "/" + std::to_string(st.sent)));
            c.push_back(check("world state unchanged by spoofing", st.worlds_unchanged));
            break;
    }
    return rep;
}

}  // namespace edgelinker::scenario
