#include "edgelinker/sim.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "edgelinker/codec.hpp"

namespace edgelinker::sim {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void EventQueue::schedule(TimeUs at, Action action) {
    items_.push(Item{std::max(at, now_), seq_++, std::move(action)});
}

bool EventQueue::step() {
    if (items_.empty()) return false;
    // priority_queue::top is const; the action is moved out through a copy of the handle.
    Item item = items_.top();
    items_.pop();
    now_ = item.at;
    ++executed_;
    item.action();
    return true;
}

std::optional<TimeUs> EventQueue::next_time() const {
    if (items_.empty()) return std::nullopt;
    return items_.top().at;
}

std::string_view to_string(TrafficClass c) {
    switch (c) {
        case TrafficClass::Client: return "client";
        case TrafficClass::Consensus: return "consensus";
        case TrafficClass::Gossip: return "gossip";
        case TrafficClass::Alert: return "alert";
        case TrafficClass::Sync: return "sync";
        case TrafficClass::Attacker: return "attacker";
    }
    return "?";
}

void Network::set_link(std::size_t from, std::size_t to, LinkModel link) {
    overrides_[{from, to}] = link;
}

void Network::set_partitioned(std::size_t a, std::size_t b, bool partitioned) {
    const auto key = std::minmax(a, b);
    if (partitioned) {
        partitions_.insert(key);
    } else {
        partitions_.erase(key);
    }
}

bool Network::partitioned(std::size_t a, std::size_t b) const {
    return partitions_.contains(std::minmax(a, b));
}

const LinkModel& Network::link(std::size_t from, std::size_t to) const {
    auto it = overrides_.find({from, to});
    return it == overrides_.end() ? default_ : it->second;
}

DeliveryOutcome Network::deliver(std::size_t from, std::size_t to, TrafficClass cls, TimeUs now) {
    ++counters_.sent;
    auto& stream = streams_[{from, to, cls}];
    const std::uint64_t counter = stream.counter++;
    if (partitioned(from, to)) {
        ++counters_.dropped;
        return {true, 0};
    }
    const auto& l = link(from, to);
    std::uint64_t h = splitmix64(seed_);
    h = splitmix64(h ^ from);
    h = splitmix64(h ^ to);
    h = splitmix64(h ^ static_cast<std::uint64_t>(cls));
    h = splitmix64(h ^ counter);
    const double u = static_cast<double>(splitmix64(h ^ 1) >> 11) * 0x1.0p-53;
    if (u < l.drop_probability) {
        ++counters_.dropped;
        return {true, 0};
    }
    const TimeUs jitter = l.jitter_us == 0 ? 0 : splitmix64(h ^ 2) % (l.jitter_us + 1);
    const TimeUs arrival = std::max(now + l.base_latency_us + jitter, stream.last_arrival);
    stream.last_arrival = arrival;
    return {false, arrival};
}

void SimTrace::add(TimeUs t, std::string kind, std::int64_t node, std::int64_t peer, std::string detail) {
    events.push_back(TraceEvent{t, std::move(kind), node, peer, std::move(detail)});
}

std::string SimTrace::to_jsonl() const {
    std::string out;
    for (const auto& e : events) {
        nlohmann::json j{{"t_us", e.time}, {"kind", e.kind}, {"node", e.node}, {"peer", e.peer},
                         {"detail", e.detail}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string SimTrace::to_csv() const {
    std::ostringstream out;
    out << "t_us,kind,node,peer,detail\n";
    for (const auto& e : events) {
        std::string d = e.detail;
        std::string quoted;
        for (char c : d) {
            if (c == '"') quoted += '"';
            quoted += c;
        }
        out << e.time << ',' << e.kind << ',' << e.node << ',' << e.peer << ",\"" << quoted << "\"\n";
    }
    return out.str();
}

std::size_t SimTrace::count(std::string_view kind) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
}

KeyPair node_keypair(std::size_t index) {
    return crypto::keypair_from_label("fog-node-" + std::to_string(index));
}

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point since) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count());
}

Bytes encode_event(const ClientEvent& ev) {
    Encoder enc;
    enc.tag(static_cast<std::uint8_t>(ev.kind)).fixed(ev.tx_hash);
    enc.tag(ev.reason ? static_cast<std::uint8_t>(*ev.reason) + 1 : 0);
    enc.bytes(vm::encode_readings(ev.readings));
    enc.u64(ev.height);
    enc.tag(ev.status ? static_cast<std::uint8_t>(*ev.status) + 1 : 0);
    enc.u64(ev.gas_used);
    if (ev.created_contract) {
        enc.tag(1).fixed(*ev.created_contract);
    } else {
        enc.tag(0);
    }
    return std::move(enc).take();
}

ClientEvent decode_event(ByteView in) {
    Decoder dec(in);
    ClientEvent ev;
    ev.kind = static_cast<ClientEvent::Kind>(dec.tag());
    ev.tx_hash = dec.fixed<Digest>();
    if (auto r = dec.tag()) ev.reason = static_cast<node::RejectReason>(r - 1);
    ev.readings = vm::decode_readings(dec.bytes());
    ev.height = dec.u64();
    if (auto s = dec.tag()) ev.status = static_cast<vm::ExecStatus>(s - 1);
    ev.gas_used = dec.u64();
    if (dec.tag() == 1) ev.created_contract = dec.fixed<Address>();
    dec.expect_done();
    return ev;
}

TrafficClass class_of(const node::PeerMessage& m) {
    switch (m.index()) {
        case 0: return TrafficClass::Consensus;
        case 1: return TrafficClass::Gossip;
        case 2: return TrafficClass::Alert;
        default: return TrafficClass::Sync;
    }
}

std::string describe(const node::PeerMessage& m) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, consensus::ConsensusMessage>) {
                return std::string(consensus::to_string(x.phase)) + " h=" + std::to_string(x.height) +
                       " r=" + std::to_string(x.round) + " " + x.block_hash.hex().substr(0, 12);
            } else if constexpr (std::is_same_v<T, node::TxGossip>) {
                return "TX " + chain::hash_tx(x.tx).hex().substr(0, 12);
            } else if constexpr (std::is_same_v<T, node::AlertNotice>) {
                return "ALERT " + std::string(node::to_string(x.alert.kind));
            } else if constexpr (std::is_same_v<T, node::BlockRequest>) {
                return "BLOCK_REQUEST " + x.hash.hex().substr(0, 12);
            } else if constexpr (std::is_same_v<T, node::BlockResponse>) {
                return "BLOCK_RESPONSE h=" + std::to_string(x.block.header.height);
            } else {
                return "CATCH_UP h=" + std::to_string(x.block.header.height);
            }
        },
        m);
}

}  // namespace

Simulation::Simulation(SimConfig cfg) : cfg_(std::move(cfg)), net_(cfg_.link, cfg_.seed) {
    if (cfg_.nodes == 0) throw ConfigError("simulation needs at least one node");
    genesis_ = cfg_.genesis;
    for (std::size_t i = 0; i < cfg_.nodes; ++i) {
        node_keys_.push_back(node_keypair(i));
        node_index_[node_keys_.back().public_key] = i;
    }
    if (genesis_.authorities.empty()) {
        for (const auto& k : node_keys_) genesis_.authorities.push_back(k.public_key);
    }
    if (genesis_.genesis_timestamp_ms == 0) genesis_.genesis_timestamp_ms = kSimEpochMs;
    for (std::size_t i = 0; i < cfg_.nodes; ++i) {
        auto ncfg = cfg_.node;
        ncfg.epoch_ms = genesis_.genesis_timestamp_ms;
        if (auto it = cfg_.behaviors.find(i); it != cfg_.behaviors.end()) ncfg.behavior = it->second;
        nodes_.push_back(std::make_unique<FogNode>(node_keys_[i], genesis_, ncfg));
    }
    runtime_.resize(cfg_.nodes);
    start_nodes();
}

void Simulation::start_nodes() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (crashed(i)) continue;
        queue_.schedule(0, [this, i] {
            handle_outbox(i, nodes_[i]->start(now()));
            reschedule(i);
        });
    }
}

std::size_t Simulation::add_client(KeyPair key, ClientHandler handler) {
    Client c;
    c.key = key;
    c.handler = std::move(handler);
    c.keys = std::make_unique<channel::SharedKeyCache>(key);
    clients_.push_back(std::move(c));
    return clients_.size() - 1;
}

void Simulation::set_handler(std::size_t client, ClientHandler handler) {
    clients_.at(client).handler = std::move(handler);
}

std::optional<std::size_t> Simulation::client_of(std::size_t endpoint) const {
    if (endpoint < nodes_.size() || endpoint - nodes_.size() >= clients_.size()) return std::nullopt;
    return endpoint - nodes_.size();
}

crypto::AeadNonce Simulation::client_nonce(Client& c) {
    crypto::AeadNonce n{};
    std::copy_n(c.key.public_key.begin(), 4, n.begin());
    const std::uint64_t v = ++c.aead_counter;
    for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
    return n;
}

chain::Transaction Simulation::make_tx(std::size_t client, chain::Payload payload, std::uint64_t gas_limit) {
    auto& c = clients_.at(client);
    chain::Transaction tx;
    tx.timestamp_ms = now_ms();
    tx.payload = std::move(payload);
    tx.gas_limit = gas_limit;
    if (!tx.is_query()) tx.nonce = c.tx_nonce++;
    chain::sign_transaction(tx, c.key);
    return tx;
}

Digest Simulation::submit(std::size_t client, std::size_t node, const chain::Transaction& tx) {
    auto& c = clients_.at(client);
    const auto hash = chain::hash_tx(tx);
    channel::ChannelMessage m{now_ms(), ++c.channel_nonce[node], c.key.public_key,
                              chain::canonical_encode(tx)};

    RequestRecord rec;
    rec.client = client;
    rec.node = node;
    rec.query = tx.is_query();
    rec.sent_at = now();

    ClientPacket packet = m;
    if (cfg_.node.channel == node::ChannelMode::Secure) {
        const auto t0 = Clock::now();
        auto key = c.keys->key_for(node_keys_.at(node).public_key);
        auto env = channel::seal_message(m, c.key, key.value(), client_nonce(c));
        rec.compute_ns += elapsed_ns(t0);
        packet = std::move(env).value();
    }
    requests_.insert_or_assign(hash, rec);
    trace_.add(now(), "client_send", static_cast<std::int64_t>(client_endpoint(client)),
               static_cast<std::int64_t>(node), hash.hex().substr(0, 16));
    send_packet(client_endpoint(client), node, std::move(packet), TrafficClass::Client);
    return hash;
}

void Simulation::send_packet(std::size_t from_endpoint, std::size_t node, ClientPacket packet,
                             TrafficClass cls) {
    if (tap) tap(from_endpoint, node, packet);
    const auto d = net_.deliver(from_endpoint, node, cls, now());
    if (d.dropped) {
        trace_.add(now(), "drop", static_cast<std::int64_t>(from_endpoint), static_cast<std::int64_t>(node),
                   std::string(to_string(cls)));
        return;
    }
    queue_.schedule(d.arrival, [this, from_endpoint, node, p = std::move(packet), cls]() mutable {
        net_.mark_delivered();
        arrive(node, Pending{from_endpoint, std::move(p), cls});
    });
}

void Simulation::arrive(std::size_t node, Pending p) {
    if (crashed(node)) return;
    p.arrived = now();
    runtime_[node].inbox.push_back(std::move(p));
    if (!runtime_[node].busy) serve_next(node);
}

void Simulation::serve_next(std::size_t node) {
    auto& rt = runtime_[node];
    if (rt.inbox.empty()) {
        rt.busy = false;
        return;
    }
    rt.busy = true;
    Pending p = std::move(rt.inbox.front());
    rt.inbox.pop_front();
    auto& n = *nodes_[node];

    const auto t0 = Clock::now();
    node::Response resp = std::visit(
        [&](const auto& pkt) -> node::Response {
            using T = std::decay_t<decltype(pkt)>;
            if constexpr (std::is_same_v<T, channel::SecureEnvelope>) {
                return n.handle_envelope(pkt, now());
            } else {
                return n.handle_plain(pkt, now());
            }
        },
        p.packet);
    const auto handle_ns = elapsed_ns(t0);

    ClientEvent ev;
    ev.node = node;
    TimeUs service = cfg_.envelope_service_us;
    if (resp) {
        ev.tx_hash = resp->tx_hash;
        if (resp->kind == node::Accepted::Kind::Answered) {
            ev.kind = ClientEvent::Kind::Answer;
            ev.readings = resp->readings;
            service += cfg_.read_item_service_us * ev.readings.size();
        } else {
            ev.kind = ClientEvent::Kind::Ack;
        }
        if (auto it = requests_.find(ev.tx_hash); it != requests_.end() && p.cls == TrafficClass::Client) {
            it->second.accepted = true;
            it->second.compute_ns += handle_ns;
            if (!it->second.arrived_at) it->second.arrived_at = p.arrived;
        }
    } else {
        ev.kind = ClientEvent::Kind::Reject;
        ev.reason = resp.error();
    }
    trace_.add(now(), resp ? (ev.kind == ClientEvent::Kind::Answer ? "answer" : "admit") : "reject",
               static_cast<std::int64_t>(node), static_cast<std::int64_t>(p.from),
               resp ? ev.tx_hash.hex().substr(0, 16) : std::string(node::to_string(resp.error())));

    handle_outbox(node, n.drain());
    reschedule(node);

    const std::size_t from = p.from;
    queue_.schedule(now() + service, [this, node, from, ev]() mutable {
        ev.time = now();
        if (auto it = requests_.find(ev.tx_hash); it != requests_.end() && !it->second.served_at) {
            it->second.served_at = now();
        }
        reply(node, from, ev);
        serve_next(node);
    });
}

void Simulation::reply(std::size_t node, std::size_t endpoint, const ClientEvent& ev) {
    auto cid = client_of(endpoint);
    if (!cid) return;
    auto& c = clients_[*cid];
    std::uint64_t compute = 0;

    ClientPacket packet;
    auto body = encode_event(ev);
    if (cfg_.node.channel == node::ChannelMode::Secure) {
        const auto t0 = Clock::now();
        auto env = nodes_[node]->seal_reply(c.key.public_key, std::move(body), now());
        compute += elapsed_ns(t0);
        if (!env) return;
        packet = std::move(env).value();
    } else {
        packet = channel::ChannelMessage{nodes_[node]->now_ms(now()), 0, node_keys_[node].public_key,
                                         std::move(body)};
    }

    const auto d = net_.deliver(node, endpoint, TrafficClass::Client, now());
    if (d.dropped) {
        trace_.add(now(), "drop", static_cast<std::int64_t>(node), static_cast<std::int64_t>(endpoint), "client");
        return;
    }
    queue_.schedule(d.arrival, [this, node, cid = *cid, p = std::move(packet), compute]() {
        net_.mark_delivered();
        auto& c = clients_[cid];
        std::uint64_t spent = compute;
        ClientEvent ev;
        const auto t0 = Clock::now();
        if (const auto* env = std::get_if<channel::SecureEnvelope>(&p)) {
            auto key = c.keys->key_for(node_keys_[node].public_key);
            auto opened = channel::open_message(*env, key.value(), node_keys_[node].public_key);
            if (!opened) return;
            auto& last = c.reply_nonce[node];
            if (opened->nonce <= last) return;
            last = opened->nonce;
            ev = decode_event(opened->body);
        } else {
            ev = decode_event(std::get<channel::ChannelMessage>(p).body);
        }
        spent += elapsed_ns(t0);
        ev.node = node;
        ev.time = now();

        if (auto it = requests_.find(ev.tx_hash); it != requests_.end() && it->second.client == cid) {
            auto& rec = it->second;
            rec.compute_ns += spent;
            if (ev.kind == ClientEvent::Kind::Confirmed) {
                if (!rec.confirmed_at) rec.confirmed_at = now();
            } else if (!rec.responded_at) {
                rec.responded_at = now();
            }
        }
        trace_.add(now(), "client_recv", static_cast<std::int64_t>(client_endpoint(cid)),
                   static_cast<std::int64_t>(node),
                   std::to_string(static_cast<int>(ev.kind)) + " " + ev.tx_hash.hex().substr(0, 16));
        if (c.handler) c.handler(ev);
    });
}

void Simulation::handle_outbox(std::size_t node, node::Outbox&& out) {
    for (auto& p : out.peers) broadcast_peer(node, p.to, std::move(p.msg));
    for (const auto& a : out.alerts) {
        trace_.add(now(), "alert", static_cast<std::int64_t>(node), -1,
                   std::string(node::to_string(a.kind)) + " h=" + std::to_string(a.height) + " offender=" +
                       a.offender.hex().substr(0, 16) + " " + a.detail);
    }
    for (auto h : out.finalized_heights) {
        const auto& c = nodes_[node]->chain();
        trace_.add(now(), "finalize", static_cast<std::int64_t>(node), -1,
                   "h=" + std::to_string(h) + " " + c.hash_at(h).hex() + " txs=" +
                       std::to_string(c.at(h).transactions.size()));
    }
    for (auto& conf : out.confirmations) {
        auto it = requests_.find(conf.tx_hash);
        if (it == requests_.end()) continue;
        auto& rec = it->second;
        if (!rec.finalized_at) rec.finalized_at = conf.finalized_at;
        ClientEvent ev;
        ev.kind = ClientEvent::Kind::Confirmed;
        ev.node = node;
        ev.tx_hash = conf.tx_hash;
        ev.height = conf.height;
        if (conf.receipt) {
            ev.status = conf.receipt->status;
            ev.gas_used = conf.receipt->gas_used;
            ev.created_contract = conf.receipt->created_contract;
        }
        trace_.add(now(), "receipt", static_cast<std::int64_t>(node), static_cast<std::int64_t>(client_endpoint(rec.client)),
                   conf.tx_hash.hex().substr(0, 16) + " " +
                       (conf.receipt ? std::string(vm::to_string(conf.receipt->status)) + " gas=" +
                                           std::to_string(conf.receipt->gas_used)
                                     : std::string("skipped ") + std::string(vm::to_string(*conf.skipped))));
        reply(node, client_endpoint(rec.client), ev);
    }
}

void Simulation::broadcast_peer(std::size_t from, std::optional<PublicKey> to, node::PeerMessage msg) {
    const auto cls = class_of(msg);
    auto shared = std::make_shared<const node::PeerMessage>(std::move(msg));
    const auto& from_key = node_keys_[from].public_key;
    if (to) {
        auto it = node_index_.find(*to);
        if (it == node_index_.end()) return;
        deliver_peer(from, it->second, from_key, shared, cls);
        return;
    }
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
        if (j != from) deliver_peer(from, j, from_key, shared, cls);
    }
}

void Simulation::deliver_peer(std::size_t from, std::size_t to, const PublicKey& from_key,
                              std::shared_ptr<const node::PeerMessage> msg, TrafficClass cls) {
    const auto d = net_.deliver(from, to, cls, now());
    if (cfg_.trace_messages) {
        trace_.add(now(), d.dropped ? "drop" : "peer_send", static_cast<std::int64_t>(from),
                   static_cast<std::int64_t>(to), describe(*msg));
    }
    if (d.dropped) return;
    queue_.schedule(d.arrival, [this, to, from_key, msg = std::move(msg)] {
        net_.mark_delivered();
        if (crashed(to)) return;
        handle_outbox(to, nodes_[to]->on_peer_message(from_key, *msg, now()));
        reschedule(to);
    });
}

void Simulation::inject_peer(std::size_t from_endpoint, const PublicKey& from_key, std::size_t to_node,
                             node::PeerMessage msg) {
    auto shared = std::make_shared<const node::PeerMessage>(std::move(msg));
    trace_.add(now(), "attack_peer", static_cast<std::int64_t>(from_endpoint), static_cast<std::int64_t>(to_node),
               describe(*shared));
    deliver_peer(from_endpoint, to_node, from_key, std::move(shared), TrafficClass::Attacker);
}

void Simulation::reschedule(std::size_t node) {
    if (crashed(node)) return;
    auto& rt = runtime_[node];
    const TimeUs at = std::max(nodes_[node]->next_wakeup(), now());
    if (rt.timer_at && *rt.timer_at == at) return;
    rt.timer_at = at;
    const auto gen = ++rt.timer_gen;
    queue_.schedule(at, [this, node, gen] {
        auto& r = runtime_[node];
        if (r.timer_gen != gen) return;
        r.timer_at.reset();
        handle_outbox(node, nodes_[node]->tick(now()));
        if (nodes_[node]->next_wakeup() <= now()) {
            // Nothing changed; back off instead of spinning at a fixed time.
            r.timer_at = now() + 1000;
            const auto g = ++r.timer_gen;
            queue_.schedule(now() + 1000, [this, node, g] {
                if (runtime_[node].timer_gen != g) return;
                runtime_[node].timer_at.reset();
                handle_outbox(node, nodes_[node]->tick(now()));
                reschedule(node);
            });
            return;
        }
        reschedule(node);
    });
}

void Simulation::run_until(TimeUs t) {
    while (auto next = queue_.next_time()) {
        if (*next > t) break;
        queue_.step();
    }
}

bool Simulation::run_until(const std::function<bool()>& done, TimeUs deadline) {
    if (done()) return true;
    while (auto next = queue_.next_time()) {
        if (*next > deadline) break;
        queue_.step();
        if (done()) return true;
    }
    return done();
}

}  // namespace edgelinker::sim
