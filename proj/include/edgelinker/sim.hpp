#pragma once

// Deterministic discrete-event simulation of devices, fog nodes and links.
//
// Time is virtual (microseconds). Endpoints 0..n-1 are fog nodes, n.. are
// client actors. Every random draw is a hash of (seed, link, traffic class,
// per-stream counter), so adding traffic of one class never perturbs the
// timing of another.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "edgelinker/channel.hpp"
#include "edgelinker/genesis.hpp"
#include "edgelinker/node.hpp"

namespace edgelinker::sim {

using TimeUs = std::uint64_t;
using crypto::KeyPair;
using node::FogNode;

inline constexpr std::uint64_t kSimEpochMs = 1'700'000'000'000;

std::uint64_t splitmix64(std::uint64_t x);

class EventQueue {
public:
    using Action = std::function<void()>;

    // Events at equal times run in scheduling order. Times in the past are
    // clamped to now.
    void schedule(TimeUs at, Action action);
    // Runs the earliest event; false when empty.
    bool step();
    std::optional<TimeUs> next_time() const;
    TimeUs now() const noexcept { return now_; }
    bool empty() const noexcept { return items_.empty(); }
    std::size_t size() const noexcept { return items_.size(); }
    std::uint64_t executed() const noexcept { return executed_; }

private:
    struct Item {
        TimeUs at;
        std::uint64_t seq;
        Action action;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };
    std::priority_queue<Item, std::vector<Item>, Later> items_;
    TimeUs now_ = 0;
    std::uint64_t seq_ = 0;
    std::uint64_t executed_ = 0;
};

struct LinkModel {
    TimeUs base_latency_us = 1000;
    TimeUs jitter_us = 200;  // uniform in [0, jitter]
    double drop_probability = 0.0;

    bool operator==(const LinkModel&) const = default;
};

enum class TrafficClass : std::uint8_t { Client, Consensus, Gossip, Alert, Sync, Attacker };

std::string_view to_string(TrafficClass c);

struct DeliveryOutcome {
    bool dropped = false;
    TimeUs arrival = 0;
};

struct NetworkCounters {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;
    std::uint64_t in_flight() const noexcept { return sent - delivered - dropped; }
};

class Network {
public:
    Network(LinkModel default_link, std::uint64_t seed) : default_(default_link), seed_(seed) {}

    void set_link(std::size_t from, std::size_t to, LinkModel link);
    void set_partitioned(std::size_t a, std::size_t b, bool partitioned);
    bool partitioned(std::size_t a, std::size_t b) const;
    const LinkModel& link(std::size_t from, std::size_t to) const;

    // Arrival = now + base + jitter, never earlier than the previous arrival
    // on the same (from, to, class) stream. Partitioned pairs always drop.
    DeliveryOutcome deliver(std::size_t from, std::size_t to, TrafficClass cls, TimeUs now);
    void mark_delivered() { ++counters_.delivered; }
    const NetworkCounters& counters() const noexcept { return counters_; }

private:
    struct Stream {
        std::uint64_t counter = 0;
        TimeUs last_arrival = 0;
    };
    LinkModel default_;
    std::uint64_t seed_;
    std::map<std::pair<std::size_t, std::size_t>, LinkModel> overrides_;
    std::set<std::pair<std::size_t, std::size_t>> partitions_;
    std::map<std::tuple<std::size_t, std::size_t, TrafficClass>, Stream> streams_;
    NetworkCounters counters_;
};

struct TraceEvent {
    TimeUs time = 0;
    std::string kind;
    std::int64_t node = -1;
    std::int64_t peer = -1;
    std::string detail;

    bool operator==(const TraceEvent&) const = default;
};

struct SimTrace {
    std::vector<TraceEvent> events;

    void add(TimeUs t, std::string kind, std::int64_t node, std::int64_t peer, std::string detail);
    std::string to_jsonl() const;
    std::string to_csv() const;
    std::size_t count(std::string_view kind) const;
};

using ClientPacket = std::variant<channel::SecureEnvelope, channel::ChannelMessage>;

struct ClientEvent {
    enum class Kind : std::uint8_t { Ack, Reject, Answer, Confirmed };
    Kind kind = Kind::Ack;
    std::size_t node = 0;
    Digest tx_hash;
    std::optional<node::RejectReason> reason;
    std::vector<vm::Reading> readings;
    std::uint64_t height = 0;
    // Confirmed only: ExecStatus, or skipped when absent.
    std::optional<vm::ExecStatus> status;
    std::uint64_t gas_used = 0;
    std::optional<Address> created_contract;
    TimeUs time = 0;
};

using ClientHandler = std::function<void(const ClientEvent&)>;

struct RequestRecord {
    std::size_t client = 0;
    std::size_t node = 0;
    bool query = false;
    TimeUs sent_at = 0;
    std::optional<TimeUs> arrived_at;
    std::optional<TimeUs> served_at;      // node finished processing
    std::optional<TimeUs> responded_at;   // reply reached the client
    std::optional<TimeUs> finalized_at;   // gateway node finalized the tx
    std::optional<TimeUs> confirmed_at;   // confirmation reached the client
    bool accepted = false;
    std::uint64_t compute_ns = 0;         // measured seal/open/handle time
};

struct SimConfig {
    std::size_t nodes = 4;
    std::uint64_t seed = 42;
    LinkModel link;
    // Authorities are filled with the node keys when left empty.
    GenesisConfig genesis;
    node::NodeConfig node;
    std::map<std::size_t, node::Behavior> behaviors;
    std::set<std::size_t> crashed;
    // Single-server queue per node for client traffic.
    TimeUs envelope_service_us = 200;
    TimeUs read_item_service_us = 5;
    bool trace_messages = true;
};

KeyPair node_keypair(std::size_t index);

class Simulation {
public:
    explicit Simulation(SimConfig cfg);

    std::size_t node_count() const noexcept { return nodes_.size(); }
    FogNode& node(std::size_t i) { return *nodes_.at(i); }
    const FogNode& node(std::size_t i) const { return *nodes_.at(i); }
    bool crashed(std::size_t i) const { return cfg_.crashed.contains(i); }
    const KeyPair& node_key(std::size_t i) const { return node_keys_.at(i); }
    const GenesisConfig& genesis() const noexcept { return genesis_; }
    const SimConfig& config() const noexcept { return cfg_; }

    std::size_t add_client(KeyPair key, ClientHandler handler = {});
    std::size_t client_endpoint(std::size_t client) const { return nodes_.size() + client; }
    const KeyPair& client_key(std::size_t client) const { return clients_.at(client).key; }
    void set_handler(std::size_t client, ClientHandler handler);

    // Signed transaction from `client`; non-query payloads take the next
    // account nonce.
    chain::Transaction make_tx(std::size_t client, chain::Payload payload, std::uint64_t gas_limit);
    // Wraps `tx` in a channel message with the client's next channel nonce
    // for `node` and sends it. Returns the tx hash.
    Digest submit(std::size_t client, std::size_t node, const chain::Transaction& tx);
    // Raw packet from any endpoint; used by attackers.
    void send_packet(std::size_t from_endpoint, std::size_t node, ClientPacket packet, TrafficClass cls);
    // Peer-protocol message from a non-node endpoint (rogue miner).
    void inject_peer(std::size_t from_endpoint, const PublicKey& from_key, std::size_t to_node,
                     node::PeerMessage msg);

    void at(TimeUs t, std::function<void()> fn) { queue_.schedule(t, std::move(fn)); }
    void run_until(TimeUs t);
    // Runs until `done` holds or the deadline passes; returns done().
    bool run_until(const std::function<bool()>& done, TimeUs deadline);

    TimeUs now() const noexcept { return queue_.now(); }
    std::uint64_t now_ms() const noexcept { return genesis_.genesis_timestamp_ms + now() / 1000; }
    std::uint64_t now_ms_at(TimeUs t) const noexcept { return genesis_.genesis_timestamp_ms + t / 1000; }

    SimTrace& trace() noexcept { return trace_; }
    const SimTrace& trace() const noexcept { return trace_; }
    const Network& network() const noexcept { return net_; }
    Network& network() noexcept { return net_; }
    const std::map<Digest, RequestRecord>& requests() const noexcept { return requests_; }
    std::uint64_t events_executed() const noexcept { return queue_.executed(); }

    // Observes every client packet leaving an endpoint.
    std::function<void(std::size_t from, std::size_t to, const ClientPacket&)> tap;

private:
    struct Client {
        KeyPair key;
        ClientHandler handler;
        std::map<std::size_t, std::uint64_t> channel_nonce;
        std::map<std::size_t, std::uint64_t> reply_nonce;
        std::uint64_t tx_nonce = 0;
        std::uint64_t aead_counter = 0;
        std::unique_ptr<channel::SharedKeyCache> keys;
    };
    struct Pending {
        std::size_t from;
        ClientPacket packet;
        TrafficClass cls;
        TimeUs arrived = 0;
    };
    struct NodeRuntime {
        std::deque<Pending> inbox;
        bool busy = false;
        std::optional<TimeUs> timer_at;
        std::uint64_t timer_gen = 0;
    };

    void start_nodes();
    void arrive(std::size_t node, Pending p);
    void serve_next(std::size_t node);
    void handle_outbox(std::size_t node, node::Outbox&& out);
    void broadcast_peer(std::size_t from, std::optional<PublicKey> to, node::PeerMessage msg);
    void deliver_peer(std::size_t from, std::size_t to, const PublicKey& from_key,
                      std::shared_ptr<const node::PeerMessage> msg, TrafficClass cls);
    void reschedule(std::size_t node);
    void reply(std::size_t node, std::size_t endpoint, const ClientEvent& ev);
    std::optional<std::size_t> client_of(std::size_t endpoint) const;
    crypto::AeadNonce client_nonce(Client& c);

    SimConfig cfg_;
    GenesisConfig genesis_;
    std::vector<KeyPair> node_keys_;
    std::map<PublicKey, std::size_t> node_index_;
    std::vector<std::unique_ptr<FogNode>> nodes_;
    std::vector<NodeRuntime> runtime_;
    std::vector<Client> clients_;
    EventQueue queue_;
    Network net_;
    SimTrace trace_;
    std::map<Digest, RequestRecord> requests_;
};

}  // namespace edgelinker::sim
