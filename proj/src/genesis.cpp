#include "edgelinker/genesis.hpp"

#include <json.hpp>

#include "edgelinker/codec.hpp"

namespace edgelinker {

using nlohmann::json;

namespace {

PublicKey parse_key(const std::string& hex, const char* what) {
    auto k = PublicKey::parse_hex(hex);
    if (!k) throw ConfigError(std::string("invalid 32-byte hex for ") + what + ": " + hex);
    return *k;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

GenesisConfig parse_genesis_json(std::string_view json_text) {
    GenesisConfig cfg;
    try {
        const auto j = json::parse(json_text);
        cfg.chain_id = get_or<std::string>(j, "chain_id", cfg.chain_id);
        for (const auto& a : j.at("authorities")) {
            cfg.authorities.push_back(parse_key(a.get<std::string>(), "authority"));
        }
        if (j.contains("initial_balances")) {
            for (const auto& [k, v] : j.at("initial_balances").items()) {
                cfg.initial_balances[parse_key(k, "balance address")] = v.get<std::uint64_t>();
            }
        }
        if (j.contains("gas_schedule")) {
            const auto& g = j.at("gas_schedule");
            auto& s = cfg.gas_schedule;
            s.deploy = get_or(g, "deploy", s.deploy);
            s.add_data = get_or(g, "add_data", s.add_data);
            s.grant = get_or(g, "grant", s.grant);
            s.revoke = get_or(g, "revoke", s.revoke);
            s.read_query = get_or(g, "read_query", s.read_query);
            s.transfer = get_or(g, "transfer", s.transfer);
        }
        cfg.block_interval_ms = get_or(j, "block_interval_ms", cfg.block_interval_ms);
        cfg.max_txs = get_or(j, "max_txs", cfg.max_txs);
        cfg.genesis_timestamp_ms = get_or(j, "genesis_timestamp_ms", cfg.genesis_timestamp_ms);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("genesis config: ") + e.what());
    }
    if (cfg.authorities.empty()) throw ConfigError("genesis config: authority set is empty");
    if (!cfg.gas_schedule.all_positive()) throw ConfigError("genesis config: gas costs must be positive");
    if (cfg.block_interval_ms == 0) throw ConfigError("genesis config: block_interval_ms must be > 0");
    if (cfg.max_txs == 0) throw ConfigError("genesis config: max_txs must be > 0");
    return cfg;
}

std::string genesis_to_json(const GenesisConfig& cfg) {
    json j;
    j["chain_id"] = cfg.chain_id;
    j["authorities"] = json::array();
    for (const auto& a : cfg.authorities) j["authorities"].push_back(a.hex());
    j["initial_balances"] = json::object();
    for (const auto& [k, v] : cfg.initial_balances) j["initial_balances"][k.hex()] = v;
    const auto& s = cfg.gas_schedule;
    j["gas_schedule"] = {{"deploy", s.deploy},         {"add_data", s.add_data},
                         {"grant", s.grant},           {"revoke", s.revoke},
                         {"read_query", s.read_query}, {"transfer", s.transfer}};
    j["block_interval_ms"] = cfg.block_interval_ms;
    j["max_txs"] = cfg.max_txs;
    j["genesis_timestamp_ms"] = cfg.genesis_timestamp_ms;
    return j.dump(2);
}

Bytes canonical_encode(const GenesisConfig& cfg) {
    Encoder enc;
    enc.str(cfg.chain_id);
    enc.count(cfg.authorities.size());
    for (const auto& a : cfg.authorities) enc.fixed(a);
    enc.count(cfg.initial_balances.size());
    for (const auto& [k, v] : cfg.initial_balances) enc.fixed(k).u64(v);
    const auto& s = cfg.gas_schedule;
    enc.u64(s.deploy).u64(s.add_data).u64(s.grant).u64(s.revoke).u64(s.read_query).u64(s.transfer);
    enc.u64(cfg.block_interval_ms).u64(cfg.max_txs).u64(cfg.genesis_timestamp_ms);
    return std::move(enc).take();
}

chain::Block make_genesis_block(const GenesisConfig& cfg) {
    chain::Block g;
    g.header.height = 0;
    g.header.timestamp_ms = cfg.genesis_timestamp_ms;
    g.header.tx_root = chain::compute_tx_root({});
    g.header.proposer = PublicKey{crypto::sha256(canonical_encode(cfg)).bytes};
    return g;
}

vm::WorldState genesis_world_state(const GenesisConfig& cfg) {
    vm::WorldState ws;
    for (const auto& [addr, amount] : cfg.initial_balances) ws.accounts[addr].balance = amount;
    return ws;
}

vm::WorldState replay_chain(const chain::Chain& chain, const GenesisConfig& cfg) {
    auto ws = genesis_world_state(cfg);
    for (std::size_t h = 1; h < chain.size(); ++h) {
        vm::apply_block(ws, chain.at(h), cfg.gas_schedule);
    }
    return ws;
}

}  // namespace edgelinker
