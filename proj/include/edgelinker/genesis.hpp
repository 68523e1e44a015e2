#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edgelinker/chain.hpp"
#include "edgelinker/contract.hpp"

namespace edgelinker {

struct GenesisConfig {
    std::string chain_id = "edgelinker-sim";
    std::vector<PublicKey> authorities;
    std::map<Address, std::uint64_t> initial_balances;
    vm::GasSchedule gas_schedule;
    std::uint64_t block_interval_ms = 1000;
    std::size_t max_txs = chain::kDefaultMaxTxs;
    std::uint64_t genesis_timestamp_ms = 0;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// JSON form:
// { "chain_id", "authorities": [hex], "initial_balances": {hex: amount},
//   "gas_schedule": {deploy, add_data, grant, revoke, read_query, transfer},
//   "block_interval_ms", "max_txs" }
GenesisConfig parse_genesis_json(std::string_view json_text);
std::string genesis_to_json(const GenesisConfig& cfg);

Bytes canonical_encode(const GenesisConfig& cfg);

// Height 0, zero prev_hash, empty body; the proposer field carries the
// digest of the genesis config so distinct configs yield distinct chains.
chain::Block make_genesis_block(const GenesisConfig& cfg);

vm::WorldState genesis_world_state(const GenesisConfig& cfg);

// From-genesis replay of every finalized block.
vm::WorldState replay_chain(const chain::Chain& chain, const GenesisConfig& cfg);

}  // namespace edgelinker
