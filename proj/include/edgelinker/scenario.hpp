#pragma once

// Health-record access lifecycle on top of the simulator, plus the attack
// injectors that run alongside it.
//
// Canonical sequence: patient deploys the contract and grants itself WRITE,
// sends one add_reading per period, grants READ to the doctor, the doctor
// reads the history, the patient revokes, and the doctor's second read is
// denied.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edgelinker/sim.hpp"

namespace edgelinker::scenario {

enum class AttackKind : std::uint8_t { Replay, Eavesdrop, Insertion, DoSFlood, Spoof };

std::string_view to_string(AttackKind k);
std::optional<AttackKind> parse_attack_kind(std::string_view s);

struct ScenarioConfig {
    std::size_t nodes = 4;
    std::uint64_t seed = 42;
    std::uint64_t duration_ms = 3'600'000;  // hard stop
    std::uint64_t block_interval_ms = 1000;
    sim::LinkModel link;
    node::ChannelMode channel = node::ChannelMode::Secure;
    std::size_t writes = 10;
    std::uint64_t write_period_ms = 60'000;
    std::set<std::size_t> crashed;
    std::set<std::size_t> equivocators;
    std::set<std::size_t> invalid_proposers;
    std::optional<AttackKind> attack;
    std::uint64_t dos_balance = 1'000'000;
    std::size_t dos_attempts = 0;  // 0: five more than the balance can pay for
    bool trace_messages = true;
};

// Throws ConfigError on malformed or inconsistent input.
ScenarioConfig parse_scenario_json(std::string_view text);
std::string scenario_to_json(const ScenarioConfig& cfg);
void validate(const ScenarioConfig& cfg);

struct ReceiptLog {
    std::string step;
    Digest tx_hash;
    std::uint64_t height = 0;
    std::optional<vm::ExecStatus> status;
    std::uint64_t gas_used = 0;
};

struct AttackStats {
    std::size_t captured = 0;
    std::size_t sent = 0;
    std::map<node::RejectReason, std::size_t> rejections;
    std::size_t accepted = 0;
    std::size_t replay_alerts = 0;
    std::size_t eavesdrop_opened = 0;
    std::size_t dos_processed = 0;
    std::size_t dos_expected = 0;
    std::uint64_t dos_final_balance = 0;
    std::size_t insertion_alerting_nodes = 0;
    bool worlds_unchanged = true;
};

struct ScenarioResult {
    sim::SimTrace trace;
    bool completed = false;
    std::optional<Address> contract;
    std::vector<ReceiptLog> receipts;
    std::optional<std::size_t> first_read_count;
    std::optional<node::RejectReason> first_read_reject;
    std::optional<std::size_t> second_read_count;
    std::optional<node::RejectReason> second_read_reject;
    std::size_t confirmed_writes = 0;

    std::vector<std::size_t> live_nodes;
    // Live nodes without configured misbehavior.
    std::vector<std::size_t> honest_nodes;
    // Per node, indexed by node id; empty for crashed nodes.
    std::vector<Bytes> chain_bytes;
    std::vector<Digest> tips;
    std::vector<std::uint64_t> heights;
    std::vector<Bytes> worlds;
    std::vector<bool> replay_matches;
    std::vector<std::vector<node::Alert>> alerts;

    PublicKey patient;
    PublicKey doctor;
    PublicKey attacker;
    std::optional<AttackKind> attack;
    AttackStats attack_stats;
    sim::NetworkCounters network;
    sim::TimeUs end_time_us = 0;
};

ScenarioResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed);
ScenarioResult inject_attack(const ScenarioConfig& cfg, AttackKind attack, std::uint64_t seed);

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct AttackReport {
    AttackKind kind;
    std::vector<Check> checks;
    bool pass() const;
};

// Runs the attack and, where needed, an attack-free baseline at the same seed.
AttackReport evaluate_attack(const ScenarioConfig& cfg, AttackKind attack, std::uint64_t seed);

// Safety check: every pair of honest chains agrees on the common prefix.
bool chains_consistent(const ScenarioResult& r);

}  // namespace edgelinker::scenario
