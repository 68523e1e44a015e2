// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "edgelinker/bench.hpp"
#include "edgelinker/channel.hpp"
#include "edgelinker/contract.hpp"
#include "edgelinker/crypto.hpp"
#include "edgelinker/scenario.hpp"
#include "edgelinker/sim.hpp"

namespace el = edgelinker;
using el::Bytes;
using el::PermissionId;
using el::PublicKey;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

// Runs `body`, enforcing a wall-clock budget in seconds (0 = no budget).
bool criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && budget_s > 0 && secs > budget_s) {
        o.pass = false;
        o.detail += " (over the " + std::to_string(static_cast<int>(budget_s)) + " s budget)";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2f s", secs);
    std::cout << (o.pass ? "PASS" : "FAIL") << " AC" << id << " " << name << ": " << o.detail << " [" << timing
              << "]" << std::endl;
    return o.pass;
}

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

el::crypto::KeyPair random_keypair(std::mt19937_64& rng) {
    std::array<std::uint8_t, 32> seed{};
    for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
    return el::crypto::generate_keypair(seed);
}

// ---- 1: permission table against a set-replay oracle ----------------------

Outcome permission_table() {
    using namespace el::vm;
    std::mt19937_64 rng(1);
    std::vector<PublicKey> pool;
    for (int i = 0; i < 6; ++i) pool.push_back(PublicKey::from_u8(static_cast<std::uint8_t>(i + 1)));
    const std::vector<PermissionId> perms{kPermitterPermission, kWritePermission, kReadPermission,
                                          PermissionId::from_u8(0x7f)};
    std::size_t ops = 0, mismatches = 0, guard_mutations = 0;
    for (int run = 0; run < 1000; ++run) {
        const auto deployer = pool[rng() % pool.size()];
        auto table = PermissionTable::initialize(deployer);
        std::map<PermissionId, std::set<PublicKey>> oracle{{kPermitterPermission, {deployer}}};
        const int len = 1 + static_cast<int>(rng() % 60);
        for (int i = 0; i < len; ++i, ++ops) {
            const auto caller = pool[rng() % pool.size()];
            const auto who = pool[rng() % pool.size()];
            const auto perm = perms[rng() % perms.size()];
            const bool allowed = oracle[kPermitterPermission].contains(caller);
            switch (rng() % 3) {
                case 0: {
                    const auto before = table;
                    const auto st = table.grant_permission(caller, perm, who);
                    if (allowed) oracle[perm].insert(who);
                    if (static_cast<bool>(st) != allowed) ++mismatches;
                    if (!allowed && !(table == before)) ++guard_mutations;
                    break;
                }
                case 1: {
                    const auto before = table;
                    const auto st = table.revoke_permission(caller, perm, who);
                    if (allowed) oracle[perm].erase(who);
                    if (static_cast<bool>(st) != allowed) ++mismatches;
                    if (!allowed && !(table == before)) ++guard_mutations;
                    break;
                }
                default:
                    break;
            }
            for (const auto& p : perms) {
                for (const auto& a : pool) {
                    if (table.has_permission(p, a) != oracle[p].contains(a)) ++mismatches;
                }
            }
        }
    }
    std::ostringstream d;
    d << "1000 sequences, " << ops << " ops, " << mismatches << " mismatches, " << guard_mutations
      << " guarded mutations";
    return {mismatches == 0 && guard_mutations == 0, d.str()};
}

// ---- 2: channel round trips, tamper rejection, key agreement --------------

Outcome channel_conformance() {
    using namespace el::channel;
    std::mt19937_64 rng(2);
    std::size_t round_trip_failures = 0;
    for (int i = 0; i < 10'000; ++i) {
        const auto a = random_keypair(rng), b = random_keypair(rng);
        ChannelMessage m{rng(), rng(), a.public_key, random_bytes(rng, rng() % 512)};
        auto env = seal_message(m, a, b.public_key);
        if (!env) {
            ++round_trip_failures;
            continue;
        }
        auto opened = open_message(*env, b, a.public_key);
        if (!opened || !(*opened == m)) ++round_trip_failures;
    }

    // A 256-byte envelope: hint plus ciphertext.
    const auto a = random_keypair(rng), b = random_keypair(rng);
    const std::size_t overhead =
        to_wire(seal_message(ChannelMessage{1, 1, a.public_key, {}}, a, b.public_key).value()).size();
    ChannelMessage m{1, 1, a.public_key, random_bytes(rng, 256 - overhead)};
    const auto env = seal_message(m, a, b.public_key).value();
    const auto wire = to_wire(env);
    std::size_t flips = 0, accepted = 0;
    for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
        auto w = wire;
        w[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        ++flips;
        auto e = from_wire(w);
        if (e && open_message(*e, b, a.public_key)) ++accepted;
    }

    std::size_t asymmetric = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto x = random_keypair(rng), y = random_keypair(rng);
        auto kx = el::crypto::derive_shared_key(x, y.public_key);
        auto ky = el::crypto::derive_shared_key(y, x.public_key);
        if (!kx || !ky || !(*kx == *ky)) ++asymmetric;
    }
    std::ostringstream d;
    d << "10000 round trips (" << round_trip_failures << " failed), " << flips << " bit flips over a " << wire.size()
      << "-byte envelope (" << accepted << " accepted), 1000 DH pairs (" << asymmetric << " asymmetric)";
    return {round_trip_failures == 0 && wire.size() == 256 && accepted == 0 && asymmetric == 0, d.str()};
}

// ---- 3: replaying 1000 captured envelopes --------------------------------

std::vector<Bytes> world_snapshot(const el::sim::Simulation& sim) {
    std::vector<Bytes> out;
    for (std::size_t i = 0; i < sim.node_count(); ++i) out.push_back(el::vm::canonical_encode(sim.node(i).world()));
    return out;
}

Outcome replay_defense() {
    using namespace el::sim;
    const auto patient = el::crypto::keypair_from_label("acceptance-patient");
    const auto attacker = el::crypto::keypair_from_label("acceptance-attacker");
    SimConfig cfg;
    cfg.nodes = 4;
    cfg.seed = 3;
    cfg.trace_messages = false;
    cfg.genesis.initial_balances[patient.public_key] = 10'000'000'000;
    Simulation sim(cfg);

    std::size_t confirmed = 0;
    const auto c = sim.add_client(patient, [&](const ClientEvent& e) {
        if (e.kind == ClientEvent::Kind::Confirmed) ++confirmed;
    });
    const auto mallory = sim.add_client(attacker);

    struct Captured {
        std::size_t node;
        std::uint64_t nonce;
        ClientPacket packet;
    };
    std::vector<Captured> captured;
    std::map<std::size_t, std::uint64_t> sent_to;
    sim.tap = [&](std::size_t from, std::size_t to, const ClientPacket& p) {
        if (from == sim.client_endpoint(c)) captured.push_back({to, ++sent_to[to], p});
    };

    const auto contract = el::vm::contract_address(patient.public_key, 0);
    constexpr std::size_t kTxs = 1000;
    for (std::size_t k = 0; k < kTxs; ++k) {
        sim.at(1'000 + k * 2'000, [&, k] {
            el::chain::Payload p;
            std::uint64_t gas = 100'000;
            if (k == 0) {
                p = el::chain::Deploy{};
                gas = 1'000'000;
            } else if (k == 1) {
                p = el::chain::Call{contract, std::string(el::vm::kMethodGrant),
                                    el::vm::encode_permission_args(el::vm::kWritePermission, patient.public_key)};
            } else if (k % 2 == 0) {
                p = el::chain::Call{contract, std::string(el::vm::kMethodAddReading),
                                    el::vm::encode_add_reading_args(k, static_cast<std::uint16_t>(60 + k % 40))};
            } else {
                p = el::chain::Transfer{PublicKey::from_u8(9), 1};
            }
            sim.submit(c, k % sim.node_count(), sim.make_tx(c, std::move(p), gas));
        });
    }
    if (!sim.run_until([&] { return confirmed == kTxs; }, 600'000'000)) {
        return fail("only " + std::to_string(confirmed) + "/1000 transactions confirmed");
    }
    sim.run_until(sim.now() + 10'000'000);
    if (captured.size() != kTxs) return fail("captured " + std::to_string(captured.size()) + " envelopes");

    const auto worlds_before = world_snapshot(sim);
    std::vector<std::uint64_t> admitted_before;
    for (std::size_t i = 0; i < sim.node_count(); ++i) admitted_before.push_back(sim.node(i).counters().admitted);

    const TimeUs start = sim.now();
    for (std::size_t k = 0; k < captured.size(); ++k) {
        sim.at(start + k * 1'000, [&, k] {
            sim.send_packet(sim.client_endpoint(mallory), captured[k].node, captured[k].packet,
                            TrafficClass::Attacker);
        });
    }
    sim.run_until(start + kTxs * 1'000 + 10'000'000);

    const auto worlds_after = world_snapshot(sim);
    std::size_t admitted_delta = 0, pending = 0;
    for (std::size_t i = 0; i < sim.node_count(); ++i) {
        admitted_delta += sim.node(i).counters().admitted - admitted_before[i];
        pending += sim.node(i).mempool().size();
    }
    std::size_t alerted = 0;
    for (const auto& cap : captured) {
        const auto& alerts = sim.node(cap.node).alerts();
        const bool hit = std::any_of(alerts.begin(), alerts.end(), [&](const el::node::Alert& a) {
            return a.kind == el::node::AlertKind::ReplayDetected && a.offender == patient.public_key &&
                   a.subject == cap.nonce;
        });
        alerted += hit ? 1 : 0;
    }
    const bool unchanged = worlds_before == worlds_after && admitted_delta == 0 && pending == 0;

    // The in-scenario attacker (replays during the live run) as a second view.
    el::scenario::ScenarioConfig sc;
    sc.writes = 5;
    sc.write_period_ms = 5'000;
    sc.trace_messages = false;
    const auto report = el::scenario::evaluate_attack(sc, el::scenario::AttackKind::Replay, 3);

    std::ostringstream d;
    d << kTxs << " envelopes replayed, world states " << (unchanged ? "unchanged" : "CHANGED") << ", " << alerted
      << "/" << kTxs << " with a ReplayDetected alert; live-replay scenario " << (report.pass() ? "ok" : "failed");
    return {unchanged && alerted == kTxs && report.pass(), d.str()};
}

// ---- 4: consensus safety with equivocators, liveness with crashes --------

Outcome consensus_safety_liveness() {
    std::size_t runs = 0, conflicts = 0, incomplete = 0, replays_bad = 0, flagged_runs = 0;
    std::uint64_t min_height = ~0ull;
    const std::size_t sizes[] = {4, 7, 10};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = sizes[seed % 3];
        const std::size_t f = (n - 1) / 3;
        el::scenario::ScenarioConfig cfg;
        cfg.nodes = n;
        cfg.writes = 3;
        cfg.write_period_ms = 4'000;
        cfg.duration_ms = 600'000;
        cfg.trace_messages = false;
        std::mt19937_64 rng(seed);
        while (cfg.equivocators.size() < f) cfg.equivocators.insert(rng() % n);
        auto r = el::scenario::run_scenario(cfg, 1'000 + seed);
        ++runs;
        if (!el::scenario::chains_consistent(r)) ++conflicts;
        if (!r.completed) ++incomplete;
        bool flagged = false;
        for (auto i : r.honest_nodes) {
            if (!r.replay_matches[i]) ++replays_bad;
            min_height = std::min(min_height, r.heights[i]);
            for (const auto& a : r.alerts[i]) flagged |= a.kind == el::node::AlertKind::Equivocation;
        }
        flagged_runs += flagged ? 1 : 0;
    }

    std::ostringstream live;
    bool liveness = true;
    for (const std::size_t n : sizes) {
        const std::size_t f = (n - 1) / 3;
        el::sim::SimConfig cfg;
        cfg.nodes = n;
        cfg.seed = 40 + n;
        cfg.trace_messages = false;
        // Consecutive proposers down: the worst case for round changes.
        for (std::size_t i = 1; i <= f; ++i) cfg.crashed.insert(i);
        el::sim::Simulation sim(cfg);
        sim.run_until(600'000'000);
        std::uint64_t h = ~0ull;
        for (std::size_t i = 0; i < n; ++i) {
            if (!sim.crashed(i)) h = std::min(h, sim.node(i).chain().height());
        }
        liveness = liveness && h >= 50;
        live << " n=" << n << ":" << h;
    }

    std::ostringstream d;
    d << runs << " equivocator runs, " << conflicts << " conflicting, " << incomplete << " incomplete, "
      << replays_bad << " replay mismatches, equivocation flagged in " << flagged_runs
      << ", min honest height " << min_height << "; heights after 10 sim-min with f crashed:" << live.str();
    return {conflicts == 0 && incomplete == 0 && replays_bad == 0 && liveness, d.str()};
}

// ---- 5: insertion attack leaves honest chains untouched -------------------

Outcome insertion_rejection() {
    std::size_t seeds = 0, failures = 0;
    std::string first_failure;
    for (std::uint64_t seed : {5, 6, 7}) {
        for (std::size_t n : {4, 7}) {
            el::scenario::ScenarioConfig cfg;
            cfg.nodes = n;
            cfg.writes = 4;
            cfg.write_period_ms = 5'000;
            cfg.trace_messages = false;
            auto report = el::scenario::evaluate_attack(cfg, el::scenario::AttackKind::Insertion, seed);
            ++seeds;
            if (!report.pass()) {
                ++failures;
                for (const auto& c : report.checks) {
                    if (!c.pass && first_failure.empty()) first_failure = c.name + " " + c.detail;
                }
            }
        }
    }
    std::ostringstream d;
    d << seeds << " insertion runs compared byte-for-byte with their baselines, " << failures << " differed";
    if (!first_failure.empty()) d << " (" << first_failure << ")";
    return {failures == 0, d.str()};
}

// ---- 6: gas figures and drain count ---------------------------------------

Outcome gas_accounting() {
    el::scenario::ScenarioConfig cfg;
    cfg.writes = 3;
    cfg.write_period_ms = 5'000;
    cfg.trace_messages = false;
    auto r = el::scenario::run_scenario(cfg, 6);
    const std::map<std::string, std::uint64_t> expected{
        {"deploy", 701'382}, {"add_reading", 48'182}, {"grant_read", 23'521}, {"revoke_read", 21'948}};
    std::set<std::string> seen;
    std::size_t wrong = 0;
    for (const auto& rec : r.receipts) {
        auto it = expected.find(rec.step);
        if (it == expected.end()) continue;
        seen.insert(rec.step);
        if (rec.gas_used != it->second || rec.status != el::vm::ExecStatus::Success) ++wrong;
    }

    std::ostringstream drains;
    bool drains_ok = true;
    for (std::uint64_t balance : {48'181ull, 48'182ull, 1'000'000ull, 2'409'100ull, 5'000'017ull}) {
        el::scenario::ScenarioConfig dc = cfg;
        dc.dos_balance = balance;
        auto a = el::scenario::inject_attack(dc, el::scenario::AttackKind::DoSFlood, 6);
        const std::size_t oracle = balance / 48'182;
        drains_ok = drains_ok && a.attack_stats.dos_processed == oracle;
        drains << " " << balance << "->" << a.attack_stats.dos_processed << "/" << oracle;
    }
    std::ostringstream d;
    d << seen.size() << "/4 receipt kinds seen, " << wrong << " off-table; drain (balance->processed/expected):"
      << drains.str();
    return {r.completed && seen.size() == 4 && wrong == 0 && drains_ok, d.str()};
}

// ---- 7: determinism of cmd_run --------------------------------------------

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string field;
        rows.emplace_back();
        while (std::getline(ss, field, ',')) rows.back().push_back(field);
    }
    return rows;
}

// Keeps only columns whose header does not start with "measured_".
std::vector<std::vector<std::string>> non_timing(const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) return rows;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
        if (rows[0][i].rfind("measured_", 0) != 0) keep.push_back(i);
    }
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        out.emplace_back();
        for (auto i : keep) out.back().push_back(i < r.size() ? r[i] : "");
    }
    return out;
}

Outcome determinism() {
    el::bench::RunPlan plan;
    plan.node_counts = {1, 5};
    plan.task_counts = {100, 200};
    plan.repetitions = 2;
    plan.workload = el::bench::Workload::Mixed;
    plan.seed = 42;
    const auto base = std::filesystem::temp_directory_path() / "edgelinker_acceptance";
    std::filesystem::remove_all(base);
    const auto a = el::bench::cmd_run(plan, base / "a");
    const auto b = el::bench::cmd_run(plan, base / "b");

    bool tips_equal = a.runs.size() == b.runs.size();
    for (std::size_t i = 0; tips_equal && i < a.runs.size(); ++i) tips_equal = a.runs[i].chain_tip == b.runs[i].chain_tip;
    std::size_t files_equal = 0, columns = 0;
    for (const char* file : {"summary.csv", "runs.csv", "alerts.csv"}) {
        const auto ra = non_timing(read_csv(base / "a" / file));
        const auto rb = non_timing(read_csv(base / "b" / file));
        files_equal += ra == rb ? 1 : 0;
        if (!ra.empty()) columns += ra[0].size();
    }
    std::filesystem::remove_all(base);
    std::ostringstream d;
    d << a.runs.size() << " runs twice, " << files_equal << "/3 CSV files identical on " << columns
      << " non-timing columns, final tips " << (tips_equal ? "identical" : "DIFFER");
    return {files_equal == 3 && tips_equal, d.str()};
}

// ---- 8: read throughput rises with node count ------------------------------

Outcome read_trend() {
    el::bench::RunPlan plan;
    plan.node_counts = {1, 5, 10, 15, 20};
    plan.task_counts = {500};
    plan.repetitions = 3;
    plan.workload = el::bench::Workload::Read;
    plan.seed = 42;
    const auto out = el::bench::cmd_run(plan, std::nullopt);
    bool increasing = out.cells.size() == 5;
    std::ostringstream d;
    d << "read TPS by nodes:";
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %zu=%.0f", out.cells[i].nodes, out.cells[i].tps_mean);
        d << buf;
        if (i > 0 && !(out.cells[i].tps_mean > out.cells[i - 1].tps_mean)) increasing = false;
        if (out.cells[i].confirmed_mean != 500) increasing = false;
    }
    return {increasing, d.str()};
}

// ---- 9: replaying the chain reproduces the live state ----------------------

Outcome state_replay() {
    using el::scenario::AttackKind;
    std::size_t scenarios = 0, nodes_checked = 0, mismatches = 0;
    auto check = [&](const el::scenario::ScenarioResult& r) {
        ++scenarios;
        for (auto i : r.live_nodes) {
            ++nodes_checked;
            if (!r.replay_matches[i]) ++mismatches;
        }
    };
    el::scenario::ScenarioConfig base;
    base.writes = 4;
    base.write_period_ms = 5'000;
    base.trace_messages = false;
    check(el::scenario::run_scenario(base, 9));
    {
        auto c = base;
        c.channel = el::node::ChannelMode::Plain;
        check(el::scenario::run_scenario(c, 9));
    }
    {
        auto c = base;
        c.nodes = 7;
        c.crashed = {2, 4};
        check(el::scenario::run_scenario(c, 9));
    }
    {
        auto c = base;
        c.nodes = 7;
        c.equivocators = {1};
        c.invalid_proposers = {3};
        check(el::scenario::run_scenario(c, 9));
    }
    {
        auto c = base;
        c.link.drop_probability = 0.02;
        check(el::scenario::run_scenario(c, 9));
    }
    for (auto k : {AttackKind::Replay, AttackKind::Eavesdrop, AttackKind::Insertion, AttackKind::DoSFlood,
                   AttackKind::Spoof}) {
        check(el::scenario::inject_attack(base, k, 9));
    }
    // The default configuration: ten writes a minute apart.
    el::scenario::ScenarioConfig full;
    full.trace_messages = false;
    check(el::scenario::run_scenario(full, 42));

    std::ostringstream d;
    d << scenarios << " scenarios, " << nodes_checked << " node states replayed, " << mismatches << " mismatches";
    return {mismatches == 0, d.str()};
}

// ---- 10: channel overhead report -------------------------------------------

Outcome channel_overhead() {
    const auto rep = el::bench::cmd_channel_overhead({64, 256, 1024, 4096, 16384, 65536}, 1000);
    std::ostringstream d;
    d << "overhead mean us by size:";
    for (const auto& r : rep.rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %zu=%.2f", r.size, r.overhead_mean_us);
        d << buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "; growth exponent %.3f", rep.growth_exponent);
    d << buf;
    return {rep.rows.size() == 6 && rep.overhead_positive && rep.at_most_linear, d.str()};
}

}  // namespace

int main() {
    el::crypto::ensure_initialized();
    int failed = 0;
    failed += !criterion(1, "permission table matches set-replay oracle", 5, permission_table);
    failed += !criterion(2, "channel round trip, tamper rejection, DH symmetry", 60, channel_conformance);
    failed += !criterion(3, "replayed envelopes change nothing and raise alerts", 0, replay_defense);
    failed += !criterion(4, "consensus safety and liveness", 300, consensus_safety_liveness);
    failed += !criterion(5, "insertion attack rejected", 0, insertion_rejection);
    failed += !criterion(6, "gas receipts and DoS drain", 0, gas_accounting);
    failed += !criterion(7, "cmd_run determinism", 0, determinism);
    failed += !criterion(8, "read throughput increases with nodes", 0, read_trend);
    failed += !criterion(9, "chain replay reproduces world state", 0, state_replay);
    failed += !criterion(10, "channel overhead report", 0, channel_overhead);
    std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
    return failed == 0 ? 0 : 1;
}
