// edgelinker: benchmark, attack and scenario runner.
//
//   edgelinker run --nodes 1,5,10 --tasks 100,500 --reps 5 --workload read --channel secure --seed 42 --out results/
//   edgelinker channel-overhead --sizes 64,1024,65536 --samples 1000
//   edgelinker attack --kind replay --config scenario.json
//   edgelinker scenario --config scenario.json --trace-out trace.jsonl
//
// EDGELINKER_SEED replaces the seed from the config file or the default;
// an explicit --seed still wins.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "edgelinker/bench.hpp"
#include "edgelinker/genesis.hpp"
#include "edgelinker/scenario.hpp"

namespace el = edgelinker;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("EDGELINKER_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        std::size_t pos = 0;
        const auto seed = std::stoull(v, &pos);
        if (pos != std::string_view(v).size()) throw std::invalid_argument("trailing characters");
        return seed;
    } catch (const std::exception&) {
        throw el::ConfigError(std::string("EDGELINKER_SEED is not an unsigned integer: ") + v);
    }
}

el::scenario::ScenarioConfig load_scenario(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream f(path);
    if (!f) throw el::ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return el::scenario::parse_scenario_json(ss.str());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw el::ConfigError("cannot write " + path);
    f << text;
}

int do_run(const std::vector<std::size_t>& nodes, const std::vector<std::size_t>& tasks, std::size_t reps,
           const std::string& workload, const std::string& channel, std::optional<std::uint64_t> seed,
           std::uint64_t block_interval_ms, const std::string& out) {
    el::bench::RunPlan plan;
    plan.node_counts = nodes;
    plan.task_counts = tasks;
    plan.repetitions = reps;
    auto w = el::bench::parse_workload(workload);
    if (!w) throw el::ConfigError("unknown workload: " + workload);
    plan.workload = *w;
    auto c = el::node::parse_channel_mode(channel);
    if (!c) throw el::ConfigError("unknown channel mode: " + channel);
    plan.channel = *c;
    if (seed) {
        plan.seed = *seed;
    } else if (auto e = env_seed()) {
        plan.seed = *e;
    }
    plan.block_interval_ms = block_interval_ms;

    auto result = el::bench::cmd_run(plan, std::filesystem::path(out));
    std::cout << el::bench::summary_header() << '\n';
    for (const auto& cell : result.cells) std::cout << el::bench::summary_row(cell) << '\n';
    std::size_t incomplete = 0;
    for (const auto& r : result.runs) incomplete += r.completed ? 0 : 1;
    if (incomplete) std::cerr << incomplete << " run(s) hit the simulation deadline before finishing\n";
    std::cerr << "wrote " << out << "/{summary.csv,runs.csv,alerts.csv,manifest.json}\n";
    return 0;
}

int do_overhead(const std::vector<std::size_t>& sizes, std::size_t samples, const std::string& out) {
    auto report = el::bench::cmd_channel_overhead(sizes, samples, env_seed().value_or(42));
    const auto csv = report.to_csv();
    std::cout << csv;
    std::cout << "growth_exponent," << report.growth_exponent << '\n';
    std::cout << "overhead_positive," << (report.overhead_positive ? "yes" : "no") << '\n';
    std::cout << "at_most_linear," << (report.at_most_linear ? "yes" : "no") << '\n';
    if (!out.empty()) write_text(out, csv);
    return 0;
}

int do_attack(const std::string& kind, const std::string& config) {
    auto k = el::scenario::parse_attack_kind(kind);
    if (!k) throw el::ConfigError("unknown attack kind: " + kind);
    auto cfg = load_scenario(config);
    if (auto e = env_seed()) cfg.seed = *e;
    auto report = el::scenario::evaluate_attack(cfg, *k, cfg.seed);
    for (const auto& c : report.checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name;
        if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
        std::cout << '\n';
    }
    std::cout << (report.pass() ? "PASS" : "FAIL") << " attack " << el::scenario::to_string(*k) << '\n';
    return report.pass() ? 0 : 1;
}

int do_scenario(const std::string& config, const std::string& trace_out) {
    auto cfg = load_scenario(config);
    if (auto e = env_seed()) cfg.seed = *e;
    auto r = cfg.attack ? el::scenario::inject_attack(cfg, *cfg.attack, cfg.seed)
                        : el::scenario::run_scenario(cfg, cfg.seed);

    std::cout << "completed: " << (r.completed ? "yes" : "no") << '\n';
    if (r.contract) std::cout << "contract: " << r.contract->hex() << '\n';
    for (const auto& rec : r.receipts) {
        std::cout << "receipt " << rec.step << " h=" << rec.height << " "
                  << (rec.status ? std::string(el::vm::to_string(*rec.status)) : std::string("skipped"))
                  << " gas=" << rec.gas_used << '\n';
    }
    std::cout << "confirmed writes: " << r.confirmed_writes << '\n';
    if (r.first_read_count) std::cout << "first read: " << *r.first_read_count << " readings\n";
    if (r.first_read_reject) std::cout << "first read rejected: " << el::node::to_string(*r.first_read_reject) << '\n';
    if (r.second_read_count) std::cout << "second read: " << *r.second_read_count << " readings\n";
    if (r.second_read_reject) {
        std::cout << "second read rejected: " << el::node::to_string(*r.second_read_reject) << '\n';
    }
    for (auto i : r.live_nodes) {
        std::cout << "node " << i << " height=" << r.heights[i] << " tip=" << r.tips[i].hex().substr(0, 16)
                  << " replay=" << (r.replay_matches[i] ? "match" : "MISMATCH") << " alerts=" << r.alerts[i].size()
                  << '\n';
    }
    std::cout << "chains consistent: " << (el::scenario::chains_consistent(r) ? "yes" : "no") << '\n';

    if (!trace_out.empty()) {
        const bool csv = trace_out.size() >= 4 && trace_out.substr(trace_out.size() - 4) == ".csv";
        write_text(trace_out, csv ? r.trace.to_csv() : r.trace.to_jsonl());
        std::cerr << "wrote " << r.trace.events.size() << " trace events to " << trace_out << '\n';
    }
    return r.completed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EdgeLinker fog-node blockchain simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run read/write workloads and write CSV results");
    std::vector<std::size_t> nodes{1, 5, 10, 15, 20};
    std::vector<std::size_t> tasks{100, 200, 300, 400, 500};
    std::size_t reps = 5;
    std::string workload = "write";
    std::string channel = "secure";
    std::optional<std::uint64_t> seed;
    std::uint64_t block_interval_ms = 1000;
    std::string out = "results";
    run->add_option("--nodes", nodes, "node counts")->delimiter(',');
    run->add_option("--tasks", tasks, "task counts")->delimiter(',');
    run->add_option("--reps", reps, "repetitions per cell");
    run->add_option("--workload", workload, "read, write or mixed");
    run->add_option("--channel", channel, "secure or plain");
    run->add_option("--seed", seed, "base seed");
    run->add_option("--block-interval-ms", block_interval_ms, "block interval");
    run->add_option("--out", out, "output directory");

    auto* overhead = app.add_subcommand("channel-overhead", "measure secure vs plain channel cost");
    std::vector<std::size_t> sizes{64, 256, 1024, 4096, 16384, 65536};
    std::size_t samples = 1000;
    std::string overhead_out;
    overhead->add_option("--sizes", sizes, "message sizes in bytes")->delimiter(',');
    overhead->add_option("--samples", samples, "samples per size (>= 100)");
    overhead->add_option("--out", overhead_out, "CSV output file");

    auto* attack = app.add_subcommand("attack", "run an attack scenario and check the defence");
    std::string kind;
    std::string attack_config;
    attack->add_option("--kind", kind, "replay, eavesdrop, insertion, dos or spoof")->required();
    attack->add_option("--config", attack_config, "scenario JSON");

    auto* scen = app.add_subcommand("scenario", "run the health-record scenario");
    std::string scenario_config;
    std::string trace_out;
    scen->add_option("--config", scenario_config, "scenario JSON");
    scen->add_option("--trace-out", trace_out, "trace file (.jsonl or .csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return do_run(nodes, tasks, reps, workload, channel, seed, block_interval_ms, out);
        if (*overhead) return do_overhead(sizes, samples, overhead_out);
        if (*attack) return do_attack(kind, attack_config);
        if (*scen) return do_scenario(scenario_config, trace_out);
    } catch (const el::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
