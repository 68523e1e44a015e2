#include "edgelinker/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "edgelinker/channel.hpp"
#include "edgelinker/contract.hpp"
#include "edgelinker/crypto.hpp"

namespace edgelinker::bench {

namespace {

constexpr std::uint64_t kOwnerBalance = 1'000'000'000'000'000;
constexpr std::uint64_t kDeployGasLimit = 1'000'000;
constexpr std::uint64_t kCallGasLimit = 100'000;
constexpr sim::TimeUs kSetupDeadlineUs = 120'000'000;
constexpr sim::TimeUs kTaskDeadlineUs = 600'000'000;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

struct Stats {
    double mean = 0;
    double stddev = 0;
};

// Sample standard deviation; zero for fewer than two values.
Stats stats_of(const std::vector<double>& v) {
    Stats s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

double mean_of(const std::vector<double>& v) { return stats_of(v).mean; }

double p99_of(std::vector<double> v) {
    if (v.empty()) return 0;
    const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(v.size()))) - 1;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

std::string git_commit() {
    std::string out;
    if (FILE* p = popen("git rev-parse HEAD 2>/dev/null", "r")) {
        char buf[128];
        while (std::fgets(buf, sizeof buf, p)) out += buf;
        pclose(p);
    }
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << content;
}

bool is_write_task(Workload w, std::size_t k) {
    switch (w) {
        case Workload::Write: return true;
        case Workload::Read: return false;
        case Workload::Mixed: return k % 2 == 0;
    }
    return true;
}

}  // namespace

std::string_view to_string(Workload w) {
    switch (w) {
        case Workload::Read: return "read";
        case Workload::Write: return "write";
        case Workload::Mixed: return "mixed";
    }
    return "?";
}

std::optional<Workload> parse_workload(std::string_view s) {
    if (s == "read") return Workload::Read;
    if (s == "write") return Workload::Write;
    if (s == "mixed") return Workload::Mixed;
    return std::nullopt;
}

void RunPlan::validate() const {
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (node_counts.empty()) throw ConfigError("node_counts is empty");
    if (task_counts.empty()) throw ConfigError("task_counts is empty");
    for (auto n : node_counts) {
        if (n < 1) throw ConfigError("node count must be at least 1");
    }
    for (auto t : task_counts) {
        if (t < 1) throw ConfigError("task count must be at least 1");
    }
    if (block_interval_ms == 0) throw ConfigError("block_interval_ms must be positive");
    if (link.drop_probability < 0 || link.drop_probability >= 1) {
        throw ConfigError("drop_probability must be in [0, 1)");
    }
}

MetricsRecord run_workload(const RunPlan& plan, std::size_t nodes, std::size_t tasks, std::size_t rep) {
    MetricsRecord rec;
    rec.workload = plan.workload;
    rec.channel = plan.channel;
    rec.nodes = nodes;
    rec.tasks = tasks;
    rec.rep = rep;
    rec.seed = plan.seed + rep;
    rec.run_id = std::string(to_string(plan.workload)) + "-" + std::string(node::to_string(plan.channel)) +
                 "-n" + std::to_string(nodes) + "-t" + std::to_string(tasks) + "-r" + std::to_string(rep);

    const auto owner_key = crypto::keypair_from_label("bench-owner");

    sim::SimConfig sc;
    sc.nodes = nodes;
    sc.seed = rec.seed;
    sc.link = plan.link;
    sc.genesis.block_interval_ms = plan.block_interval_ms;
    sc.genesis.initial_balances[owner_key.public_key] = kOwnerBalance;
    sc.node.channel = plan.channel;
    sc.trace_messages = false;
    sim::Simulation s(std::move(sc));

    std::set<Digest> pending_setup;
    std::set<Digest> pending_tasks;
    std::set<Digest> successful;
    bool setup_failed = false;
    bool setup_sent = false;

    const auto client = s.add_client(owner_key, [&](const sim::ClientEvent& ev) {
        switch (ev.kind) {
            case sim::ClientEvent::Kind::Ack: return;
            case sim::ClientEvent::Kind::Reject:
                if (pending_setup.erase(ev.tx_hash)) setup_failed = true;
                pending_tasks.erase(ev.tx_hash);
                return;
            case sim::ClientEvent::Kind::Answer:
                if (pending_tasks.erase(ev.tx_hash)) successful.insert(ev.tx_hash);
                return;
            case sim::ClientEvent::Kind::Confirmed: {
                const bool ok = ev.status == vm::ExecStatus::Success;
                if (pending_setup.erase(ev.tx_hash) && !ok) setup_failed = true;
                if (pending_tasks.erase(ev.tx_hash) && ok) successful.insert(ev.tx_hash);
                return;
            }
        }
    });
    const auto contract = vm::contract_address(owner_key.public_key, 0);

    // Contract setup through node 0: deploy, self-grant WRITE, seed readings.
    s.at(10'000, [&] {
        auto submit = [&](chain::Payload p, std::uint64_t gas) {
            pending_setup.insert(s.submit(client, 0, s.make_tx(client, std::move(p), gas)));
        };
        submit(chain::Deploy{chain::ContractKind::HealthRecord, {}}, kDeployGasLimit);
        submit(chain::Call{contract, std::string(vm::kMethodGrant),
                           vm::encode_permission_args(vm::kWritePermission, owner_key.public_key)},
               kCallGasLimit);
        if (plan.workload != Workload::Write) {
            for (std::size_t i = 0; i < plan.seed_readings; ++i) {
                submit(chain::Call{contract, std::string(vm::kMethodAddReading),
                                   vm::encode_add_reading_args(s.now_ms() + i, static_cast<std::uint16_t>(60 + i % 40))},
                       kCallGasLimit);
            }
        }
        setup_sent = true;
    });
    const bool setup_done =
        s.run_until([&] { return setup_sent && pending_setup.empty(); }, kSetupDeadlineUs);
    if (!setup_done || setup_failed) {
        rec.sim_elapsed_us = s.now();
        return rec;
    }

    const sim::TimeUs t_start = s.now() + 1000;
    std::vector<Digest> task_hashes(tasks);
    std::size_t submitted = 0;
    for (std::size_t k = 0; k < tasks; ++k) {
        s.at(t_start + k * plan.submit_spacing_us, [&, k] {
            const std::size_t gateway = k % nodes;
            chain::Transaction tx;
            if (is_write_task(plan.workload, k)) {
                tx = s.make_tx(client,
                               chain::Call{contract, std::string(vm::kMethodAddReading),
                                           vm::encode_add_reading_args(s.now_ms(), static_cast<std::uint16_t>(50 + k % 100))},
                               kCallGasLimit);
            } else {
                // from_ts varies per task so that every query has its own hash.
                tx = s.make_tx(client, chain::Query{contract, k, std::numeric_limits<std::uint64_t>::max()}, 0);
            }
            pending_tasks.insert(chain::hash_tx(tx));
            task_hashes[k] = s.submit(client, gateway, tx);
            ++submitted;
        });
    }
    rec.completed = s.run_until([&] { return submitted == tasks && pending_tasks.empty(); },
                                t_start + kTaskDeadlineUs);

    std::vector<double> delays, times;
    double compute_ns = 0;
    sim::TimeUs last_done = t_start;
    for (const auto& h : task_hashes) {
        auto it = s.requests().find(h);
        if (it == s.requests().end()) continue;
        const auto& r = it->second;
        compute_ns += static_cast<double>(r.compute_ns);
        if (!successful.contains(h) || !r.arrived_at) continue;
        if (r.query) {
            if (!r.served_at || !r.responded_at) continue;
            delays.push_back(static_cast<double>(*r.served_at - *r.arrived_at));
            times.push_back(static_cast<double>(*r.responded_at - r.sent_at));
            last_done = std::max(last_done, *r.responded_at);
        } else {
            if (!r.finalized_at || !r.confirmed_at) continue;
            delays.push_back(static_cast<double>(*r.finalized_at - *r.arrived_at));
            times.push_back(static_cast<double>(*r.confirmed_at - r.sent_at));
            last_done = std::max(last_done, *r.confirmed_at);
        }
    }
    rec.confirmed = delays.size();
    rec.sim_elapsed_us = last_done - t_start;
    rec.processing_delay_us = mean_of(delays);
    rec.processing_time_us = mean_of(times);
    rec.throughput_tps = rec.sim_elapsed_us == 0
                             ? 0
                             : static_cast<double>(rec.confirmed) / (static_cast<double>(rec.sim_elapsed_us) / 1e6);
    rec.measured_compute_us = tasks == 0 ? 0 : compute_ns / 1000.0 / static_cast<double>(tasks);

    const auto& c = s.node(0).chain();
    rec.chain_height = c.height();
    rec.chain_tip = c.tip_hash();
    for (std::size_t i = 0; i < s.node_count(); ++i) {
        for (const auto& a : s.node(i).alerts()) rec.alerts.push_back(a);
    }
    return rec;
}

CellSummary summarize(const std::vector<MetricsRecord>& reps) {
    CellSummary c;
    if (reps.empty()) return c;
    c.workload = reps.front().workload;
    c.channel = reps.front().channel;
    c.nodes = reps.front().nodes;
    c.tasks = reps.front().tasks;
    c.reps = reps.size();
    c.seed = reps.front().seed;

    std::vector<double> confirmed, delay, time, tps, compute;
    Bytes tips;
    for (const auto& r : reps) {
        confirmed.push_back(static_cast<double>(r.confirmed));
        delay.push_back(r.processing_delay_us);
        time.push_back(r.processing_time_us);
        tps.push_back(r.throughput_tps);
        compute.push_back(r.measured_compute_us);
        tips.insert(tips.end(), r.chain_tip.begin(), r.chain_tip.end());
    }
    c.confirmed_mean = mean_of(confirmed);
    auto d = stats_of(delay);
    c.delay_mean = d.mean;
    c.delay_std = d.stddev;
    auto t = stats_of(time);
    c.time_mean = t.mean;
    c.time_std = t.stddev;
    auto p = stats_of(tps);
    c.tps_mean = p.mean;
    c.tps_std = p.stddev;
    c.chain_digest = crypto::sha256(tips);
    auto m = stats_of(compute);
    c.compute_mean = m.mean;
    c.compute_std = m.stddev;
    return c;
}

std::string summary_header() {
    return "workload,channel,nodes,tasks,reps,seed,confirmed_mean,"
           "sim_processing_delay_us_mean,sim_processing_delay_us_std,"
           "sim_processing_time_us_mean,sim_processing_time_us_std,"
           "sim_throughput_tps_mean,sim_throughput_tps_std,chain_digest,"
           "measured_compute_us_mean,measured_compute_us_std";
}

std::string summary_row(const CellSummary& c) {
    std::ostringstream o;
    o << to_string(c.workload) << ',' << node::to_string(c.channel) << ',' << c.nodes << ',' << c.tasks << ','
      << c.reps << ',' << c.seed << ',' << fmt(c.confirmed_mean) << ',' << fmt(c.delay_mean) << ','
      << fmt(c.delay_std) << ',' << fmt(c.time_mean) << ',' << fmt(c.time_std) << ',' << fmt(c.tps_mean) << ','
      << fmt(c.tps_std) << ',' << c.chain_digest.hex() << ',' << fmt(c.compute_mean) << ','
      << fmt(c.compute_std);
    return o.str();
}

std::string runs_header() {
    return "run_id,workload,channel,nodes,tasks,rep,seed,completed,confirmed,sim_elapsed_us,"
           "sim_processing_delay_us,sim_processing_time_us,sim_throughput_tps,chain_height,chain_tip,"
           "alerts,measured_compute_us";
}

std::string runs_row(const MetricsRecord& r) {
    std::ostringstream o;
    o << r.run_id << ',' << to_string(r.workload) << ',' << node::to_string(r.channel) << ',' << r.nodes << ','
      << r.tasks << ',' << r.rep << ',' << r.seed << ',' << (r.completed ? 1 : 0) << ',' << r.confirmed << ','
      << r.sim_elapsed_us << ',' << fmt(r.processing_delay_us) << ',' << fmt(r.processing_time_us) << ','
      << fmt(r.throughput_tps) << ',' << r.chain_height << ',' << r.chain_tip.hex() << ',' << r.alerts.size()
      << ',' << fmt(r.measured_compute_us);
    return o.str();
}

RunOutput cmd_run(const RunPlan& plan, const std::optional<std::filesystem::path>& out_dir) {
    plan.validate();
    RunOutput out;
    for (auto n : plan.node_counts) {
        for (auto t : plan.task_counts) {
            std::vector<MetricsRecord> cell;
            for (std::size_t rep = 0; rep < plan.repetitions; ++rep) cell.push_back(run_workload(plan, n, t, rep));
            out.cells.push_back(summarize(cell));
            for (auto& r : cell) out.runs.push_back(std::move(r));
        }
    }
    if (!out_dir) return out;

    std::filesystem::create_directories(*out_dir);
    std::string summary = summary_header() + "\n";
    for (const auto& c : out.cells) summary += summary_row(c) + "\n";
    write_file(*out_dir / "summary.csv", summary);

    std::string runs = runs_header() + "\n";
    for (const auto& r : out.runs) runs += runs_row(r) + "\n";
    write_file(*out_dir / "runs.csv", runs);

    std::string alerts = "run_id,sim_time_ms,kind,offender,height,detail\n";
    for (const auto& r : out.runs) {
        for (const auto& a : r.alerts) {
            alerts += r.run_id + "," + std::to_string(a.sim_time) + "," + std::string(node::to_string(a.kind)) +
                      "," + a.offender.hex() + "," + std::to_string(a.height) + ",\"" + a.detail + "\"\n";
        }
    }
    write_file(*out_dir / "alerts.csv", alerts);

    nlohmann::json manifest{
        {"workload", to_string(plan.workload)},
        {"channel", node::to_string(plan.channel)},
        {"nodes", plan.node_counts},
        {"tasks", plan.task_counts},
        {"repetitions", plan.repetitions},
        {"seed", plan.seed},
        {"block_interval_ms", plan.block_interval_ms},
        {"link", {{"base_latency_us", plan.link.base_latency_us},
                  {"jitter_us", plan.link.jitter_us},
                  {"drop_probability", plan.link.drop_probability}}},
        {"submit_spacing_us", plan.submit_spacing_us},
        {"seed_readings", plan.seed_readings},
        {"commit", git_commit()},
    };
    write_file(*out_dir / "manifest.json", manifest.dump(2) + "\n");
    return out;
}

std::string OverheadReport::to_csv() const {
    std::string out =
        "size_bytes,samples,secure_mean_us,secure_p99_us,plain_mean_us,plain_p99_us,overhead_mean_us,"
        "overhead_p99_us\n";
    for (const auto& r : rows) {
        out += std::to_string(r.size) + "," + std::to_string(r.samples) + "," + fmt(r.secure_mean_us) + "," +
               fmt(r.secure_p99_us) + "," + fmt(r.plain_mean_us) + "," + fmt(r.plain_p99_us) + "," +
               fmt(r.overhead_mean_us) + "," + fmt(r.overhead_p99_us) + "\n";
    }
    return out;
}

OverheadReport cmd_channel_overhead(const std::vector<std::size_t>& sizes, std::size_t samples,
                                    std::uint64_t seed) {
    if (sizes.empty()) throw ConfigError("no message sizes given");
    if (samples < 100) throw ConfigError("samples must be at least 100");
    for (auto sz : sizes) {
        if (sz == 0) throw ConfigError("message size must be positive");
    }
    using Clock = std::chrono::steady_clock;
    const auto sender = crypto::keypair_from_label("overhead-sender");
    const auto receiver = crypto::keypair_from_label("overhead-receiver");
    const auto key = crypto::derive_shared_key(sender, receiver.public_key).value();

    OverheadReport report;
    for (auto size : sizes) {
        Bytes body(size);
        std::uint64_t x = sim::splitmix64(seed ^ size);
        for (auto& b : body) {
            x = sim::splitmix64(x);
            b = static_cast<std::uint8_t>(x);
        }
        std::vector<double> secure, plain;
        secure.reserve(samples);
        plain.reserve(samples);
        const std::size_t warmup = 10;
        for (std::size_t i = 0; i < samples + warmup; ++i) {
            channel::ChannelMessage m{sim::kSimEpochMs, i + 1, sender.public_key, body};
            crypto::AeadNonce n{};
            for (int k = 0; k < 8; ++k) n[4 + k] = static_cast<std::uint8_t>((i + 1) >> (56 - 8 * k));

            const auto t0 = Clock::now();
            auto env = channel::seal_message(m, sender, key, n);
            auto opened = channel::open_message(env.value(), key, sender.public_key);
            const auto t1 = Clock::now();
            if (!opened || opened->body.size() != size) throw std::runtime_error("secure round trip failed");

            const auto t2 = Clock::now();
            auto wire = channel::canonical_encode(m);
            auto decoded = channel::decode_channel_message(wire);
            const auto t3 = Clock::now();
            if (decoded.body.size() != size) throw std::runtime_error("plain round trip failed");

            if (i < warmup) continue;
            secure.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
            plain.push_back(std::chrono::duration<double, std::micro>(t3 - t2).count());
        }
        OverheadRow row;
        row.size = size;
        row.samples = samples;
        row.secure_mean_us = mean_of(secure);
        row.secure_p99_us = p99_of(secure);
        row.plain_mean_us = mean_of(plain);
        row.plain_p99_us = p99_of(plain);
        row.overhead_mean_us = row.secure_mean_us - row.plain_mean_us;
        row.overhead_p99_us = row.secure_p99_us - row.plain_p99_us;
        report.rows.push_back(row);
    }

    report.overhead_positive = std::all_of(report.rows.begin(), report.rows.end(),
                                           [](const OverheadRow& r) { return r.overhead_mean_us > 0; });
    if (report.rows.size() >= 2 && report.overhead_positive) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const auto k = static_cast<double>(report.rows.size());
        for (const auto& r : report.rows) {
            const double lx = std::log(static_cast<double>(r.size));
            const double ly = std::log(r.overhead_mean_us);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        const double denom = k * sxx - sx * sx;
        report.growth_exponent = denom == 0 ? 0 : (k * sxy - sx * sy) / denom;
    }
    report.at_most_linear = report.overhead_positive && report.growth_exponent <= kLinearExponentTolerance;
    return report;
}

}  // namespace edgelinker::bench
