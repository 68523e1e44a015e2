#pragma once

// Benchmark harness: read/write workloads over node counts, channel overhead
// micro-benchmark, and CSV output.
//
// Column naming: sim_* columns are simulated durations and fully
// deterministic; measured_* columns are wall-clock compute on this host.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edgelinker/node.hpp"
#include "edgelinker/sim.hpp"

namespace edgelinker::bench {

enum class Workload : std::uint8_t { Read, Write, Mixed };

std::string_view to_string(Workload w);
std::optional<Workload> parse_workload(std::string_view s);

struct RunPlan {
    std::vector<std::size_t> node_counts{1, 5, 10, 15, 20};
    std::vector<std::size_t> task_counts{100, 200, 300, 400, 500};
    std::size_t repetitions = 5;
    Workload workload = Workload::Write;
    node::ChannelMode channel = node::ChannelMode::Secure;
    std::uint64_t seed = 42;
    std::uint64_t block_interval_ms = 1000;
    sim::LinkModel link;
    // Gap between consecutive client requests; 0 sends the whole batch at once.
    sim::TimeUs submit_spacing_us = 0;
    // Readings stored before a read workload starts.
    std::size_t seed_readings = 10;

    void validate() const;  // throws ConfigError
};

struct MetricsRecord {
    std::string run_id;
    Workload workload = Workload::Write;
    node::ChannelMode channel = node::ChannelMode::Secure;
    std::size_t nodes = 0;
    std::size_t tasks = 0;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    std::size_t confirmed = 0;  // finalized writes plus answered reads
    bool completed = false;
    sim::TimeUs sim_elapsed_us = 0;
    double processing_delay_us = 0;
    double processing_time_us = 0;
    double throughput_tps = 0;
    std::uint64_t chain_height = 0;
    Digest chain_tip;
    double measured_compute_us = 0;
    std::vector<node::Alert> alerts;
};

MetricsRecord run_workload(const RunPlan& plan, std::size_t nodes, std::size_t tasks, std::size_t rep);

struct CellSummary {
    Workload workload = Workload::Write;
    node::ChannelMode channel = node::ChannelMode::Secure;
    std::size_t nodes = 0;
    std::size_t tasks = 0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    double confirmed_mean = 0;
    double delay_mean = 0, delay_std = 0;
    double time_mean = 0, time_std = 0;
    double tps_mean = 0, tps_std = 0;
    Digest chain_digest;
    double compute_mean = 0, compute_std = 0;
};

CellSummary summarize(const std::vector<MetricsRecord>& reps);

std::string summary_header();
std::string summary_row(const CellSummary& c);
std::string runs_header();
std::string runs_row(const MetricsRecord& r);

struct RunOutput {
    std::vector<MetricsRecord> runs;
    std::vector<CellSummary> cells;
};

// Runs every (nodes, tasks, repetition) cell; when `out_dir` is set writes
// summary.csv, runs.csv, alerts.csv and manifest.json there.
RunOutput cmd_run(const RunPlan& plan, const std::optional<std::filesystem::path>& out_dir);

struct OverheadRow {
    std::size_t size = 0;
    std::size_t samples = 0;
    double secure_mean_us = 0;
    double secure_p99_us = 0;
    double plain_mean_us = 0;
    double plain_p99_us = 0;
    double overhead_mean_us = 0;
    double overhead_p99_us = 0;
};

struct OverheadReport {
    std::vector<OverheadRow> rows;
    // Least-squares slope of log(overhead) against log(size).
    double growth_exponent = 0;
    bool overhead_positive = false;
    bool at_most_linear = false;
    std::string to_csv() const;
};

inline constexpr double kLinearExponentTolerance = 1.10;

// Throws ConfigError when samples < 100 or sizes is empty.
OverheadReport cmd_channel_overhead(const std::vector<std::size_t>& sizes, std::size_t samples,
                                    std::uint64_t seed = 42);

}  // namespace edgelinker::bench
