// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dak/allocator.hpp"
#include "dak/hw_model.hpp"
#include "dak/partitioner.hpp"
#include "dak/pipeline.hpp"

namespace dak {

enum class Strategy { direct_access, prefetch };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct SimConfig {
    Strategy strategy = Strategy::direct_access;
    bool multicast = true;
    bool congestion_control = true;
    std::int64_t chunk_bytes = 0;  // 0: one tile_m x tile_k block
    int prefetch_depth = 2;        // layers of staging buffers
    double hbm_contention_factor = 0.9;
    TileDims tiles;
};

// Throws ConfigError on an out-of-range field.
void validate(const SimConfig& cfg);

struct OpReport {
    std::string op_id;
    double ratio = 0.0;  // achieved host fraction
    double latency_s = 0.0;
    double effective_bandwidth_gbps = 0.0;
    std::int64_t host_bytes = 0;
    std::int64_t host_traffic_bytes = 0;
    double amplification = 1.0;
    int n_sm_host = 0;
    int n_sm_gpu = 0;
    double interconnect_busy_s = 0.0;

    bool operator==(const OpReport&) const = default;
};

struct SimReport {
    Strategy strategy = Strategy::direct_access;
    double global_ratio = 0.0;
    std::vector<OpReport> per_op;
    double total_latency_s = 0.0;
    double tpot_s = 0.0;
    double aggregate_bandwidth_gbps = 0.0;
    std::int64_t host_traffic_bytes = 0;
    double bubbles = 0.0;  // fraction of the run with the interconnect idle

    bool operator==(const SimReport&) const = default;
};

// Raw engine result in integer nanoseconds.
struct OpTiming {
    std::int64_t makespan_ns = 0;
    std::int64_t interconnect_busy_ns = 0;
    std::int64_t host_traffic_bytes = 0;
    std::int64_t delivered_bytes = 0;  // bytes consumed by compute, counted once per tile row chunk
};

// Event-driven run of one partition (SMs assigned and clusters built).
// `hbm_scale` multiplies HBM capacity for the whole run.
OpTiming simulate_partition(const TilePartition& p, const HardwareSpec& hw, const SimConfig& cfg,
                            double hbm_scale = 1.0);

// Partition, assign SMs and cluster `op` at ratio `x`, then simulate it.
OpReport simulate_op(const OperationProfile& op, double x, const HardwareSpec& hw, const SimConfig& cfg);
// Same for a ready partition.
OpReport simulate_op(const TilePartition& p, const HardwareSpec& hw, const SimConfig& cfg);

// Tier placement of every op in a plan after tile-row reconciliation.
std::vector<TilePartition> plan_partitions(std::span<const OperationProfile> ops, const OffloadPlan& plan,
                                           const HardwareSpec& hw, const SimConfig& cfg);

// Ops run back to back with direct access.
SimReport simulate_pipeline(std::span<const OperationProfile> ops, const OffloadPlan& plan, const HardwareSpec& hw,
                            const SimConfig& cfg);

// Layer-granular copy-based baseline: host bytes of each layer are staged
// into HBM ahead of use while earlier layers compute.
SimReport simulate_prefetch(std::span<const OperationProfile> ops, const OffloadPlan& plan, const HardwareSpec& hw,
                            const SimConfig& cfg);

// Dispatches on cfg.strategy.
SimReport simulate(std::span<const OperationProfile> ops, const OffloadPlan& plan, const HardwareSpec& hw,
                   const SimConfig& cfg);

// Greedy plan plus simulation per ratio; results in input order. Points run
// in parallel.
std::vector<SimReport> sweep_ratios(std::span<const OperationProfile> ops, const HardwareSpec& hw,
                                    const SimConfig& cfg, std::span<const double> ratios);

nlohmann::json to_json(const OpReport& r);
nlohmann::json to_json(const SimReport& r);
SimReport report_from_json(const nlohmann::json& doc);

// Column header used by sweep_csv.
inline constexpr const char* kSweepCsvHeader = "ratio,tpot_s,eb_gbps,host_traffic_gb,bubbles_frac";
std::string sweep_csv(std::span<const SimReport> reports);

}  // namespace dak
