// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dak/hw_model.hpp"
#include "dak/pipeline.hpp"

namespace dak {

struct TileDims {
    std::int64_t m = 128;
    std::int64_t n = 256;
    std::int64_t k = 64;

    bool operator==(const TileDims&) const = default;
};

// SMs that receive the same host tile rows from a single fetch. Without
// multicast every host SM is a singleton cluster.
struct Cluster {
    std::vector<int> sms;
    int initiator = 0;
    std::vector<std::int64_t> host_rows;

    bool operator==(const Cluster&) const = default;
};

// Tier placement of one op's A matrix (M x K, consumed by a K x N operand).
// Tile rows [0, host_tile_rows) live in host memory, the rest in HBM.
struct TilePartition {
    std::string op_id;
    OpKind kind = OpKind::linear;
    std::int64_t m = 0;
    std::int64_t k = 0;
    std::int64_t n = 0;
    TileDims tile;
    int dtype_bytes = 2;
    std::int64_t host_tile_rows = 0;
    std::int64_t gpu_tile_rows = 0;
    int n_sm_host = 0;
    int n_sm_gpu = 0;
    int inflight_window = 0;
    std::vector<Cluster> clusters;
    bool multicast_enabled = false;
    double target_ratio = 0.0;
    double achieved_ratio = 0.0;  // host bytes / offloadable bytes
    std::int64_t offloadable_bytes = 0;
    double compute_time_s = 0.0;

    [[nodiscard]] std::int64_t total_rows() const { return host_tile_rows + gpu_tile_rows; }
    // Matrix rows covered by tile row `r`; the last row may be partial.
    [[nodiscard]] std::int64_t rows_in(std::int64_t r) const;
    [[nodiscard]] std::int64_t row_bytes(std::int64_t r) const;
    [[nodiscard]] std::int64_t column_blocks() const;
    // Output columns covered by column block `b`.
    [[nodiscard]] std::int64_t block_width(std::int64_t b) const;
    [[nodiscard]] std::int64_t host_bytes() const;
    // Fetch initiators reading host memory: one per cluster.
    [[nodiscard]] int host_fetchers() const;

    bool operator==(const TilePartition&) const = default;
};

// Tile dims actually used for `op`: attention rows are single requests.
TileDims effective_tiles(const OperationProfile& op, const TileDims& tiles);

// host_tile_rows = round-half-up(x * ceil(M / tile_m)). An M smaller than
// tile_m yields one partial row.
TilePartition partition_op(const OperationProfile& op, double x, const TileDims& tiles = {});

// Same, with an explicit host row count.
TilePartition partition_rows(const OperationProfile& op, std::int64_t host_rows, double target_ratio,
                             const TileDims& tiles = {});

// Splits the SMs between tiers with wave alignment and, when enabled, the
// congestion caps. Clears any clusters.
TilePartition assign_sms(TilePartition p, const HardwareSpec& hw, bool congestion_control);

// Groups host SMs into multicast clusters (singletons when disabled).
TilePartition build_clusters(TilePartition p, const HardwareSpec& hw, bool multicast);

// Bytes crossing the interconnect: every host row once per cluster that
// consumes it.
std::int64_t host_traffic(const TilePartition& p);

// host_traffic / host-resident bytes; 1 when nothing is offloaded.
double amplification(const TilePartition& p);

// Host row counts for a whole plan. Each op stays within one row of its
// target, rows never push an op past its turning point unless its ratio
// already does, and the total host bytes track the plan's byte budget.
std::vector<std::int64_t> reconcile_host_rows(std::span<const OperationProfile> ops, std::span<const double> ratios,
                                              const HardwareSpec& hw, const TileDims& tiles = {});

nlohmann::json to_json(const TilePartition& p);
TilePartition partition_from_json(const nlohmann::json& doc);

}  // namespace dak
