// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dak {

// One breakpoint of the congestion penalty table. `level` is the excess
// in-flight host request count beyond the budget; `multiplier` scales HBM
// bandwidth. The table always has an implicit (0, 1.0) first point.
struct PenaltyPoint {
    double level = 0.0;
    double multiplier = 1.0;

    bool operator==(const PenaltyPoint&) const = default;
};

// Machine description: GPU, host memory and the link between them.
// Bandwidths are GB/s with GB = 1e9 bytes, so 1 GB/s is exactly 1 byte/ns.
struct HardwareSpec {
    std::string name;
    double hbm_bandwidth_gbps = 0.0;
    double interconnect_bandwidth_gbps = 0.0;
    double host_dram_bandwidth_gbps = 0.0;
    double peak_compute_gflops = 0.0;
    double compute_efficiency = 1.0;
    int sm_count = 0;
    int smem_slots_per_sm = 2;
    long long smem_slot_bytes = 0;
    double hbm_capacity_gb = 0.0;
    double host_capacity_gb = 0.0;
    int max_sm_host = 0;
    int max_inflight_per_sm = 0;
    std::vector<PenaltyPoint> congestion_penalty;
    int cluster_size_max = 1;

    // B_h: the slower of the link and the host DRAM behind it.
    [[nodiscard]] double host_bandwidth_gbps() const;
    // Host in-flight request budget, max_sm_host * max_inflight_per_sm.
    [[nodiscard]] long long inflight_budget() const;

    bool operator==(const HardwareSpec&) const = default;
};

// Throws ConfigError describing the first violated invariant.
void validate(const HardwareSpec& hw);

double system_peak_bandwidth(const HardwareSpec& hw);
double machine_balance(const HardwareSpec& hw);

// Piecewise-linear lookup of the penalty table at an oversubscription level.
// Levels past the last key hold the last multiplier.
double penalty_multiplier(const HardwareSpec& hw, double level);

// HBM bandwidth multiplier for `n_sm_host` SMs each keeping
// `inflight_per_sm` host fetches outstanding.
double congestion_factor(const HardwareSpec& hw, long long n_sm_host, long long inflight_per_sm);

HardwareSpec hardware_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const HardwareSpec& hw);
HardwareSpec load_hardware(const std::filesystem::path& path);

}  // namespace dak
