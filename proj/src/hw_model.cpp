// SPDX-License-Identifier: Apache-2.0

#include "dak/hw_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dak/errors.hpp"
#include "json_fields.hpp"

namespace dak {

double HardwareSpec::host_bandwidth_gbps() const {
    return std::min(interconnect_bandwidth_gbps, host_dram_bandwidth_gbps);
}

long long HardwareSpec::inflight_budget() const {
    return static_cast<long long>(max_sm_host) * max_inflight_per_sm;
}

void validate(const HardwareSpec& hw) {
    auto fail = [&](const std::string& msg) { throw ConfigError("hardware '" + hw.name + "': " + msg); };
    if (!(hw.hbm_bandwidth_gbps > 0.0)) fail("hbm_bandwidth_gbps must be > 0");
    // A zero host path is allowed: it models a GPU with no remote tier.
    if (!(hw.interconnect_bandwidth_gbps >= 0.0)) fail("interconnect_bandwidth_gbps must be >= 0");
    if (!(hw.host_dram_bandwidth_gbps >= 0.0)) fail("host_dram_bandwidth_gbps must be >= 0");
    if (!(hw.peak_compute_gflops > 0.0)) fail("peak_compute_gflops must be > 0");
    if (!(hw.compute_efficiency > 0.0 && hw.compute_efficiency <= 1.0)) fail("compute_efficiency must be in (0, 1]");
    if (hw.sm_count <= 0) fail("sm_count must be > 0");
    if (hw.smem_slots_per_sm < 2) fail("smem_slots_per_sm must be >= 2");
    if (hw.smem_slot_bytes <= 0) fail("smem_slot_bytes must be > 0");
    if (!(hw.hbm_capacity_gb > 0.0)) fail("hbm_capacity_gb must be > 0");
    if (!(hw.host_capacity_gb > 0.0)) fail("host_capacity_gb must be > 0");
    if (hw.max_sm_host <= 0) fail("max_sm_host must be > 0");
    if (hw.max_inflight_per_sm <= 0) fail("max_inflight_per_sm must be > 0");
    if (hw.cluster_size_max <= 0) fail("cluster_size_max must be > 0");

    double prev_level = -1.0;
    double prev_mult = 1.0;
    for (const auto& p : hw.congestion_penalty) {
        if (!(p.level >= 0.0)) fail("congestion_penalty levels must be >= 0");
        if (!(p.level > prev_level)) fail("congestion_penalty levels must be strictly increasing");
        if (!(p.multiplier > 0.0 && p.multiplier <= 1.0)) fail("congestion_penalty multipliers must be in (0, 1]");
        if (p.multiplier > prev_mult) fail("congestion_penalty must be non-increasing");
        if (p.level == 0.0 && p.multiplier != 1.0) fail("congestion_penalty must be 1.0 at level 0");
        prev_level = p.level;
        prev_mult = p.multiplier;
    }
}

double system_peak_bandwidth(const HardwareSpec& hw) {
    return hw.hbm_bandwidth_gbps + hw.host_bandwidth_gbps();
}

double machine_balance(const HardwareSpec& hw) {
    return hw.peak_compute_gflops * hw.compute_efficiency / hw.hbm_bandwidth_gbps;
}

double penalty_multiplier(const HardwareSpec& hw, double level) {
    if (level <= 0.0) {
        return 1.0;
    }
    double x0 = 0.0;
    double y0 = 1.0;
    for (const auto& p : hw.congestion_penalty) {
        if (level <= p.level) {
            if (p.level == x0) {
                return p.multiplier;
            }
            const double t = (level - x0) / (p.level - x0);
            return y0 + t * (p.multiplier - y0);
        }
        x0 = p.level;
        y0 = p.multiplier;
    }
    return y0;
}

double congestion_factor(const HardwareSpec& hw, long long n_sm_host, long long inflight_per_sm) {
    const long long volume = std::max(0LL, n_sm_host) * std::max(0LL, inflight_per_sm);
    const long long excess = std::max(0LL, volume - hw.inflight_budget());
    return penalty_multiplier(hw, static_cast<double>(excess));
}

HardwareSpec hardware_from_json(const nlohmann::json& doc) {
    detail::FieldReader r(doc, "hardware spec");
    HardwareSpec hw;
    hw.name = r.required<std::string>("name");
    hw.hbm_bandwidth_gbps = r.required<double>("hbm_bandwidth_gbps");
    hw.interconnect_bandwidth_gbps = r.required<double>("interconnect_bandwidth_gbps");
    hw.host_dram_bandwidth_gbps = r.required<double>("host_dram_bandwidth_gbps");
    hw.peak_compute_gflops = r.required<double>("peak_compute_gflops");
    hw.compute_efficiency = r.required<double>("compute_efficiency");
    hw.sm_count = r.required<int>("sm_count");
    hw.smem_slots_per_sm = r.required<int>("smem_slots_per_sm");
    hw.smem_slot_bytes = r.required<long long>("smem_slot_bytes");
    hw.hbm_capacity_gb = r.required<double>("hbm_capacity_gb");
    hw.host_capacity_gb = r.required<double>("host_capacity_gb");
    hw.max_sm_host = r.required<int>("max_sm_host");
    hw.max_inflight_per_sm = r.required<int>("max_inflight_per_sm");
    hw.cluster_size_max = r.required<int>("cluster_size_max");

    const auto& table = r.raw("congestion_penalty");
    if (!table.is_array()) {
        throw ConfigError("hardware spec: congestion_penalty must be an array of [level, multiplier] pairs");
    }
    for (const auto& entry : table) {
        if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() || !entry[1].is_number()) {
            throw ConfigError("hardware spec: congestion_penalty entries must be [level, multiplier] pairs");
        }
        hw.congestion_penalty.push_back({entry[0].get<double>(), entry[1].get<double>()});
    }
    r.reject_unknown();
    validate(hw);
    return hw;
}

nlohmann::json to_json(const HardwareSpec& hw) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& p : hw.congestion_penalty) {
        table.push_back({p.level, p.multiplier});
    }
    return {
        {"name", hw.name},
        {"hbm_bandwidth_gbps", hw.hbm_bandwidth_gbps},
        {"interconnect_bandwidth_gbps", hw.interconnect_bandwidth_gbps},
        {"host_dram_bandwidth_gbps", hw.host_dram_bandwidth_gbps},
        {"peak_compute_gflops", hw.peak_compute_gflops},
        {"compute_efficiency", hw.compute_efficiency},
        {"sm_count", hw.sm_count},
        {"smem_slots_per_sm", hw.smem_slots_per_sm},
        {"smem_slot_bytes", hw.smem_slot_bytes},
        {"hbm_capacity_gb", hw.hbm_capacity_gb},
        {"host_capacity_gb", hw.host_capacity_gb},
        {"max_sm_host", hw.max_sm_host},
        {"max_inflight_per_sm", hw.max_inflight_per_sm},
        {"congestion_penalty", table},
        {"cluster_size_max", hw.cluster_size_max},
    };
}

HardwareSpec load_hardware(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open hardware spec '" + path.string() + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("hardware spec '" + path.string() + "': " + e.what());
    }
    return hardware_from_json(doc);
}

}  // namespace dak
