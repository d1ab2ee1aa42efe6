// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit tests.

#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "dak/hw_model.hpp"
#include "dak/pipeline.hpp"

namespace dak::test {

inline HardwareSpec gh200() { return load_hardware(DAK_CONFIG_DIR "/hardware/gh200.json"); }
inline HardwareSpec rtx6000() { return load_hardware(DAK_CONFIG_DIR "/hardware/rtx6000-blackwell.json"); }
inline ModelSpec opt30b() { return load_model(DAK_CONFIG_DIR "/models/opt-30b.json"); }

// Op with C bytes and a given demand bandwidth; infinite demand means no
// compute at all.
inline OperationProfile synthetic_op(std::string id, double c_bytes, double demand_gbps, const HardwareSpec& hw) {
    OperationProfile op;
    op.id = std::move(id);
    op.offloadable_bytes = static_cast<std::int64_t>(c_bytes);
    op.compute_time_s = demand_gbps == std::numeric_limits<double>::infinity() ? 0.0 : c_bytes / (demand_gbps * 1e9);
    op.demand_bandwidth_gbps = demand_gbps;
    op.bound_class = demand_gbps >= hw.host_bandwidth_gbps() + hw.hbm_bandwidth_gbps ? BoundClass::memory_bound
                                                                                     : BoundClass::compute_bound;
    op.shape = {op.offloadable_bytes / 2, 1, 1};
    op.dtype_bytes = 2;
    return op;
}

// Single-SM machine for hand-checkable pipelines: the host link moves one
// byte per ns, and HBM is fast enough not to matter.
inline HardwareSpec one_sm_machine() {
    HardwareSpec hw;
    hw.name = "one-sm";
    hw.hbm_bandwidth_gbps = 1000.0;
    hw.interconnect_bandwidth_gbps = 1.0;
    hw.host_dram_bandwidth_gbps = 1.0;
    hw.peak_compute_gflops = 1000.0;
    hw.compute_efficiency = 1.0;
    hw.sm_count = 1;
    hw.smem_slots_per_sm = 2;
    hw.smem_slot_bytes = 1 << 20;
    hw.hbm_capacity_gb = 1.0;
    hw.host_capacity_gb = 1.0;
    hw.max_sm_host = 1;
    hw.max_inflight_per_sm = 1;
    hw.cluster_size_max = 1;
    return hw;
}

}  // namespace dak::test
