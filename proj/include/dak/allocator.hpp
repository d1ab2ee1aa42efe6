// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dak/hw_model.hpp"
#include "dak/pipeline.hpp"

namespace dak {

// Which greedy phase last raised an op's ratio. Plans not produced by the
// greedy allocator (uniform, exhaustive search) label every op `fixed`.
enum class AllocationPhase { untouched, phase1, phase2, phase3, fixed };

std::string to_string(AllocationPhase p);
AllocationPhase allocation_phase_from_string(const std::string& s);

struct PlanEntry {
    std::string op_id;
    double ratio = 0.0;
    AllocationPhase phase = AllocationPhase::untouched;
    double latency_s = 0.0;

    bool operator==(const PlanEntry&) const = default;
};

// Per-op offload ratios in pipeline order.
struct OffloadPlan {
    double global_ratio = 0.0;
    std::vector<PlanEntry> entries;
    double objective_s = 0.0;  // sum of per-op latencies

    [[nodiscard]] const PlanEntry* find(const std::string& op_id) const;
    [[nodiscard]] std::vector<double> ratios() const;

    bool operator==(const OffloadPlan&) const = default;
};

// Analytic latency of one op with fraction `x` of its bytes on the host:
// max(T_comp, T_h, T_g) with both tiers read concurrently.
double op_latency(const OperationProfile& op, double x, const HardwareSpec& hw);

// C / op_latency, GB/s.
double effective_bandwidth(const OperationProfile& op, double x, const HardwareSpec& hw);

// Largest ratio at which the op still reaches its peak effective bandwidth.
// min(1, B_h / min(B_i, B_h + B_g)); pure memory-bound ops give
// B_h / (B_h + B_g) and compute-bound ops min(1, B_h / B_i).
double turning_point(const OperationProfile& op, const HardwareSpec& hw);

// Smallest ratio at which the op reaches its peak effective bandwidth. Below
// it latency falls as x grows; between knee and turning point it is flat.
// Zero for compute-bound ops; equals the turning point for ops with
// negligible compute.
double knee_point(const OperationProfile& op, const HardwareSpec& hw);

double plan_objective(std::span<const OperationProfile> ops, std::span<const double> ratios, const HardwareSpec& hw);

OffloadPlan greedy_allocate(std::span<const OperationProfile> ops, double global_ratio, const HardwareSpec& hw);
OffloadPlan uniform_allocate(std::span<const OperationProfile> ops, double global_ratio, const HardwareSpec& hw);

// Exhaustive grid search over ratio vectors on the budget hyperplane followed
// by exhaustive local grid refinement. Independent of the greedy logic; used
// as its oracle. Limited to 6 ops.
OffloadPlan brute_force_allocate(std::span<const OperationProfile> ops, double global_ratio, const HardwareSpec& hw,
                                 double grid_step);

// Build a plan from explicit ratios (labels `fixed`), filling latencies and
// the objective.
OffloadPlan make_plan(std::span<const OperationProfile> ops, std::span<const double> ratios, double global_ratio,
                      const HardwareSpec& hw, AllocationPhase label = AllocationPhase::fixed);

nlohmann::json to_json(const OffloadPlan& plan);
OffloadPlan plan_from_json(const nlohmann::json& doc);

}  // namespace dak
