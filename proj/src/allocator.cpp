// SPDX-License-Identifier: Apache-2.0

#include "dak/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dak/errors.hpp"

namespace dak {

namespace {

constexpr double kBytesPerGB = 1e9;

// Per-op constants for fast latency evaluation, in seconds.
struct LatencyTerms {
    double t_comp;
    double t_gpu_all;   // C / B_g
    double t_host_all;  // C / B_h, +inf without a host path
};

LatencyTerms terms_for(const OperationProfile& op, const HardwareSpec& hw) {
    const double c = static_cast<double>(op.offloadable_bytes);
    const double bh = hw.host_bandwidth_gbps();
    return {op.compute_time_s, c / (hw.hbm_bandwidth_gbps * kBytesPerGB),
            bh > 0.0 ? c / (bh * kBytesPerGB) : std::numeric_limits<double>::infinity()};
}

double latency_from_terms(const LatencyTerms& t, double x) {
    const double t_host = x > 0.0 ? x * t.t_host_all : 0.0;
    const double t_gpu = (1.0 - x) * t.t_gpu_all;
    return std::max(t.t_comp, std::max(t_host, t_gpu));
}

double total_bytes(std::span<const OperationProfile> ops) {
    double sum = 0.0;
    for (const auto& op : ops) sum += static_cast<double>(op.offloadable_bytes);
    return sum;
}

void check_ratio(double r) {
    if (!(r >= 0.0 && r <= 1.0)) {
        throw std::invalid_argument("global offload ratio must be in [0, 1], got " + std::to_string(r));
    }
}

}  // namespace

std::string to_string(AllocationPhase p) {
    switch (p) {
        case AllocationPhase::untouched: return "untouched";
        case AllocationPhase::phase1: return "phase1";
        case AllocationPhase::phase2: return "phase2";
        case AllocationPhase::phase3: return "phase3";
        case AllocationPhase::fixed: return "fixed";
    }
    return "untouched";
}

AllocationPhase allocation_phase_from_string(const std::string& s) {
    if (s == "untouched") return AllocationPhase::untouched;
    if (s == "phase1") return AllocationPhase::phase1;
    if (s == "phase2") return AllocationPhase::phase2;
    if (s == "phase3") return AllocationPhase::phase3;
    if (s == "fixed") return AllocationPhase::fixed;
    throw ConfigError("unknown allocation phase '" + s + "'");
}

const PlanEntry* OffloadPlan::find(const std::string& op_id) const {
    for (const auto& e : entries) {
        if (e.op_id == op_id) return &e;
    }
    return nullptr;
}

std::vector<double> OffloadPlan::ratios() const {
    std::vector<double> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.ratio);
    return out;
}

double op_latency(const OperationProfile& op, double x, const HardwareSpec& hw) {
    return latency_from_terms(terms_for(op, hw), x);
}

double effective_bandwidth(const OperationProfile& op, double x, const HardwareSpec& hw) {
    const double t = op_latency(op, x, hw);
    if (!std::isfinite(t)) return 0.0;
    return static_cast<double>(op.offloadable_bytes) / t / kBytesPerGB;
}

double turning_point(const OperationProfile& op, const HardwareSpec& hw) {
    const double bh = hw.host_bandwidth_gbps();
    if (bh <= 0.0) return 0.0;
    const double peak = std::min(op.demand_bandwidth_gbps, bh + hw.hbm_bandwidth_gbps);
    return std::min(1.0, bh / peak);
}

double knee_point(const OperationProfile& op, const HardwareSpec& hw) {
    const double peak = std::min(op.demand_bandwidth_gbps, hw.host_bandwidth_gbps() + hw.hbm_bandwidth_gbps);
    return std::clamp(1.0 - hw.hbm_bandwidth_gbps / peak, 0.0, turning_point(op, hw));
}

double plan_objective(std::span<const OperationProfile> ops, std::span<const double> ratios, const HardwareSpec& hw) {
    if (ops.size() != ratios.size()) {
        throw std::invalid_argument("plan_objective: ops and ratios differ in length");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < ops.size(); ++i) sum += op_latency(ops[i], ratios[i], hw);
    return sum;
}

OffloadPlan make_plan(std::span<const OperationProfile> ops, std::span<const double> ratios, double global_ratio,
                      const HardwareSpec& hw, AllocationPhase label) {
    OffloadPlan plan;
    plan.global_ratio = global_ratio;
    plan.entries.reserve(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const double lat = op_latency(ops[i], ratios[i], hw);
        plan.entries.push_back({ops[i].id, ratios[i], label, lat});
        plan.objective_s += lat;
    }
    return plan;
}

OffloadPlan greedy_allocate(std::span<const OperationProfile> ops, double global_ratio, const HardwareSpec& hw) {
    if (ops.empty()) throw std::invalid_argument("greedy_allocate: empty operation list");
    check_ratio(global_ratio);

    const std::size_t n = ops.size();
    std::vector<double> x(n, 0.0);
    std::vector<AllocationPhase> phase(n, AllocationPhase::untouched);
    double remaining = global_ratio * total_bytes(ops);

    // Raise each op toward its per-phase target, proportionally to the bytes
    // of headroom it has, until the budget or the headroom runs out.
    auto run_phase = [&](AllocationPhase label, auto target_of) {
        if (remaining <= 0.0) return;
        std::vector<double> headroom(n, 0.0);
        double total_headroom = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double target = target_of(i);
            if (target > x[i]) {
                headroom[i] = (target - x[i]) * static_cast<double>(ops[i].offloadable_bytes);
                total_headroom += headroom[i];
            }
        }
        if (total_headroom <= 0.0) return;
        const double take = std::min(remaining, total_headroom);
        const double fraction = take / total_headroom;
        for (std::size_t i = 0; i < n; ++i) {
            if (headroom[i] <= 0.0) continue;
            const double target = target_of(i);
            x[i] = fraction >= 1.0 ? target : std::min(target, x[i] + (target - x[i]) * fraction);
            phase[i] = label;
        }
        remaining -= take;
    };

    run_phase(AllocationPhase::phase1, [&](std::size_t i) { return knee_point(ops[i], hw); });
    run_phase(AllocationPhase::phase2, [&](std::size_t i) { return turning_point(ops[i], hw); });
    run_phase(AllocationPhase::phase3, [](std::size_t) { return 1.0; });

    OffloadPlan plan = make_plan(ops, x, global_ratio, hw);
    for (std::size_t i = 0; i < n; ++i) plan.entries[i].phase = phase[i];
    return plan;
}

OffloadPlan uniform_allocate(std::span<const OperationProfile> ops, double global_ratio, const HardwareSpec& hw) {
    check_ratio(global_ratio);
    const std::vector<double> x(ops.size(), global_ratio);
    return make_plan(ops, x, global_ratio, hw);
}

OffloadPlan brute_force_allocate(std::span<const OperationProfile> ops, double global_ratio, const HardwareSpec& hw,
                                 double grid_step) {
    if (ops.empty()) throw std::invalid_argument("brute_force_allocate: empty operation list");
    if (ops.size() > 6) throw std::invalid_argument("brute_force_allocate: at most 6 ops are tractable");
    check_ratio(global_ratio);
    const double cells = 1.0 / grid_step;
    const long long steps = std::llround(cells);
    if (!(grid_step > 0.0) || steps < 1 || std::abs(cells - static_cast<double>(steps)) > 1e-9 * cells) {
        throw std::invalid_argument("brute_force_allocate: grid_step must divide 1 evenly");
    }
    const std::size_t n = ops.size();
    double points = 1.0;
    for (std::size_t i = 1; i < n; ++i) points *= static_cast<double>(steps + 1);
    if (points > 2e9) throw std::invalid_argument("brute_force_allocate: grid too large for exhaustive search");

    std::vector<LatencyTerms> terms;
    for (const auto& op : ops) terms.push_back(terms_for(op, hw));
    const double budget = global_ratio * total_bytes(ops);

    // The largest op absorbs the budget residual so every grid point is
    // projected onto the constraint hyperplane.
    std::size_t free_idx = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (ops[i].offloadable_bytes > ops[free_idx].offloadable_bytes) free_idx = i;
    }
    std::vector<std::size_t> grid_idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != free_idx) grid_idx.push_back(i);
    }
    const double c_free = static_cast<double>(ops[free_idx].offloadable_bytes);

    std::vector<double> best(n, 0.0);
    double best_obj = std::numeric_limits<double>::infinity();
    std::vector<double> x(n, 0.0);

    auto consider = [&]() {
        double used = 0.0;
        for (std::size_t i : grid_idx) used += static_cast<double>(ops[i].offloadable_bytes) * x[i];
        double xf = (budget - used) / c_free;
        if (xf < -1e-12 || xf > 1.0 + 1e-12) return;
        x[free_idx] = std::clamp(xf, 0.0, 1.0);
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) obj += latency_from_terms(terms[i], x[i]);
        if (obj < best_obj || (obj == best_obj && std::lexicographical_compare(x.begin(), x.end(), best.begin(), best.end()))) {
            best_obj = obj;
            best = x;
        }
    };

    // Odometer over the grid coordinates; values produced by `value_of`.
    auto sweep = [&](long long count, auto value_of) {
        std::vector<long long> counter(grid_idx.size(), 0);
        while (true) {
            for (std::size_t d = 0; d < grid_idx.size(); ++d) x[grid_idx[d]] = value_of(d, counter[d]);
            consider();
            std::size_t d = grid_idx.size();
            while (d > 0) {
                --d;
                if (++counter[d] < count) break;
                counter[d] = 0;
                if (d == 0) return;
            }
            if (grid_idx.empty()) return;
            if (std::all_of(counter.begin(), counter.end(), [](long long c) { return c == 0; })) return;
        }
    };

    sweep(steps + 1, [&](std::size_t, long long k) { return std::min(1.0, static_cast<double>(k) * grid_step); });

    // Exhaustive refinement in shrinking boxes around the incumbent.
    constexpr int kRadius = 4;
    double step = grid_step;
    for (int level = 0; level < 12 && std::isfinite(best_obj); ++level) {
        step /= 4.0;
        const std::vector<double> center = best;
        sweep(2 * kRadius + 1, [&](std::size_t d, long long k) {
            return std::clamp(center[grid_idx[d]] + static_cast<double>(k - kRadius) * step, 0.0, 1.0);
        });
    }
    if (!std::isfinite(best_obj)) {
        throw std::runtime_error("brute_force_allocate: no feasible grid point");
    }
    return make_plan(ops, best, global_ratio, hw);
}

nlohmann::json to_json(const OffloadPlan& plan) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : plan.entries) {
        entries.push_back(
            {{"op_id", e.op_id}, {"ratio", e.ratio}, {"phase", to_string(e.phase)}, {"latency_s", e.latency_s}});
    }
    return {{"global_ratio", plan.global_ratio}, {"objective_s", plan.objective_s}, {"entries", entries}};
}

OffloadPlan plan_from_json(const nlohmann::json& doc) {
    try {
        OffloadPlan plan;
        plan.global_ratio = doc.at("global_ratio").get<double>();
        plan.objective_s = doc.at("objective_s").get<double>();
        for (const auto& e : doc.at("entries")) {
            plan.entries.push_back({e.at("op_id").get<std::string>(), e.at("ratio").get<double>(),
                                    allocation_phase_from_string(e.at("phase").get<std::string>()),
                                    e.at("latency_s").get<double>()});
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed plan document: ") + e.what());
    }
}

}  // namespace dak
