// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "dak/allocator.hpp"
#include "support.hpp"

using namespace dak;
using Catch::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Latency written out from first principles, independent of op_latency.
double latency_oracle(const OperationProfile& op, double x, const HardwareSpec& hw) {
    const double c = static_cast<double>(op.offloadable_bytes);
    const double host = x * c / (std::min(hw.interconnect_bandwidth_gbps, hw.host_dram_bandwidth_gbps) * 1e9);
    const double local = (1.0 - x) * c / (hw.hbm_bandwidth_gbps * 1e9);
    return std::max({op.compute_time_s, host, local});
}

double total_oracle(const std::vector<OperationProfile>& ops, const std::vector<double>& xs, const HardwareSpec& hw) {
    double t = 0.0;
    for (std::size_t i = 0; i < ops.size(); ++i) t += latency_oracle(ops[i], xs[i], hw);
    return t;
}

double budget_used(const std::vector<OperationProfile>& ops, const OffloadPlan& plan) {
    double used = 0.0;
    for (std::size_t i = 0; i < ops.size(); ++i) used += plan.entries[i].ratio * static_cast<double>(ops[i].offloadable_bytes);
    return used;
}

double total_bytes(const std::vector<OperationProfile>& ops) {
    double t = 0.0;
    for (const auto& op : ops) t += static_cast<double>(op.offloadable_bytes);
    return t;
}

// Memory-bound A and compute-bound B (B_i = 2000), 10 GB each.
std::vector<OperationProfile> two_ops(const HardwareSpec& hw) {
    return {test::synthetic_op("A", 10e9, kInf, hw), test::synthetic_op("B", 10e9, 2000.0, hw)};
}

}  // namespace

TEST_CASE("effective bandwidth examples", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const auto mem = test::synthetic_op("mem", 10e9, kInf, hw);
    CHECK(effective_bandwidth(mem, 0.0, hw) == Approx(4000.0).epsilon(1e-12));
    CHECK(effective_bandwidth(mem, 450.0 / 4450.0, hw) == Approx(4450.0).epsilon(1e-12));
    CHECK(effective_bandwidth(mem, 1.0, hw) == Approx(450.0).epsilon(1e-12));

    const auto cmp = test::synthetic_op("cmp", 10e9, 2000.0, hw);
    CHECK(effective_bandwidth(cmp, 0.5, hw) == Approx(900.0).epsilon(1e-12));
    CHECK(effective_bandwidth(cmp, 0.0, hw) == Approx(2000.0).epsilon(1e-12));
}

TEST_CASE("turning points match the argmax of effective bandwidth", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const auto mem = test::synthetic_op("mem", 10e9, kInf, hw);
    CHECK(turning_point(mem, hw) == Approx(450.0 / 4450.0).epsilon(1e-12));

    double best = -1.0, arg = 0.0;
    for (int k = 0; k <= 10000; ++k) {
        const double eb = 10e9 / latency_oracle(mem, k * 1e-4, hw) / 1e9;
        if (eb > best) best = eb, arg = k * 1e-4;
    }
    CHECK(std::abs(arg - turning_point(mem, hw)) <= 1e-4);

    CHECK(turning_point(test::synthetic_op("b450", 10e9, 450.0, hw), hw) == 1.0);
    CHECK(turning_point(test::synthetic_op("b100", 10e9, 100.0, hw), hw) == 1.0);

    const auto cmp = test::synthetic_op("b2000", 10e9, 2000.0, hw);
    CHECK(turning_point(cmp, hw) == Approx(0.225).epsilon(1e-12));
    // Largest grid x whose bandwidth still equals the all-local value.
    const double eb0 = 10e9 / latency_oracle(cmp, 0.0, hw);
    double last_flat = 0.0;
    for (int k = 0; k <= 1000; ++k) {
        if (10e9 / latency_oracle(cmp, k * 1e-3, hw) >= eb0 * (1 - 1e-12)) last_flat = k * 1e-3;
    }
    CHECK(last_flat == Approx(0.225).margin(1e-3));
}

TEST_CASE("knee point", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    CHECK(knee_point(test::synthetic_op("mem", 1e9, kInf, hw), hw) ==
          Approx(turning_point(test::synthetic_op("mem", 1e9, kInf, hw), hw)));
    CHECK(knee_point(test::synthetic_op("cmp", 1e9, 2000.0, hw), hw) == 0.0);
    // Memory bound with some compute: flat between knee and turning point.
    const auto op = test::synthetic_op("mid", 1e9, 4400.0, hw);
    const double knee = knee_point(op, hw), xs = turning_point(op, hw);
    CHECK(knee < xs);
    CHECK(latency_oracle(op, knee, hw) == Approx(latency_oracle(op, xs, hw)).epsilon(1e-12));
    CHECK(latency_oracle(op, knee * 0.9, hw) > latency_oracle(op, knee, hw));
}

TEST_CASE("effective bandwidth curve shape", "[allocator][property]") {
    const HardwareSpec hw = test::gh200();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int inst = 0; inst < 50; ++inst) {
        const double demand = u(rng) < 0.2 ? kInf : 50.0 + 20000.0 * u(rng);
        const auto op = test::synthetic_op("op", (1 + 99 * u(rng)) * 1e9, demand, hw);
        const double xs = turning_point(op, hw);
        const bool memory = op.bound_class == BoundClass::memory_bound;
        double prev = effective_bandwidth(op, 0.0, hw);
        for (int k = 1; k <= 2000; ++k) {
            const double x = k / 2000.0;
            const double eb = effective_bandwidth(op, x, hw);
            CHECK(std::abs(eb - prev) <= 0.01 * prev);  // no jumps at this step
            if (x <= xs) {
                CHECK(eb >= prev * (1 - 1e-12));
                if (!memory) CHECK(eb == Approx(effective_bandwidth(op, 0.0, hw)).epsilon(1e-12));
            } else if (x - 1.0 / 2000 >= xs) {
                CHECK(eb < prev);
            }
            CHECK(eb <= hw.host_bandwidth_gbps() + hw.hbm_bandwidth_gbps + 1e-9);
            CHECK(op_latency(op, x, hw) == Approx(latency_oracle(op, x, hw)).epsilon(1e-12));
            prev = eb;
        }
    }
}

TEST_CASE("greedy on the two-op instance", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const auto ops = two_ops(hw);

    const OffloadPlan low = greedy_allocate(ops, 0.05, hw);
    CHECK(low.entries[0].ratio == Approx(0.1).epsilon(1e-12));
    CHECK(low.entries[1].ratio == 0.0);
    CHECK(low.entries[0].phase == AllocationPhase::phase1);
    CHECK(low.entries[1].phase == AllocationPhase::untouched);

    const OffloadPlan mid = greedy_allocate(ops, 0.15, hw);
    CHECK(mid.entries[0].ratio == Approx(450.0 / 4450.0).epsilon(1e-12));
    CHECK(mid.entries[1].ratio == Approx(0.3 - 450.0 / 4450.0).epsilon(1e-9));
    CHECK(mid.entries[1].ratio <= turning_point(ops[1], hw));
    CHECK(mid.entries[1].phase == AllocationPhase::phase2);

    // Grid oracle over x_A with x_B pinned by the budget.
    for (double r : {0.05, 0.15}) {
        double best = kInf;
        for (int k = 0; k <= 1000; ++k) {
            const double xa = k * 1e-3, xb = 2 * r - xa;
            if (xb < 0.0 || xb > 1.0) continue;
            best = std::min(best, total_oracle(ops, {xa, xb}, hw));
        }
        const OffloadPlan g = greedy_allocate(ops, r, hw);
        CHECK(g.objective_s <= best * (1 + 1e-9));
        CHECK(g.objective_s == Approx(total_oracle(ops, g.ratios(), hw)).epsilon(1e-12));
    }
}

TEST_CASE("greedy endpoints and input checks", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const auto ops = two_ops(hw);
    for (const auto& e : greedy_allocate(ops, 0.0, hw).entries) CHECK(e.ratio == 0.0);
    for (const auto& e : greedy_allocate(ops, 1.0, hw).entries) CHECK(e.ratio == 1.0);
    CHECK_THROWS(greedy_allocate(ops, 1.01, hw));
    CHECK_THROWS(greedy_allocate(ops, -0.1, hw));
    CHECK_THROWS(greedy_allocate(std::vector<OperationProfile>{}, 0.5, hw));
}

TEST_CASE("uniform allocation", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const auto ops = two_ops(hw);
    const OffloadPlan u = uniform_allocate(ops, 0.3, hw);
    for (const auto& e : u.entries) {
        CHECK(e.ratio == 0.3);
        CHECK(e.phase == AllocationPhase::fixed);
    }
    CHECK(budget_used(ops, u) == Approx(0.3 * total_bytes(ops)).epsilon(1e-12));
    CHECK(uniform_allocate(ops, 0.05, hw).objective_s > greedy_allocate(ops, 0.05, hw).objective_s);
}

TEST_CASE("brute force examples", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const std::vector<OperationProfile> one = {test::synthetic_op("m", 5e9, kInf, hw)};
    CHECK(brute_force_allocate(one, 0.04, hw, 0.01).entries[0].ratio == Approx(0.04).epsilon(1e-12));

    const auto ops = two_ops(hw);
    CHECK(brute_force_allocate(ops, 0.15, hw, 0.005).objective_s ==
          Approx(greedy_allocate(ops, 0.15, hw).objective_s).epsilon(1e-6));

    const std::vector<OperationProfile> three = {test::synthetic_op("a", 3e9, kInf, hw),
                                                 test::synthetic_op("b", 7e9, 1500.0, hw),
                                                 test::synthetic_op("c", 2e9, 9000.0, hw)};
    const OffloadPlan bf = brute_force_allocate(three, 0.8, hw, 0.01);
    const OffloadPlan g = greedy_allocate(three, 0.8, hw);
    CHECK(bf.objective_s == Approx(g.objective_s).epsilon(1e-9));

    std::vector<OperationProfile> seven(7, test::synthetic_op("x", 1e9, kInf, hw));
    CHECK_THROWS(brute_force_allocate(seven, 0.5, hw, 0.1));
    CHECK_THROWS(brute_force_allocate(ops, 0.5, hw, 0.3));
}

TEST_CASE("greedy matches the exhaustive oracle and the regime structure", "[allocator][property]") {
    const HardwareSpec hw = test::gh200();
    const double peak = hw.host_bandwidth_gbps() + hw.hbm_bandwidth_gbps;
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int inst = 0; inst < 40; ++inst) {
        std::vector<OperationProfile> ops;
        const int n = 2 + inst % 3;
        for (int i = 0; i < n; ++i) {
            const bool memory = i == 0 || (i > 1 && u(rng) < 0.5);
            const double demand = memory ? (u(rng) < 0.5 ? kInf : peak * (1 + 3 * u(rng))) : 100.0 + 3800.0 * u(rng);
            ops.push_back(test::synthetic_op("op" + std::to_string(i), (1 + 99 * u(rng)) * 1e9, demand, hw));
        }
        const double total = total_bytes(ops);
        double s_mem = 0.0, s_all = 0.0;
        for (const auto& op : ops) {
            const double w = turning_point(op, hw) * static_cast<double>(op.offloadable_bytes) / total;
            s_all += w;
            if (op.bound_class == BoundClass::memory_bound) s_mem += w;
        }
        const int regime = inst % 3;
        const double lo[] = {0.0, s_mem, s_all}, hi[] = {s_mem, s_all, 1.0};
        const double r = lo[regime] + (hi[regime] - lo[regime]) * (0.05 + 0.9 * u(rng));

        const OffloadPlan g = greedy_allocate(ops, r, hw);
        CHECK(budget_used(ops, g) == Approx(r * total).epsilon(1e-9));
        const OffloadPlan bf = brute_force_allocate(ops, r, hw, 0.005);
        CHECK(g.objective_s <= bf.objective_s * (1 + 1e-3));
        CHECK(bf.objective_s <= g.objective_s * (1 + 1e-3));

        for (std::size_t i = 0; i < ops.size(); ++i) {
            const double x = g.entries[i].ratio, xs = turning_point(ops[i], hw);
            const bool memory = ops[i].bound_class == BoundClass::memory_bound;
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
            if (regime == 0) CHECK((memory ? x <= xs + 1e-12 : x == 0.0));
            if (regime == 1) CHECK((memory ? x == Approx(xs).epsilon(1e-9) : x <= xs + 1e-12));
            if (regime == 2) CHECK(x >= xs - 1e-12);
        }
        if (regime == 2) {
            // Any feasible plan above every turning point costs the same.
            std::vector<double> head(ops.size());
            double extra = r * total;
            for (std::size_t i = 0; i < ops.size(); ++i) {
                const double xs = turning_point(ops[i], hw), c = static_cast<double>(ops[i].offloadable_bytes);
                extra -= xs * c;
                head[i] = (1 - xs) * c;
            }
            for (int trial = 0; trial < 10; ++trial) {
                std::vector<double> w(ops.size());
                double sum = 0.0;
                for (std::size_t i = 0; i < ops.size(); ++i) sum += (w[i] = u(rng)) * head[i];
                const double s = extra / sum;
                bool feasible = true;
                std::vector<double> xs(ops.size());
                for (std::size_t i = 0; i < ops.size(); ++i) {
                    xs[i] = turning_point(ops[i], hw) + s * w[i] * head[i] / static_cast<double>(ops[i].offloadable_bytes);
                    feasible = feasible && xs[i] <= 1.0;
                }
                if (feasible) CHECK(plan_objective(ops, xs, hw) == Approx(g.objective_s).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("plan JSON round-trips", "[allocator]") {
    const HardwareSpec hw = test::gh200();
    const auto ops = two_ops(hw);
    for (double r : {0.0, 0.05, 0.15, 0.7}) {
        const OffloadPlan g = greedy_allocate(ops, r, hw);
        CHECK(plan_from_json(nlohmann::json::parse(to_json(g).dump())) == g);
    }
    for (auto p : {AllocationPhase::untouched, AllocationPhase::phase1, AllocationPhase::phase2,
                   AllocationPhase::phase3, AllocationPhase::fixed}) {
        CHECK(allocation_phase_from_string(to_string(p)) == p);
    }
    const OffloadPlan g = greedy_allocate(ops, 0.15, hw);
    REQUIRE(g.find("B") != nullptr);
    CHECK(g.find("B")->ratio == g.entries[1].ratio);
    CHECK(g.find("nope") == nullptr);
}
