// SPDX-License-Identifier: Apache-2.0

#include "dak/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dak/allocator.hpp"
#include "dak/errors.hpp"

namespace dak {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Largest n <= cap that keeps waves no higher than at cap, preferring an
// exact divisor of the row count.
int wave_aligned(std::int64_t rows, int cap) {
    if (rows <= cap) return static_cast<int>(rows);
    const std::int64_t waves_at_cap = ceil_div(rows, cap);
    for (int d = cap; d > 1; --d) {
        if (rows % d == 0 && rows / d <= waves_at_cap) return d;
    }
    return cap;
}

// Predicted time of the slower tier with `host` SMs on host rows, from the
// compute share and the bytes each tier reads.
double tier_time(const TilePartition& p, const HardwareSpec& hw, int host) {
    const double x = p.achieved_ratio;
    const double c = static_cast<double>(p.offloadable_bytes);
    const double work = p.compute_time_s * hw.sm_count;
    const int gpu = hw.sm_count - host;
    double t = 0.0;
    if (p.host_tile_rows > 0) {
        const double bh = hw.host_bandwidth_gbps() * 1e9;
        t = std::max(t, host > 0 ? x * work / host : std::numeric_limits<double>::infinity());
        if (bh > 0.0) t = std::max(t, x * c / bh);
    }
    if (p.gpu_tile_rows > 0) {
        t = std::max(t, gpu > 0 ? (1.0 - x) * work / gpu : std::numeric_limits<double>::infinity());
        t = std::max(t, (1.0 - x) * c / (hw.hbm_bandwidth_gbps * 1e9));
    }
    return t;
}

void check_tiles(const TileDims& t) {
    if (t.m <= 0 || t.n <= 0 || t.k <= 0) throw std::invalid_argument("tile dims must be positive");
}

}  // namespace

std::int64_t TilePartition::rows_in(std::int64_t r) const {
    return std::min(tile.m, m - r * tile.m);
}

std::int64_t TilePartition::row_bytes(std::int64_t r) const {
    return rows_in(r) * k * dtype_bytes;
}

std::int64_t TilePartition::column_blocks() const { return ceil_div(n, tile.n); }

std::int64_t TilePartition::block_width(std::int64_t b) const { return std::min(tile.n, n - b * tile.n); }

std::int64_t TilePartition::host_bytes() const {
    if (host_tile_rows == 0) return 0;
    return (host_tile_rows - 1) * tile.m * k * dtype_bytes + row_bytes(host_tile_rows - 1);
}

int TilePartition::host_fetchers() const { return static_cast<int>(clusters.size()); }

TileDims effective_tiles(const OperationProfile& op, const TileDims& tiles) {
    TileDims t = tiles;
    if (op.kind == OpKind::attention) t.m = 1;
    return t;
}

TilePartition partition_rows(const OperationProfile& op, std::int64_t host_rows, double target_ratio,
                             const TileDims& tiles) {
    const TileDims t = effective_tiles(op, tiles);
    check_tiles(t);
    if (op.shape.m <= 0 || op.shape.k <= 0 || op.shape.n <= 0) {
        throw std::invalid_argument("op '" + op.id + "' has a non-positive GEMM shape");
    }
    if (op.shape.m * op.shape.k * op.dtype_bytes != op.offloadable_bytes) {
        throw std::invalid_argument("op '" + op.id + "': M x K x dtype does not match offloadable bytes");
    }
    TilePartition p;
    p.op_id = op.id;
    p.kind = op.kind;
    p.m = op.shape.m;
    p.k = op.shape.k;
    p.n = op.shape.n;
    p.tile = t;
    p.dtype_bytes = op.dtype_bytes;
    const std::int64_t rows = ceil_div(p.m, t.m);
    if (host_rows < 0 || host_rows > rows) {
        throw std::invalid_argument("op '" + op.id + "': host rows out of range");
    }
    p.host_tile_rows = host_rows;
    p.gpu_tile_rows = rows - host_rows;
    p.target_ratio = target_ratio;
    p.offloadable_bytes = op.offloadable_bytes;
    p.compute_time_s = op.compute_time_s;
    p.achieved_ratio = static_cast<double>(p.host_bytes()) / static_cast<double>(p.offloadable_bytes);
    return p;
}

TilePartition partition_op(const OperationProfile& op, double x, const TileDims& tiles) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("offload ratio must be in [0, 1]");
    const TileDims t = effective_tiles(op, tiles);
    check_tiles(t);
    const std::int64_t rows = ceil_div(std::max<std::int64_t>(op.shape.m, 1), t.m);
    const auto host = static_cast<std::int64_t>(std::floor(x * static_cast<double>(rows) + 0.5 + 1e-9));
    return partition_rows(op, std::min(host, rows), x, tiles);
}

TilePartition assign_sms(TilePartition p, const HardwareSpec& hw, bool congestion_control) {
    p.clusters.clear();
    p.multicast_enabled = false;
    const int slots = hw.smem_slots_per_sm;
    if (p.host_tile_rows == 0) {
        p.n_sm_host = 0;
        p.n_sm_gpu = p.gpu_tile_rows > 0 ? hw.sm_count : 0;
        p.inflight_window = congestion_control ? std::min(hw.max_inflight_per_sm, slots) : slots;
        return p;
    }
    int share = hw.sm_count;
    if (p.gpu_tile_rows > 0) {
        if (hw.sm_count < 2) throw std::invalid_argument("both tiers hold rows but sm_count < 2");
        const double prop = static_cast<double>(hw.sm_count) * static_cast<double>(p.host_tile_rows) /
                            static_cast<double>(p.total_rows());
        share = std::clamp(static_cast<int>(std::lround(prop)), 1, hw.sm_count - 1);
    }
    const int cap = congestion_control ? std::min(share, hw.max_sm_host) : share;
    int n = wave_aligned(p.host_tile_rows, cap);
    int window = congestion_control ? std::min(hw.max_inflight_per_sm, slots) : slots;

    if (congestion_control && p.compute_time_s > 0.0) {
        // Few host SMs starve compute-heavy ops. Spread the host rows over as
        // many SMs as their compute needs, keeping the total in-flight
        // volume inside the budget by shrinking the per-SM window.
        // Search up to the SM count the host compute share asks for, and
        // take the fewest SMs that minimise the slower tier.
        const double x = p.achieved_ratio;
        const double c = static_cast<double>(p.offloadable_bytes);
        const double bh = hw.host_bandwidth_gbps() * 1e9;
        const double t_star = std::max({p.compute_time_s, x * c / bh, (1.0 - x) * c / (hw.hbm_bandwidth_gbps * 1e9)});
        const auto needed = static_cast<int>(std::ceil(x * p.compute_time_s * hw.sm_count / t_star - 1e-9));
        const int limit = std::min(needed, p.gpu_tile_rows > 0 ? hw.sm_count - 1 : hw.sm_count);
        int raised = n;
        for (int cand = n + 1; cand <= limit; ++cand) {
            if (tier_time(p, hw, cand) < tier_time(p, hw, raised)) raised = cand;
        }
        if (raised > n) {
            n = raised;
            window = static_cast<int>(std::max<long long>(1, hw.inflight_budget() / n));
            window = std::min(window, slots);
        }
    }
    p.n_sm_host = n;
    p.n_sm_gpu = p.gpu_tile_rows > 0 ? hw.sm_count - n : 0;
    p.inflight_window = window;
    return p;
}

TilePartition build_clusters(TilePartition p, const HardwareSpec& hw, bool multicast) {
    p.clusters.clear();
    p.multicast_enabled = multicast && p.host_tile_rows > 0;
    if (p.host_tile_rows == 0 || p.n_sm_host == 0) return p;

    const std::int64_t blocks = p.column_blocks();
    int g = multicast ? static_cast<int>(std::min<std::int64_t>(hw.cluster_size_max, blocks)) : 1;
    int host_sms = p.n_sm_host;
    if (g > host_sms) {
        // Borrow GPU SMs to complete one cluster, keeping one for GPU rows.
        const int spare = p.gpu_tile_rows > 0 ? p.n_sm_gpu - 1 : hw.sm_count - host_sms;
        const int borrow = std::min(g - host_sms, std::max(0, spare));
        host_sms += borrow;
        if (p.gpu_tile_rows > 0) p.n_sm_gpu -= borrow;
        g = std::min(g, host_sms);
    }
    int n_clusters = std::max(1, host_sms / g);
    // Round up to a whole extra cluster only when the SMs dropped by
    // rounding down would slow the op.
    const int spare = p.gpu_tile_rows > 0 ? p.n_sm_gpu - 1 : hw.sm_count - host_sms;
    const int up = (n_clusters + 1) * g;
    if (host_sms % g != 0 && up - host_sms <= spare &&
        tier_time(p, hw, up) < tier_time(p, hw, n_clusters * g)) {
        ++n_clusters;
    }
    const int used = n_clusters * g;
    if (p.gpu_tile_rows > 0) p.n_sm_gpu += host_sms - used;
    p.n_sm_host = used;

    // Work is row-major over (row, column group) and split into equal
    // contiguous shares, so a cluster may serve part of a row.
    const std::int64_t groups = ceil_div(blocks, g);
    const std::int64_t items = p.host_tile_rows * groups;
    for (int c = 0; c < n_clusters; ++c) {
        Cluster cl;
        for (int s = 0; s < g; ++s) cl.sms.push_back(c * g + s);
        cl.initiator = cl.sms.front();
        const std::int64_t lo = items * c / n_clusters;
        const std::int64_t hi = std::max(lo + 1, ceil_div(items * (c + 1), n_clusters));
        for (std::int64_t it = lo; it < std::min(hi, items); ++it) {
            const std::int64_t row = it / groups;
            if (cl.host_rows.empty() || cl.host_rows.back() != row) cl.host_rows.push_back(row);
        }
        p.clusters.push_back(std::move(cl));
    }
    return p;
}

std::int64_t host_traffic(const TilePartition& p) {
    if (p.host_tile_rows == 0 || p.clusters.empty()) return 0;
    std::size_t g = 1;
    for (const auto& c : p.clusters) g = std::max(g, c.sms.size());
    const std::int64_t fetch_groups = ceil_div(p.column_blocks(), static_cast<std::int64_t>(g));
    return p.host_bytes() * fetch_groups;
}

double amplification(const TilePartition& p) {
    const std::int64_t bytes = p.host_bytes();
    if (bytes == 0) return 1.0;
    return static_cast<double>(host_traffic(p)) / static_cast<double>(bytes);
}

std::vector<std::int64_t> reconcile_host_rows(std::span<const OperationProfile> ops, std::span<const double> ratios,
                                              const HardwareSpec& hw, const TileDims& tiles) {
    if (ops.size() != ratios.size()) throw std::invalid_argument("reconcile_host_rows: size mismatch");
    const std::size_t n = ops.size();
    std::vector<std::int64_t> rows(n), host(n), row_bytes(n);
    std::vector<double> remainder(n), bytes(n);
    double budget = 0.0;
    double placed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const TileDims t = effective_tiles(ops[i], tiles);
        check_tiles(t);
        rows[i] = ceil_div(ops[i].shape.m, t.m);
        row_bytes[i] = t.m * ops[i].shape.k * ops[i].dtype_bytes;
        bytes[i] = static_cast<double>(ops[i].offloadable_bytes);
        const double target = ratios[i] * static_cast<double>(rows[i]);
        host[i] = std::min(rows[i], static_cast<std::int64_t>(std::floor(target + 1e-9)));
        remainder[i] = target - static_cast<double>(host[i]);
        budget += ratios[i] * bytes[i];
    }
    auto host_bytes = [&](std::size_t i, std::int64_t h) {
        return h >= rows[i] ? bytes[i] : static_cast<double>(h * row_bytes[i]);
    };
    for (std::size_t i = 0; i < n; ++i) placed += host_bytes(i, host[i]);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i : order) {
        if (host[i] >= rows[i] || remainder[i] <= 1e-12) continue;
        const double next = host_bytes(i, host[i] + 1);
        const double x_star = turning_point(ops[i], hw);
        if (ratios[i] <= x_star + 1e-12 && next / bytes[i] > x_star + 1e-12) continue;
        const double step = next - host_bytes(i, host[i]);
        if (budget - placed >= step / 2.0) {
            ++host[i];
            placed += step;
        }
    }
    return host;
}

nlohmann::json to_json(const TilePartition& p) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : p.clusters) {
        clusters.push_back({{"sms", c.sms}, {"initiator", c.initiator}, {"host_rows", c.host_rows}});
    }
    return {
        {"op_id", p.op_id},
        {"kind", to_string(p.kind)},
        {"m", p.m},
        {"k", p.k},
        {"n", p.n},
        {"tile", {{"m", p.tile.m}, {"n", p.tile.n}, {"k", p.tile.k}}},
        {"dtype_bytes", p.dtype_bytes},
        {"host_tile_rows", p.host_tile_rows},
        {"gpu_tile_rows", p.gpu_tile_rows},
        {"n_sm_host", p.n_sm_host},
        {"n_sm_gpu", p.n_sm_gpu},
        {"inflight_window", p.inflight_window},
        {"clusters", clusters},
        {"multicast_enabled", p.multicast_enabled},
        {"target_ratio", p.target_ratio},
        {"achieved_ratio", p.achieved_ratio},
        {"offloadable_bytes", p.offloadable_bytes},
        {"compute_time_s", p.compute_time_s},
        {"host_traffic_bytes", host_traffic(p)},
        {"amplification", amplification(p)},
    };
}

TilePartition partition_from_json(const nlohmann::json& doc) {
    try {
        TilePartition p;
        p.op_id = doc.at("op_id").get<std::string>();
        const auto kind = doc.at("kind").get<std::string>();
        if (kind != "linear" && kind != "attention") throw ConfigError("unknown op kind '" + kind + "'");
        p.kind = kind == "linear" ? OpKind::linear : OpKind::attention;
        p.m = doc.at("m").get<std::int64_t>();
        p.k = doc.at("k").get<std::int64_t>();
        p.n = doc.at("n").get<std::int64_t>();
        const auto& t = doc.at("tile");
        p.tile = {t.at("m").get<std::int64_t>(), t.at("n").get<std::int64_t>(), t.at("k").get<std::int64_t>()};
        p.dtype_bytes = doc.at("dtype_bytes").get<int>();
        p.host_tile_rows = doc.at("host_tile_rows").get<std::int64_t>();
        p.gpu_tile_rows = doc.at("gpu_tile_rows").get<std::int64_t>();
        p.n_sm_host = doc.at("n_sm_host").get<int>();
        p.n_sm_gpu = doc.at("n_sm_gpu").get<int>();
        p.inflight_window = doc.at("inflight_window").get<int>();
        for (const auto& c : doc.at("clusters")) {
            p.clusters.push_back({c.at("sms").get<std::vector<int>>(), c.at("initiator").get<int>(),
                                  c.at("host_rows").get<std::vector<std::int64_t>>()});
        }
        p.multicast_enabled = doc.at("multicast_enabled").get<bool>();
        p.target_ratio = doc.at("target_ratio").get<double>();
        p.achieved_ratio = doc.at("achieved_ratio").get<double>();
        p.offloadable_bytes = doc.at("offloadable_bytes").get<std::int64_t>();
        p.compute_time_s = doc.at("compute_time_s").get<double>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed partition document: ") + e.what());
    }
}

}  // namespace dak
