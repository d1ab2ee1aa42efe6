// SPDX-License-Identifier: Apache-2.0

#include "dak/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <future>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <thread>

#include "dak/errors.hpp"

namespace dak {

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t ceil_ns(double v) { return v <= 0.0 ? 0 : static_cast<std::int64_t>(std::ceil(v - 1e-6)); }

// A run of identical chunks within one worker's queue.
struct Run {
    std::int64_t bytes;
    std::int64_t compute_ns;
    std::int64_t delivered;  // bytes credited to consumers per chunk
    std::int64_t count;
};

enum class Tier { host, gpu };

struct Worker {
    Tier tier = Tier::gpu;
    int window = 1;
    int slots = 2;
    std::vector<Run> runs;
    std::size_t run_idx = 0;
    std::int64_t run_pos = 0;
    int inflight = 0;
    std::deque<std::pair<std::int64_t, std::int64_t>> ready;  // (compute_ns, delivered)
    bool computing = false;
    std::int64_t computing_delivered = 0;

    [[nodiscard]] bool has_pending_fetch() const { return run_idx < runs.size(); }
    [[nodiscard]] int occupied() const {
        return inflight + static_cast<int>(ready.size()) + (computing ? 1 : 0);
    }
    void push_chunks(std::int64_t bytes, std::int64_t compute_ns, std::int64_t delivered, std::int64_t count) {
        if (count <= 0) return;
        if (!runs.empty() && runs.back().bytes == bytes && runs.back().compute_ns == compute_ns &&
            runs.back().delivered == delivered) {
            runs.back().count += count;
        } else {
            runs.push_back({bytes, compute_ns, delivered, count});
        }
    }
};

// Processor-sharing channel tracked in virtual time: every active transfer
// has received the same cumulative service `vtime`, so completion order is
// the order of finish tags.
class Channel {
   public:
    struct Transfer {
        double finish;
        std::uint64_t seq;
        int worker;
        std::int64_t compute_ns;
        std::int64_t delivered;
        bool operator>(const Transfer& o) const { return finish != o.finish ? finish > o.finish : seq > o.seq; }
    };

    void set_capacity(double bytes_per_ns) { capacity_ = bytes_per_ns; }
    [[nodiscard]] std::size_t active() const { return heap_.size(); }
    [[nodiscard]] double rate() const { return heap_.empty() ? 0.0 : capacity_ / static_cast<double>(heap_.size()); }

    void add(std::int64_t bytes, int worker, std::int64_t compute_ns, std::int64_t delivered) {
        heap_.push({vtime_ + static_cast<double>(bytes), seq_++, worker, compute_ns, delivered});
        traffic_ += bytes;
    }

    [[nodiscard]] std::int64_t next_dt() const {
        if (heap_.empty()) return kNever;
        const double r = rate();
        if (r <= 0.0) throw std::runtime_error("transfer pending on a channel with zero capacity");
        return ceil_ns((heap_.top().finish - vtime_) / r);
    }

    void advance(std::int64_t dt) {
        if (heap_.empty() || dt <= 0) return;
        vtime_ += rate() * static_cast<double>(dt);
        busy_ns_ += dt;
    }

    template <typename F>
    void pop_finished(F&& on_done) {
        while (!heap_.empty()) {
            const Transfer& top = heap_.top();
            if (top.finish > vtime_ + 1e-9 * std::abs(top.finish) + 1e-6) break;
            on_done(top);
            heap_.pop();
        }
        if (heap_.empty()) vtime_ = 0.0;  // keeps tags small across idle periods
    }

    [[nodiscard]] std::int64_t busy_ns() const { return busy_ns_; }
    [[nodiscard]] std::int64_t traffic() const { return traffic_; }

   private:
    double capacity_ = 0.0;
    double vtime_ = 0.0;
    std::uint64_t seq_ = 0;
    std::int64_t busy_ns_ = 0;
    std::int64_t traffic_ = 0;
    std::priority_queue<Transfer, std::vector<Transfer>, std::greater<>> heap_;
};

struct Event {
    std::int64_t time;
    int worker;
    int kind;  // 0: fetch done, 1: compute done
    std::int64_t compute_ns;
    std::int64_t delivered;
    bool operator>(const Event& o) const {
        if (time != o.time) return time > o.time;
        if (worker != o.worker) return worker > o.worker;
        return kind > o.kind;
    }
};

std::int64_t chunk_size(const TilePartition& p, const HardwareSpec& hw, const SimConfig& cfg) {
    const std::int64_t c = cfg.chunk_bytes > 0 ? cfg.chunk_bytes : cfg.tiles.m * cfg.tiles.k * p.dtype_bytes;
    if (c > hw.smem_slot_bytes) {
        throw ConfigError("chunk of " + std::to_string(c) + " bytes exceeds the " + std::to_string(hw.smem_slot_bytes) +
                          "-byte SMEM slot");
    }
    return c;
}

// Tier work as one ordered chunk sequence, split SplitK-style into
// contiguous, equal-count ranges so a worker may cover part of a tile row.
class ChunkSequence {
   public:
    void push(std::int64_t bytes, std::int64_t compute_ns, std::int64_t delivered, std::int64_t count) {
        if (count <= 0) return;
        runs_.push_back({bytes, compute_ns, delivered, count});
        total_ += count;
    }
    [[nodiscard]] std::int64_t total() const { return total_; }

    // Chunks [lo, hi) of the sequence appended to `w`.
    void slice_into(Worker& w, std::int64_t lo, std::int64_t hi) const {
        std::int64_t base = 0;
        for (const Run& r : runs_) {
            const std::int64_t a = std::max(lo, base);
            const std::int64_t b = std::min(hi, base + r.count);
            if (a < b) w.push_chunks(r.bytes, r.compute_ns, r.delivered, b - a);
            base += r.count;
            if (base >= hi) break;
        }
    }

   private:
    std::vector<Run> runs_;
    std::int64_t total_ = 0;
};

std::vector<Worker> build_workers(const TilePartition& p, const HardwareSpec& hw, const SimConfig& cfg) {
    const std::int64_t chunk = chunk_size(p, hw, cfg);
    const double c_total = static_cast<double>(p.offloadable_bytes);
    const double per_sm_scale = p.compute_time_s * 1e9 * hw.sm_count;
    auto compute_ns = [&](std::int64_t bytes, std::int64_t cols) {
        return ceil_ns(per_sm_scale * (static_cast<double>(bytes) / c_total) *
                       (static_cast<double>(cols) / static_cast<double>(p.n)));
    };
    auto add_row = [&](ChunkSequence& seq, std::int64_t row, std::int64_t cols, bool credit) {
        const std::int64_t bytes = p.row_bytes(row);
        const std::int64_t full = bytes / chunk;
        const std::int64_t tail = bytes % chunk;
        seq.push(chunk, compute_ns(chunk, cols), credit ? chunk : 0, full);
        if (tail > 0) seq.push(tail, compute_ns(tail, cols), credit ? tail : 0, 1);
    };
    auto spread = [&](const ChunkSequence& seq, std::int64_t n, Tier tier, int window,
                      std::vector<Worker>& out) {
        for (std::int64_t s = 0; s < n; ++s) {
            Worker w;
            w.tier = tier;
            w.window = window;
            w.slots = hw.smem_slots_per_sm;
            seq.slice_into(w, seq.total() * s / n, seq.total() * (s + 1) / n);
            out.push_back(std::move(w));
        }
    };

    std::vector<Worker> workers;
    if (p.host_tile_rows > 0) {
        if (p.clusters.empty()) throw std::invalid_argument("partition '" + p.op_id + "' has host rows but no clusters");
        std::size_t g = 1;
        for (const auto& c : p.clusters) g = std::max(g, c.sms.size());
        const auto gs = static_cast<std::int64_t>(g);
        const std::int64_t groups = ceil_div(p.column_blocks(), gs);
        // Row-major over (row, column group): host-locality first.
        ChunkSequence seq;
        for (std::int64_t row = 0; row < p.host_tile_rows; ++row) {
            for (std::int64_t group = 0; group < groups; ++group) {
                // Members compute their column blocks in parallel; the
                // widest block paces the cluster.
                add_row(seq, row, p.block_width(group * gs), group == 0);
            }
        }
        spread(seq, static_cast<std::int64_t>(p.clusters.size()), Tier::host, std::max(1, p.inflight_window), workers);
    }
    if (p.gpu_tile_rows > 0) {
        if (p.n_sm_gpu <= 0) throw std::invalid_argument("partition '" + p.op_id + "' has GPU rows but no GPU SMs");
        ChunkSequence seq;
        for (std::int64_t r = p.host_tile_rows; r < p.total_rows(); ++r) add_row(seq, r, p.n, true);
        spread(seq, p.n_sm_gpu, Tier::gpu, hw.smem_slots_per_sm, workers);
    }
    return workers;
}

}  // namespace

std::string to_string(Strategy s) { return s == Strategy::direct_access ? "direct_access" : "prefetch"; }

Strategy strategy_from_string(const std::string& s) {
    if (s == "direct_access" || s == "direct") return Strategy::direct_access;
    if (s == "prefetch") return Strategy::prefetch;
    throw ConfigError("unknown strategy '" + s + "' (expected direct or prefetch)");
}

void validate(const SimConfig& cfg) {
    if (cfg.chunk_bytes < 0) throw ConfigError("chunk_bytes must be >= 0");
    if (cfg.prefetch_depth < 1) throw ConfigError("prefetch_depth must be >= 1");
    if (!(cfg.hbm_contention_factor > 0.0 && cfg.hbm_contention_factor <= 1.0)) {
        throw ConfigError("hbm_contention_factor must be in (0, 1]");
    }
    if (cfg.tiles.m <= 0 || cfg.tiles.n <= 0 || cfg.tiles.k <= 0) throw ConfigError("tile dims must be positive");
}

OpTiming simulate_partition(const TilePartition& p, const HardwareSpec& hw, const SimConfig& cfg, double hbm_scale) {
    std::vector<Worker> workers = build_workers(p, hw, cfg);
    Channel hbm;
    Channel link;
    link.set_capacity(hw.host_bandwidth_gbps());
    const long long budget = hw.inflight_budget();
    std::priority_queue<Event, std::vector<Event>, std::greater<>> computes;
    OpTiming out;

    auto issue = [&](int id, std::int64_t now) {
        Worker& w = workers[id];
        if (!w.computing && !w.ready.empty()) {
            const auto [ns, delivered] = w.ready.front();
            w.ready.pop_front();
            w.computing = true;
            w.computing_delivered = delivered;
            computes.push({now + ns, id, 1, ns, delivered});
        }
        while (w.has_pending_fetch() && w.inflight < w.window && w.occupied() < w.slots) {
            const Run& r = w.runs[w.run_idx];
            (w.tier == Tier::host ? link : hbm).add(r.bytes, id, r.compute_ns, r.delivered);
            ++w.inflight;
            if (++w.run_pos == r.count) {
                ++w.run_idx;
                w.run_pos = 0;
            }
        }
    };

    std::int64_t now = 0;
    for (int i = 0; i < static_cast<int>(workers.size()); ++i) issue(i, now);

    std::vector<Event> batch;
    while (true) {
        const auto excess = static_cast<long long>(link.active()) - budget;
        hbm.set_capacity(hw.hbm_bandwidth_gbps * hbm_scale * penalty_multiplier(hw, static_cast<double>(excess)));

        std::int64_t dt = std::min(hbm.next_dt(), link.next_dt());
        if (!computes.empty()) dt = std::min(dt, computes.top().time - now);
        if (dt == kNever) break;

        hbm.advance(dt);
        link.advance(dt);
        now += dt;

        batch.clear();
        while (!computes.empty() && computes.top().time == now) {
            batch.push_back(computes.top());
            computes.pop();
        }
        auto on_fetch = [&](const Channel::Transfer& t) {
            batch.push_back({now, t.worker, 0, t.compute_ns, t.delivered});
        };
        hbm.pop_finished(on_fetch);
        link.pop_finished(on_fetch);
        std::sort(batch.begin(), batch.end(), [](const Event& a, const Event& b) { return b > a; });

        for (const Event& e : batch) {
            Worker& w = workers[e.worker];
            if (e.kind == 0) {
                --w.inflight;
                w.ready.emplace_back(e.compute_ns, e.delivered);
            } else {
                w.computing = false;
                out.delivered_bytes += w.computing_delivered;
            }
        }
        int last = -1;
        for (const Event& e : batch) {
            if (e.worker != last) issue(e.worker, now);
            last = e.worker;
        }
    }
    out.makespan_ns = now;
    out.interconnect_busy_ns = link.busy_ns();
    out.host_traffic_bytes = link.traffic();
    return out;
}

namespace {

OpReport make_report(const TilePartition& p, const OpTiming& t) {
    OpReport r;
    r.op_id = p.op_id;
    r.ratio = p.achieved_ratio;
    r.latency_s = static_cast<double>(t.makespan_ns) * 1e-9;
    r.effective_bandwidth_gbps =
        t.makespan_ns > 0 ? static_cast<double>(p.offloadable_bytes) / static_cast<double>(t.makespan_ns) : 0.0;
    r.host_bytes = p.host_bytes();
    r.host_traffic_bytes = t.host_traffic_bytes;
    r.amplification =
        r.host_bytes > 0 ? static_cast<double>(t.host_traffic_bytes) / static_cast<double>(r.host_bytes) : 1.0;
    r.n_sm_host = p.n_sm_host;
    r.n_sm_gpu = p.n_sm_gpu;
    r.interconnect_busy_s = static_cast<double>(t.interconnect_busy_ns) * 1e-9;
    return r;
}

// Identical ops (same shape and placement in every layer) simulate once.
class TimingCache {
   public:
    TimingCache(const HardwareSpec& hw, const SimConfig& cfg) : hw_(hw), cfg_(cfg) {}

    const OpTiming& get(const TilePartition& p, double hbm_scale) {
        nlohmann::json key = to_json(p);
        key.erase("op_id");
        key["hbm_scale"] = hbm_scale;
        auto [it, inserted] = cache_.try_emplace(key.dump());
        if (inserted) it->second = simulate_partition(p, hw_, cfg_, hbm_scale);
        return it->second;
    }

   private:
    const HardwareSpec& hw_;
    const SimConfig& cfg_;
    std::map<std::string, OpTiming> cache_;
};

TilePartition placed(const OperationProfile& op, std::int64_t host_rows, double target, const HardwareSpec& hw,
                     const SimConfig& cfg) {
    TilePartition p = partition_rows(op, host_rows, target, cfg.tiles);
    p = assign_sms(std::move(p), hw, cfg.congestion_control);
    return build_clusters(std::move(p), hw, cfg.multicast);
}

std::vector<double> plan_ratios(std::span<const OperationProfile> ops, const OffloadPlan& plan) {
    std::vector<double> ratios;
    ratios.reserve(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const PlanEntry* e = i < plan.entries.size() && plan.entries[i].op_id == ops[i].id
                                 ? &plan.entries[i]
                                 : plan.find(ops[i].id);
        if (e == nullptr) throw std::invalid_argument("plan has no ratio for op '" + ops[i].id + "'");
        if (!(e->ratio >= 0.0 && e->ratio <= 1.0)) {
            throw std::invalid_argument("plan ratio for op '" + ops[i].id + "' is outside [0, 1]");
        }
        ratios.push_back(e->ratio);
    }
    return ratios;
}

void finish_totals(SimReport& report, std::span<const OperationProfile> ops, std::int64_t total_ns,
                   std::int64_t busy_ns) {
    double bytes = 0.0;
    for (const auto& op : ops) bytes += static_cast<double>(op.offloadable_bytes);
    report.total_latency_s = static_cast<double>(total_ns) * 1e-9;
    report.tpot_s = report.total_latency_s;
    report.aggregate_bandwidth_gbps = total_ns > 0 ? bytes / static_cast<double>(total_ns) : 0.0;
    report.bubbles =
        total_ns > 0 ? 1.0 - static_cast<double>(busy_ns) / static_cast<double>(total_ns) : 0.0;
    for (const auto& r : report.per_op) report.host_traffic_bytes += r.host_traffic_bytes;
}

}  // namespace

OpReport simulate_op(const TilePartition& p, const HardwareSpec& hw, const SimConfig& cfg) {
    validate(cfg);
    return make_report(p, simulate_partition(p, hw, cfg));
}

OpReport simulate_op(const OperationProfile& op, double x, const HardwareSpec& hw, const SimConfig& cfg) {
    validate(cfg);
    TilePartition p = partition_op(op, x, cfg.tiles);
    p = assign_sms(std::move(p), hw, cfg.congestion_control);
    p = build_clusters(std::move(p), hw, cfg.multicast);
    return make_report(p, simulate_partition(p, hw, cfg));
}

std::vector<TilePartition> plan_partitions(std::span<const OperationProfile> ops, const OffloadPlan& plan,
                                           const HardwareSpec& hw, const SimConfig& cfg) {
    const std::vector<double> ratios = plan_ratios(ops, plan);
    const std::vector<std::int64_t> rows = reconcile_host_rows(ops, ratios, hw, cfg.tiles);
    std::vector<TilePartition> parts;
    parts.reserve(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) parts.push_back(placed(ops[i], rows[i], ratios[i], hw, cfg));
    return parts;
}

SimReport simulate_pipeline(std::span<const OperationProfile> ops, const OffloadPlan& plan, const HardwareSpec& hw,
                            const SimConfig& cfg) {
    validate(cfg);
    SimReport report;
    report.strategy = Strategy::direct_access;
    report.global_ratio = plan.global_ratio;
    TimingCache cache(hw, cfg);
    std::int64_t total_ns = 0;
    std::int64_t busy_ns = 0;
    for (const TilePartition& p : plan_partitions(ops, plan, hw, cfg)) {
        const OpTiming& t = cache.get(p, 1.0);
        report.per_op.push_back(make_report(p, t));
        total_ns += t.makespan_ns;
        busy_ns += t.interconnect_busy_ns;
    }
    finish_totals(report, ops, total_ns, busy_ns);
    return report;
}

SimReport simulate_prefetch(std::span<const OperationProfile> ops, const OffloadPlan& plan, const HardwareSpec& hw,
                            const SimConfig& cfg) {
    validate(cfg);
    SimReport report;
    report.strategy = Strategy::prefetch;
    report.global_ratio = plan.global_ratio;
    if (ops.empty()) return report;

    const std::vector<TilePartition> parts = plan_partitions(ops, plan, hw, cfg);

    // Layers are maximal runs of consecutive ops sharing a layer index.
    std::vector<std::size_t> layer_begin;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (i == 0 || ops[i].layer_index != ops[i - 1].layer_index) layer_begin.push_back(i);
    }
    layer_begin.push_back(ops.size());
    const std::size_t n_layers = layer_begin.size() - 1;

    std::vector<std::int64_t> staged(n_layers, 0);
    double resident = 0.0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        for (std::size_t i = layer_begin[l]; i < layer_begin[l + 1]; ++i) {
            staged[l] += parts[i].host_bytes();
            resident += static_cast<double>(parts[i].offloadable_bytes - parts[i].host_bytes());
        }
    }
    const std::int64_t max_staged = *std::max_element(staged.begin(), staged.end());
    const double needed = resident + static_cast<double>(cfg.prefetch_depth) * static_cast<double>(max_staged);
    if (needed > hw.hbm_capacity_gb * 1e9) {
        throw CapacityError("prefetch staging needs " + std::to_string(needed / 1e9) + " GB of HBM but only " +
                            std::to_string(hw.hbm_capacity_gb) + " GB is available");
    }
    const double bh = hw.host_bandwidth_gbps();
    if (max_staged > 0 && bh <= 0.0) throw ConfigError("prefetch needs a host path but host bandwidth is zero");

    // Once staged, every op reads HBM only.
    TimingCache cache(hw, cfg);
    std::vector<std::int64_t> free_ns(ops.size()), contended_ns(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const TilePartition local = placed(ops[i], 0, 0.0, hw, cfg);
        free_ns[i] = cache.get(local, 1.0).makespan_ns;
        contended_ns[i] = cache.get(local, cfg.hbm_contention_factor).makespan_ns;
    }

    std::vector<std::int64_t> p_start(n_layers, 0), p_end(n_layers, 0), c_end(n_layers, 0);
    std::size_t scheduled = 0;
    auto schedule_through = [&](std::size_t last) {
        const auto depth = static_cast<std::size_t>(cfg.prefetch_depth);
        for (; scheduled <= last && scheduled < n_layers; ++scheduled) {
            const std::size_t l = scheduled;
            std::int64_t start = l > 0 ? p_end[l - 1] : 0;
            if (l >= depth) start = std::max(start, c_end[l - depth]);  // staging buffer freed
            p_start[l] = start;
            p_end[l] = start + (staged[l] > 0 ? ceil_ns(static_cast<double>(staged[l]) / bh) : 0);
        }
    };

    // Advances an op from `t` through free and contended stretches.
    auto run_op = [&](std::int64_t t, std::size_t i) {
        double remaining = 1.0;
        for (std::size_t l = 0; l < scheduled; ++l) {
            const std::int64_t a = p_start[l];
            const std::int64_t b = p_end[l];
            if (b <= t || a == b) continue;
            if (t < a) {
                const double span = static_cast<double>(a - t);
                const double need = remaining * static_cast<double>(free_ns[i]);
                if (need <= span) return t + ceil_ns(need);
                remaining -= span / static_cast<double>(free_ns[i]);
                t = a;
            }
            const double span = static_cast<double>(b - t);
            const double need = remaining * static_cast<double>(contended_ns[i]);
            if (need <= span) return t + ceil_ns(need);
            remaining -= span / static_cast<double>(contended_ns[i]);
            t = b;
        }
        return t + ceil_ns(remaining * static_cast<double>(free_ns[i]));
    };

    std::int64_t t = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        schedule_through(l + static_cast<std::size_t>(cfg.prefetch_depth) - 1);
        t = std::max(t, p_end[l]);
        for (std::size_t i = layer_begin[l]; i < layer_begin[l + 1]; ++i) {
            const std::int64_t end = run_op(t, i);
            OpReport r;
            r.op_id = ops[i].id;
            r.ratio = parts[i].achieved_ratio;
            r.latency_s = static_cast<double>(end - t) * 1e-9;
            r.effective_bandwidth_gbps =
                end > t ? static_cast<double>(ops[i].offloadable_bytes) / static_cast<double>(end - t) : 0.0;
            r.host_bytes = parts[i].host_bytes();
            r.host_traffic_bytes = r.host_bytes;
            r.amplification = 1.0;
            r.n_sm_host = 0;
            r.n_sm_gpu = hw.sm_count;
            report.per_op.push_back(r);
            t = end;
        }
        c_end[l] = t;
    }
    std::int64_t busy = 0;
    for (std::size_t l = 0; l < n_layers; ++l) busy += p_end[l] - p_start[l];
    finish_totals(report, ops, t, busy);
    return report;
}

SimReport simulate(std::span<const OperationProfile> ops, const OffloadPlan& plan, const HardwareSpec& hw,
                   const SimConfig& cfg) {
    return cfg.strategy == Strategy::prefetch ? simulate_prefetch(ops, plan, hw, cfg)
                                              : simulate_pipeline(ops, plan, hw, cfg);
}

std::vector<SimReport> sweep_ratios(std::span<const OperationProfile> ops, const HardwareSpec& hw,
                                    const SimConfig& cfg, std::span<const double> ratios) {
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("sweep ratios must lie in [0, 1]");
    }
    auto run = [&](double r) {
        SimReport rep = simulate(ops, greedy_allocate(ops, r, hw), hw, cfg);
        rep.global_ratio = r;
        return rep;
    };
    std::vector<SimReport> out;
    out.reserve(ratios.size());
    if (ops.empty()) {
        for (double r : ratios) {
            SimReport rep;
            rep.strategy = cfg.strategy;
            rep.global_ratio = r;
            out.push_back(rep);
        }
        return out;
    }
    const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t begin = 0; begin < ratios.size(); begin += width) {
        std::vector<std::future<SimReport>> batch;
        for (std::size_t i = begin; i < std::min(ratios.size(), begin + width); ++i) {
            batch.push_back(std::async(std::launch::async, run, ratios[i]));
        }
        for (auto& f : batch) out.push_back(f.get());
    }
    return out;
}

nlohmann::json to_json(const OpReport& r) {
    return {
        {"op_id", r.op_id},
        {"ratio", r.ratio},
        {"latency_s", r.latency_s},
        {"effective_bandwidth_gbps", r.effective_bandwidth_gbps},
        {"host_bytes", r.host_bytes},
        {"host_traffic_bytes", r.host_traffic_bytes},
        {"amplification", r.amplification},
        {"n_sm_host", r.n_sm_host},
        {"n_sm_gpu", r.n_sm_gpu},
        {"interconnect_busy_s", r.interconnect_busy_s},
    };
}

nlohmann::json to_json(const SimReport& r) {
    nlohmann::json per_op = nlohmann::json::array();
    for (const auto& op : r.per_op) per_op.push_back(to_json(op));
    return {
        {"strategy", to_string(r.strategy)},
        {"global_ratio", r.global_ratio},
        {"total_latency_s", r.total_latency_s},
        {"tpot_s", r.tpot_s},
        {"aggregate_bandwidth_gbps", r.aggregate_bandwidth_gbps},
        {"host_traffic_bytes", r.host_traffic_bytes},
        {"bubbles", r.bubbles},
        {"per_op", per_op},
    };
}

SimReport report_from_json(const nlohmann::json& doc) {
    try {
        SimReport r;
        r.strategy = strategy_from_string(doc.at("strategy").get<std::string>());
        r.global_ratio = doc.at("global_ratio").get<double>();
        r.total_latency_s = doc.at("total_latency_s").get<double>();
        r.tpot_s = doc.at("tpot_s").get<double>();
        r.aggregate_bandwidth_gbps = doc.at("aggregate_bandwidth_gbps").get<double>();
        r.host_traffic_bytes = doc.at("host_traffic_bytes").get<std::int64_t>();
        r.bubbles = doc.at("bubbles").get<double>();
        for (const auto& o : doc.at("per_op")) {
            OpReport op;
            op.op_id = o.at("op_id").get<std::string>();
            op.ratio = o.at("ratio").get<double>();
            op.latency_s = o.at("latency_s").get<double>();
            op.effective_bandwidth_gbps = o.at("effective_bandwidth_gbps").get<double>();
            op.host_bytes = o.at("host_bytes").get<std::int64_t>();
            op.host_traffic_bytes = o.at("host_traffic_bytes").get<std::int64_t>();
            op.amplification = o.at("amplification").get<double>();
            op.n_sm_host = o.at("n_sm_host").get<int>();
            op.n_sm_gpu = o.at("n_sm_gpu").get<int>();
            op.interconnect_busy_s = o.at("interconnect_busy_s").get<double>();
            r.per_op.push_back(std::move(op));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed report document: ") + e.what());
    }
}

std::string sweep_csv(std::span<const SimReport> reports) {
    std::string out = std::string(kSweepCsvHeader) + "\n";
    char line[256];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%.6g,%.9g,%.9g,%.9g,%.6g\n", r.global_ratio, r.tpot_s,
                      r.aggregate_bandwidth_gbps, static_cast<double>(r.host_traffic_bytes) / 1e9, r.bubbles);
        out += line;
    }
    return out;
}

}  // namespace dak
