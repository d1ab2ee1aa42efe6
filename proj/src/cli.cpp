// SPDX-License-Identifier: Apache-2.0

#include "dak/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dak/allocator.hpp"
#include "dak/errors.hpp"
#include "dak/hw_model.hpp"
#include "dak/partitioner.hpp"
#include "dak/pipeline.hpp"
#include "dak/simulator.hpp"

#ifndef DAK_CONFIG_DIR
#define DAK_CONFIG_DIR "configs"
#endif

namespace dak {

namespace {

struct RunConfig {
    std::string hw = "gh200";
    std::string model = "opt-30b";
    std::int64_t batch = 1;
    std::int64_t prompt = 1;
    std::int64_t decode = 0;
    std::string phase = "decode";
    std::string strategy = "direct";
    std::optional<double> ratio;
    std::string sweep;
    bool multicast = true;
    bool congestion_control = true;
    std::string format = "json";
    std::string out;
    bool emit_partitions = false;
};

void add_workload_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--hw", cfg.hw, "hardware spec: path or bundled name")->capture_default_str();
    cmd->add_option("--model", cfg.model, "model spec: path or bundled name")->capture_default_str();
    cmd->add_option("--batch", cfg.batch, "batch size")->capture_default_str();
    cmd->add_option("--prompt", cfg.prompt, "prompt length in tokens")->capture_default_str();
    cmd->add_option("--decode", cfg.decode, "decode length in tokens")->capture_default_str();
    cmd->add_option("--phase", cfg.phase, "prefill or decode")
        ->check(CLI::IsMember({"prefill", "decode"}))
        ->capture_default_str();
    cmd->add_flag("--multicast,!--no-multicast", cfg.multicast, "group host readers into multicast clusters (default on)");
    cmd->add_flag("--congestion-control,!--no-congestion-control", cfg.congestion_control,
                  "cap host-reading SMs and in-flight fetches (default on)");
    cmd->add_option("--out", cfg.out, "output file (default: stdout)");
}

void add_format_option(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--format", cfg.format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
}

struct Context {
    HardwareSpec hw;
    ModelSpec model;
    WorkloadSpec workload;
    std::vector<OperationProfile> ops;
    SimConfig sim;
};

Context load_context(const RunConfig& cfg) {
    Context ctx;
    ctx.hw = load_hardware(resolve_config(cfg.hw, "hardware"));
    ctx.model = load_model(resolve_config(cfg.model, "models"));
    ctx.workload = {cfg.batch, cfg.prompt, cfg.decode, phase_from_string(cfg.phase)};
    validate(ctx.workload);
    ctx.ops = build_pipeline(ctx.model, ctx.workload, ctx.hw);
    ctx.sim.strategy = strategy_from_string(cfg.strategy);
    ctx.sim.multicast = cfg.multicast;
    ctx.sim.congestion_control = cfg.congestion_control;
    return ctx;
}

double resolve_ratio(const RunConfig& cfg, const Context& ctx) {
    if (cfg.ratio) {
        if (!(*cfg.ratio >= 0.0 && *cfg.ratio <= 1.0)) throw ConfigError("--ratio must be in [0, 1]");
        return *cfg.ratio;
    }
    return global_offload_ratio(ctx.model, ctx.workload, ctx.hw);
}

void emit(const RunConfig& cfg, const std::string& text, std::ostream& out) {
    if (cfg.out.empty()) {
        out << text;
        return;
    }
    std::ofstream file(cfg.out);
    if (!file) throw ConfigError("cannot open output file '" + cfg.out + "'");
    file << text;
    if (!file.flush()) throw ConfigError("failed writing '" + cfg.out + "'");
}

std::string cmd_plan(const RunConfig& cfg) {
    const Context ctx = load_context(cfg);
    const double r = resolve_ratio(cfg, ctx);
    const OffloadPlan plan = greedy_allocate(ctx.ops, r, ctx.hw);
    nlohmann::json doc = {
        {"hardware", ctx.hw.name},
        {"model", ctx.model.name},
        {"workload", to_json(ctx.workload)},
        {"footprint_bytes", footprint_bytes(ctx.model, ctx.workload)},
        {"kv_cache_bytes", kv_cache_bytes(ctx.model, ctx.workload)},
        {"plan", to_json(plan)},
    };
    if (r == 0.0) doc["note"] = "footprint fits in HBM; nothing is offloaded";
    if (cfg.emit_partitions) {
        nlohmann::json parts = nlohmann::json::array();
        for (const auto& p : plan_partitions(ctx.ops, plan, ctx.hw, ctx.sim)) parts.push_back(to_json(p));
        doc["partitions"] = parts;
    }
    return doc.dump(2) + "\n";
}

std::string cmd_simulate(const RunConfig& cfg) {
    const Context ctx = load_context(cfg);
    const double r = resolve_ratio(cfg, ctx);
    SimReport report = simulate(ctx.ops, greedy_allocate(ctx.ops, r, ctx.hw), ctx.hw, ctx.sim);
    if (cfg.format == "csv") return sweep_csv(std::span<const SimReport>(&report, 1));
    return to_json(report).dump(2) + "\n";
}

std::string cmd_sweep(const RunConfig& cfg) {
    if (cfg.sweep.empty()) throw ConfigError("sweep needs --sweep A:B:STEP");
    const Context ctx = load_context(cfg);
    const std::vector<double> ratios = parse_sweep(cfg.sweep);
    const std::vector<SimReport> reports = sweep_ratios(ctx.ops, ctx.hw, ctx.sim, ratios);
    if (cfg.format == "csv") return sweep_csv(reports);
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : reports) doc.push_back(to_json(r));
    return doc.dump(2) + "\n";
}

std::string cmd_show_hw(const RunConfig& cfg) {
    const HardwareSpec hw = load_hardware(resolve_config(cfg.hw, "hardware"));
    nlohmann::json doc = to_json(hw);
    doc["derived"] = {{"host_bandwidth_gbps", hw.host_bandwidth_gbps()},
                      {"system_peak_bandwidth_gbps", system_peak_bandwidth(hw)},
                      {"machine_balance_flop_per_byte", machine_balance(hw)}};
    return doc.dump(2) + "\n";
}

std::string cmd_show_model(const RunConfig& cfg) {
    const ModelSpec m = load_model(resolve_config(cfg.model, "models"));
    nlohmann::json doc = to_json(m);
    doc["derived"] = {{"weight_bytes", weight_bytes(m)}, {"head_dim", m.effective_head_dim()}};
    return doc.dump(2) + "\n";
}

}  // namespace

std::vector<double> parse_sweep(const std::string& spec) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string field;
    while (std::getline(ss, field, ':')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(field, &used));
            if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
            throw ConfigError("--sweep: '" + field + "' is not a number");
        }
    }
    if (parts.size() != 3) throw ConfigError("--sweep expects A:B:STEP");
    const double a = parts[0], b = parts[1], step = parts[2];
    if (!(step > 0.0)) throw ConfigError("--sweep step must be > 0");
    if (!(a <= b)) throw ConfigError("--sweep start must not exceed end");
    if (a < 0.0 || b > 1.0) throw ConfigError("--sweep range must lie in [0, 1]");
    const auto count = static_cast<long long>(std::floor((b - a) / step + 1e-9)) + 1;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
        // Snap to 1e-12 so 0.1 * 3 prints as 0.3.
        const double v = std::round((a + static_cast<double>(i) * step) * 1e12) / 1e12;
        out.push_back(std::min(v, b));
    }
    return out;
}

std::filesystem::path resolve_config(const std::string& arg, const std::string& kind) {
    const std::filesystem::path direct(arg);
    if (std::filesystem::is_regular_file(direct)) return direct;
    const std::filesystem::path bundled = std::filesystem::path(DAK_CONFIG_DIR) / kind / (arg + ".json");
    if (std::filesystem::is_regular_file(bundled)) return bundled;
    throw ConfigError("no " + kind + " config '" + arg + "' (not a file, not a bundled name)");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"dak: direct-access offload planner and simulator"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto* plan = app.add_subcommand("plan", "compute a greedy offload plan");
    add_workload_options(plan, cfg);
    plan->add_option("--ratio", cfg.ratio, "global offload ratio (default: from capacity)");
    plan->add_flag("--emit-partitions", cfg.emit_partitions, "include tile partitions");

    auto* sim = app.add_subcommand("simulate", "plan, then simulate one decode step or prefill");
    add_workload_options(sim, cfg);
    add_format_option(sim, cfg);
    sim->add_option("--ratio", cfg.ratio, "global offload ratio (default: from capacity)");
    sim->add_option("--strategy", cfg.strategy, "direct or prefetch")
        ->check(CLI::IsMember({"direct", "prefetch"}))
        ->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "simulate across global ratios");
    add_workload_options(sweep, cfg);
    sweep->add_option("--sweep", cfg.sweep, "ratio range A:B:STEP")->required();
    sweep->add_option("--strategy", cfg.strategy, "direct or prefetch")
        ->check(CLI::IsMember({"direct", "prefetch"}))
        ->capture_default_str();
    sweep->add_option("--format", cfg.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sweep->preparse_callback([&cfg](std::size_t) { cfg.format = "csv"; });

    auto* show_hw = app.add_subcommand("show-hw", "print a hardware spec with derived quantities");
    show_hw->add_option("--hw", cfg.hw, "hardware spec: path or bundled name")->capture_default_str();
    show_hw->add_option("--out", cfg.out, "output file (default: stdout)");

    auto* show_model = app.add_subcommand("show-model", "print a model spec with derived quantities");
    show_model->add_option("--model", cfg.model, "model spec: path or bundled name")->capture_default_str();
    show_model->add_option("--out", cfg.out, "output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        std::string text;
        if (plan->parsed()) {
            text = cmd_plan(cfg);
        } else if (sim->parsed()) {
            text = cmd_simulate(cfg);
        } else if (sweep->parsed()) {
            text = cmd_sweep(cfg);
        } else if (show_hw->parsed()) {
            text = cmd_show_hw(cfg);
        } else {
            text = cmd_show_model(cfg);
        }
        emit(cfg, text, out);
        return 0;
    } catch (const CapacityError& e) {
        err << "capacity error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace dak
