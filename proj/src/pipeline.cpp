// SPDX-License-Identifier: Apache-2.0

#include "dak/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dak/errors.hpp"
#include "json_fields.hpp"

namespace dak {

namespace {

constexpr double kBytesPerGB = 1e9;

}  // namespace

std::string to_string(Phase p) { return p == Phase::prefill ? "prefill" : "decode"; }
std::string to_string(OpKind k) { return k == OpKind::linear ? "linear" : "attention"; }
std::string to_string(BoundClass b) { return b == BoundClass::memory_bound ? "memory_bound" : "compute_bound"; }

Phase phase_from_string(const std::string& s) {
    if (s == "prefill") return Phase::prefill;
    if (s == "decode") return Phase::decode;
    throw ConfigError("unknown phase '" + s + "' (expected prefill or decode)");
}

void validate(const ModelSpec& m) {
    auto fail = [&](const std::string& msg) { throw ConfigError("model '" + m.name + "': " + msg); };
    if (m.n_layers <= 0 || m.hidden_dim <= 0 || m.n_heads <= 0 || m.n_kv_heads <= 0 || m.ffn_dim <= 0 ||
        m.dtype_bytes <= 0) {
        fail("layer, dimension, head and dtype counts must be positive");
    }
    if (m.vocab_size < 0) fail("vocab_size must be >= 0");
    if (m.head_dim < 0) fail("head_dim must be >= 0");
    if (m.n_heads % m.n_kv_heads != 0) fail("n_kv_heads must divide n_heads");
    if (m.head_dim == 0 && m.hidden_dim % m.n_heads != 0) fail("hidden_dim must be divisible by n_heads");
    if (m.weight_bytes_override && *m.weight_bytes_override <= 0) fail("weight_bytes_override must be positive");
}

void validate(const WorkloadSpec& w) {
    if (w.batch_size < 1) throw ConfigError("workload: batch_size must be >= 1");
    if (w.prompt_len < 1) throw ConfigError("workload: prompt_len must be >= 1");
    if (w.decode_len < 0) throw ConfigError("workload: decode_len must be >= 0");
}

std::int64_t weight_bytes(const ModelSpec& m) {
    if (m.weight_bytes_override) {
        return *m.weight_bytes_override;
    }
    const std::int64_t h = m.hidden_dim;
    const std::int64_t per_layer = 4 * h * h + 2 * h * m.ffn_dim;
    const std::int64_t params = m.n_layers * per_layer + static_cast<std::int64_t>(m.vocab_size) * h;
    return params * m.dtype_bytes;
}

std::int64_t kv_cache_bytes(const ModelSpec& m, const WorkloadSpec& w) {
    const std::int64_t tokens = w.prompt_len + w.decode_len;
    return 2LL * m.n_layers * m.n_kv_heads * m.effective_head_dim() * w.batch_size * tokens * m.dtype_bytes;
}

std::int64_t footprint_bytes(const ModelSpec& m, const WorkloadSpec& w) {
    return weight_bytes(m) + kv_cache_bytes(m, w);
}

double global_offload_ratio(const ModelSpec& model, const WorkloadSpec& workload, const HardwareSpec& hw) {
    const double footprint = static_cast<double>(footprint_bytes(model, workload));
    const double overflow = footprint - hw.hbm_capacity_gb * kBytesPerGB;
    if (overflow > hw.host_capacity_gb * kBytesPerGB) {
        throw CapacityError("footprint of " + std::to_string(footprint / kBytesPerGB) + " GB exceeds HBM (" +
                            std::to_string(hw.hbm_capacity_gb) + " GB) plus host (" +
                            std::to_string(hw.host_capacity_gb) + " GB) capacity");
    }
    return std::clamp(overflow / footprint, 0.0, 1.0);
}

OperationProfile make_operation(std::string id, OpKind kind, int layer_index, std::int64_t offloadable_bytes,
                                double flops, GemmShape shape, int dtype_bytes, const HardwareSpec& hw,
                                double efficiency) {
    OperationProfile op;
    op.id = std::move(id);
    op.kind = kind;
    op.layer_index = layer_index;
    op.offloadable_bytes = offloadable_bytes;
    op.flops = flops;
    op.shape = shape;
    op.dtype_bytes = dtype_bytes;
    op.compute_time_s = flops / (hw.peak_compute_gflops * efficiency * 1e9);
    op.arithmetic_intensity = flops / static_cast<double>(offloadable_bytes);
    op.demand_bandwidth_gbps = op.compute_time_s > 0.0
                                   ? static_cast<double>(offloadable_bytes) / op.compute_time_s / kBytesPerGB
                                   : std::numeric_limits<double>::infinity();
    op.bound_class =
        op.arithmetic_intensity < machine_balance(hw) ? BoundClass::memory_bound : BoundClass::compute_bound;
    return op;
}

std::vector<OperationProfile> build_pipeline(const ModelSpec& model, const WorkloadSpec& w, const HardwareSpec& hw,
                                             const PipelineOptions& options) {
    validate(model);
    validate(w);

    const std::int64_t h = model.hidden_dim;
    const std::int64_t head_dim = model.effective_head_dim();
    const std::int64_t q_dim = model.n_heads * head_dim;
    const std::int64_t kv_dim = model.n_kv_heads * head_dim;
    const std::int64_t dt = model.dtype_bytes;
    const bool decode = w.phase == Phase::decode;
    const std::int64_t tokens = decode ? w.batch_size : w.batch_size * w.prompt_len;
    const std::int64_t q_len = decode ? 1 : w.prompt_len;
    const std::int64_t kv_len = decode ? w.prompt_len + w.decode_len : w.prompt_len;

    struct LinearDef {
        const char* name;
        std::int64_t in;
        std::int64_t out;
    };
    const LinearDef linears[] = {
        {"q_proj", h, q_dim},   {"k_proj", h, kv_dim},      {"v_proj", h, kv_dim},
        {"o_proj", q_dim, h},   {"mlp_up", h, model.ffn_dim}, {"mlp_down", model.ffn_dim, h},
    };

    std::vector<OperationProfile> ops;
    ops.reserve(static_cast<std::size_t>(model.n_layers) * 7);
    for (int layer = 0; layer < model.n_layers; ++layer) {
        const std::string prefix = "L" + std::to_string(layer) + ".";
        for (const auto& def : linears) {
            const double flops = 2.0 * static_cast<double>(tokens) * def.in * def.out;
            // Weight is out x in; tile rows run along the output dimension.
            ops.push_back(make_operation(prefix + def.name, OpKind::linear, layer, def.in * def.out * dt, flops,
                                         GemmShape{def.out, def.in, tokens}, model.dtype_bytes, hw,
                                         options.linear_efficiency));
        }
        const std::int64_t per_request = 2 * kv_len * kv_dim;  // K and V elements for one request
        const double attn_flops =
            4.0 * static_cast<double>(w.batch_size) * q_len * kv_len * model.n_heads * head_dim;
        const std::int64_t group = model.n_heads / model.n_kv_heads;
        ops.push_back(make_operation(prefix + "attn", OpKind::attention, layer, w.batch_size * per_request * dt,
                                     attn_flops, GemmShape{w.batch_size, per_request, q_len * group},
                                     model.dtype_bytes, hw, options.attention_efficiency));
    }
    return ops;
}

ModelSpec model_from_json(const nlohmann::json& doc) {
    detail::FieldReader r(doc, "model spec");
    ModelSpec m;
    m.name = r.required<std::string>("name");
    m.n_layers = r.required<int>("n_layers");
    m.hidden_dim = r.required<int>("hidden_dim");
    m.n_heads = r.required<int>("n_heads");
    m.n_kv_heads = r.optional<int>("n_kv_heads", m.n_heads);
    m.head_dim = r.optional<int>("head_dim", 0);
    m.ffn_dim = r.required<int>("ffn_dim");
    m.vocab_size = r.required<int>("vocab_size");
    m.dtype_bytes = r.required<int>("dtype_bytes");
    if (r.has("weight_bytes_override")) {
        m.weight_bytes_override = r.required<std::int64_t>("weight_bytes_override");
    } else {
        r.optional<std::int64_t>("weight_bytes_override", 0);
    }
    r.reject_unknown();
    validate(m);
    return m;
}

nlohmann::json to_json(const ModelSpec& m) {
    nlohmann::json doc = {
        {"name", m.name},         {"n_layers", m.n_layers},     {"hidden_dim", m.hidden_dim},
        {"n_heads", m.n_heads},   {"n_kv_heads", m.n_kv_heads}, {"head_dim", m.head_dim},
        {"ffn_dim", m.ffn_dim},   {"vocab_size", m.vocab_size}, {"dtype_bytes", m.dtype_bytes},
    };
    doc["weight_bytes_override"] = m.weight_bytes_override ? nlohmann::json(*m.weight_bytes_override) : nlohmann::json(nullptr);
    return doc;
}

ModelSpec load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open model spec '" + path.string() + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("model spec '" + path.string() + "': " + e.what());
    }
    return model_from_json(doc);
}

nlohmann::json to_json(const WorkloadSpec& w) {
    return {{"batch_size", w.batch_size},
            {"prompt_len", w.prompt_len},
            {"decode_len", w.decode_len},
            {"phase", to_string(w.phase)}};
}

nlohmann::json to_json(const OperationProfile& op) {
    return {
        {"id", op.id},
        {"kind", to_string(op.kind)},
        {"layer_index", op.layer_index},
        {"offloadable_bytes", op.offloadable_bytes},
        {"flops", op.flops},
        {"compute_time_s", op.compute_time_s},
        {"arithmetic_intensity", op.arithmetic_intensity},
        {"demand_bandwidth_gbps",
         std::isfinite(op.demand_bandwidth_gbps) ? nlohmann::json(op.demand_bandwidth_gbps) : nlohmann::json(nullptr)},
        {"bound_class", to_string(op.bound_class)},
        {"shape", {{"m", op.shape.m}, {"k", op.shape.k}, {"n", op.shape.n}}},
        {"dtype_bytes", op.dtype_bytes},
    };
}

}  // namespace dak
