// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dak/hw_model.hpp"

namespace dak {

enum class Phase { prefill, decode };
enum class OpKind { linear, attention };
enum class BoundClass { memory_bound, compute_bound };

std::string to_string(Phase p);
std::string to_string(OpKind k);
std::string to_string(BoundClass b);
Phase phase_from_string(const std::string& s);

struct ModelSpec {
    std::string name;
    int n_layers = 0;
    int hidden_dim = 0;
    int n_heads = 0;
    int n_kv_heads = 0;
    int head_dim = 0;  // 0 means hidden_dim / n_heads
    int ffn_dim = 0;
    int vocab_size = 0;
    int dtype_bytes = 2;
    std::optional<std::int64_t> weight_bytes_override;

    [[nodiscard]] int effective_head_dim() const { return head_dim > 0 ? head_dim : hidden_dim / n_heads; }

    bool operator==(const ModelSpec&) const = default;
};

struct WorkloadSpec {
    std::int64_t batch_size = 1;
    std::int64_t prompt_len = 1;
    std::int64_t decode_len = 0;
    Phase phase = Phase::decode;

    bool operator==(const WorkloadSpec&) const = default;
};

// GEMM view of an operation, C = A x B with A (M x K) the offloadable
// matrix. Attention ops use M = batch size, one request per row.
struct GemmShape {
    std::int64_t m = 0;
    std::int64_t k = 0;
    std::int64_t n = 0;

    bool operator==(const GemmShape&) const = default;
};

struct OperationProfile {
    std::string id;
    OpKind kind = OpKind::linear;
    int layer_index = 0;
    std::int64_t offloadable_bytes = 0;  // C
    double flops = 0.0;
    double compute_time_s = 0.0;  // T_comp
    double arithmetic_intensity = 0.0;
    double demand_bandwidth_gbps = 0.0;  // B_i = C / T_comp, +inf when T_comp == 0
    BoundClass bound_class = BoundClass::memory_bound;
    GemmShape shape;
    int dtype_bytes = 2;

    bool operator==(const OperationProfile&) const = default;
};

// Modeled MFU per op kind, applied to peak compute for T_comp.
struct PipelineOptions {
    double linear_efficiency = 0.6;
    double attention_efficiency = 0.4;
};

void validate(const ModelSpec& model);
void validate(const WorkloadSpec& workload);

std::int64_t weight_bytes(const ModelSpec& model);
std::int64_t kv_cache_bytes(const ModelSpec& model, const WorkloadSpec& workload);
std::int64_t footprint_bytes(const ModelSpec& model, const WorkloadSpec& workload);

// Fraction of the footprint that must live in host memory. Throws
// CapacityError when even host memory cannot hold the overflow.
double global_offload_ratio(const ModelSpec& model, const WorkloadSpec& workload, const HardwareSpec& hw);

std::vector<OperationProfile> build_pipeline(const ModelSpec& model, const WorkloadSpec& workload,
                                             const HardwareSpec& hw, const PipelineOptions& options = {});

// Builds a profile from raw counts; T_comp = flops / (peak * efficiency).
OperationProfile make_operation(std::string id, OpKind kind, int layer_index, std::int64_t offloadable_bytes,
                                double flops, GemmShape shape, int dtype_bytes, const HardwareSpec& hw,
                                double efficiency);

ModelSpec model_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ModelSpec& model);
ModelSpec load_model(const std::filesystem::path& path);

nlohmann::json to_json(const WorkloadSpec& workload);
nlohmann::json to_json(const OperationProfile& op);

}  // namespace dak
