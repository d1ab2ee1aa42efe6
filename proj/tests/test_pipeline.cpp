// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include "dak/errors.hpp"
#include "dak/pipeline.hpp"
#include "support.hpp"

using namespace dak;
using Catch::Approx;

namespace {

WorkloadSpec decode(std::int64_t b, std::int64_t prompt, std::int64_t gen) { return {b, prompt, gen, Phase::decode}; }

// Hand count of KV bytes: K and V, every layer, every head, every token.
double kv_oracle(const ModelSpec& m, std::int64_t b, std::int64_t tokens) {
    return 2.0 * m.n_layers * m.n_kv_heads * m.effective_head_dim() * static_cast<double>(b) *
           static_cast<double>(tokens) * m.dtype_bytes;
}

ModelSpec toy_model() {
    ModelSpec m;
    m.name = "toy";
    m.n_layers = 1;
    m.hidden_dim = 2;
    m.n_heads = 1;
    m.n_kv_heads = 1;
    m.ffn_dim = 4;
    m.vocab_size = 0;
    m.dtype_bytes = 2;
    return m;
}

}  // namespace

TEST_CASE("KV cache size", "[pipeline]") {
    const ModelSpec m = test::opt30b();
    CHECK(static_cast<double>(kv_cache_bytes(m, decode(128, 512, 32))) / 1e9 == Approx(95.83).epsilon(0.01));
    CHECK(static_cast<double>(kv_cache_bytes(m, decode(8, 32, 32))) / 1e9 == Approx(0.70).epsilon(0.01));
    CHECK(kv_cache_bytes(m, decode(1, 1, 0)) == 1'376'256);
    CHECK(static_cast<double>(kv_cache_bytes(m, decode(37, 300, 11))) == kv_oracle(m, 37, 311));
}

TEST_CASE("KV cache is linear in batch and sequence length", "[pipeline][property]") {
    const ModelSpec m = test::opt30b();
    const std::int64_t base = kv_cache_bytes(m, decode(1, 1, 0));
    for (std::int64_t b : {1, 3, 64, 512}) {
        for (std::int64_t p : {1, 17, 1024}) {
            for (std::int64_t g : {0, 5, 32}) {
                CHECK(kv_cache_bytes(m, decode(b, p, g)) == base * b * (p + g));
            }
        }
    }
}

TEST_CASE("global offload ratio", "[pipeline]") {
    const ModelSpec m = test::opt30b();
    const HardwareSpec hw = test::gh200();
    CHECK(global_offload_ratio(m, decode(128, 1024, 32), hw) == Approx(0.60).margin(0.01));
    CHECK(global_offload_ratio(m, decode(32, 1024, 32), hw) == Approx(0.06).margin(0.01));
    CHECK(global_offload_ratio(m, decode(8, 32, 32), hw) == 0.0);

    // Oracle: the clamp formula on the footprint.
    const WorkloadSpec w = decode(100, 700, 20);
    const double f = static_cast<double>(footprint_bytes(m, w));
    CHECK(global_offload_ratio(m, w, hw) == Approx((f - 96e9) / f).epsilon(1e-12));
}

TEST_CASE("global offload ratio is monotone and zero exactly when it fits", "[pipeline][property]") {
    const ModelSpec m = test::opt30b();
    const HardwareSpec hw = test::gh200();
    for (std::int64_t p : {32, 256, 1024}) {
        double prev = 0.0;
        for (std::int64_t b = 1; b <= 160; b += 7) {
            const WorkloadSpec w = decode(b, p, 32);
            const double r = global_offload_ratio(m, w, hw);
            CHECK(r >= prev);
            CHECK((r == 0.0) == (static_cast<double>(footprint_bytes(m, w)) <= hw.hbm_capacity_gb * 1e9));
            prev = r;
        }
    }
    for (std::int64_t b : {16, 128}) {
        double prev = 0.0;
        for (std::int64_t p = 1; p <= 1500; p += 97) {
            const double r = global_offload_ratio(m, decode(b, p, 32), hw);
            CHECK(r >= prev);
            prev = r;
        }
    }
}

TEST_CASE("footprint beyond HBM plus host is a capacity error", "[pipeline]") {
    const ModelSpec m = test::opt30b();
    const HardwareSpec hw = test::gh200();
    // Per-token KV is 1,376,256 bytes; 576 GB of capacity minus 55.6 GB of
    // weights leaves room for about 378k tokens.
    CHECK_NOTHROW(global_offload_ratio(m, decode(300, 1000, 0), hw));
    CHECK_THROWS_AS(global_offload_ratio(m, decode(400, 1000, 0), hw), CapacityError);
}

TEST_CASE("weight bytes", "[pipeline]") {
    CHECK(weight_bytes(test::opt30b()) == 55'600'000'000);
    CHECK(weight_bytes(toy_model()) == 64);

    ModelSpec arch = test::opt30b();
    arch.weight_bytes_override.reset();
    CHECK(static_cast<double>(weight_bytes(arch)) / 1e9 == Approx(59.9).margin(0.05));
}

TEST_CASE("pipeline emits six linears and one attention per layer", "[pipeline]") {
    const ModelSpec m = test::opt30b();
    const HardwareSpec hw = test::gh200();
    const auto ops = build_pipeline(m, decode(8, 128, 32), hw);
    REQUIRE(ops.size() == 48u * 7u);
    const char* names[] = {"q_proj", "k_proj", "v_proj", "o_proj", "mlp_up", "mlp_down", "attn"};
    for (int i = 0; i < 7; ++i) CHECK(ops[i].id == std::string("L0.") + names[i]);
    CHECK(ops.back().id == "L47.attn");

    std::int64_t linear = 0, attn = 0;
    for (const auto& op : ops) {
        CHECK(op.offloadable_bytes > 0);
        CHECK(op.compute_time_s >= 0.0);
        CHECK(op.shape.m * op.shape.k * op.dtype_bytes == op.offloadable_bytes);
        (op.kind == OpKind::linear ? linear : attn) += op.offloadable_bytes;
    }
    CHECK(attn == kv_cache_bytes(m, decode(8, 128, 32)));
    // Architecture-derived per-layer weights, without embeddings.
    CHECK(linear == 48LL * (4LL * 7168 * 7168 + 2LL * 7168 * 28672) * 2);
}

TEST_CASE("decode attention intensity is constant in batch and length", "[pipeline]") {
    const HardwareSpec hw = test::gh200();
    ModelSpec m = test::opt30b();
    m.n_layers = 1;
    for (std::int64_t b : {1, 8, 128}) {
        for (std::int64_t l : {16, 512, 4096}) {
            const auto ops = build_pipeline(m, decode(b, l, 0), hw);
            const auto& attn = ops.back();
            // 4 FLOP per (token, head, dim) against 2 elements of 2 bytes.
            const double oracle = 4.0 * b * l * 56 * 128 / (2.0 * b * l * 56 * 128 * 2);
            CHECK(attn.arithmetic_intensity == Approx(oracle).epsilon(1e-12));
            CHECK(attn.arithmetic_intensity == Approx(1.0).epsilon(1e-12));
            CHECK(attn.bound_class == BoundClass::memory_bound);
        }
    }

    // Grouped-query attention raises it by the group size.
    m.n_kv_heads = 8;
    CHECK(build_pipeline(m, decode(4, 64, 0), hw).back().arithmetic_intensity == Approx(7.0).epsilon(1e-12));
}

TEST_CASE("prefill attention intensity grows linearly in length", "[pipeline]") {
    const HardwareSpec hw = test::gh200();
    ModelSpec m = test::opt30b();
    m.n_layers = 1;
    auto ai = [&](std::int64_t l) { return build_pipeline(m, {4, l, 0, Phase::prefill}, hw).back().arithmetic_intensity; };
    for (std::int64_t l : {64, 512, 4096}) CHECK(ai(2 * l) / ai(l) == Approx(2.0).epsilon(1e-9));
    CHECK(build_pipeline(m, {4, 4096, 0, Phase::prefill}, hw).back().bound_class == BoundClass::compute_bound);
}

TEST_CASE("decode linear ops flip to compute bound as batch grows", "[pipeline][property]") {
    const HardwareSpec hw = test::gh200();
    ModelSpec m = test::opt30b();
    m.n_layers = 1;
    const auto at_one = build_pipeline(m, decode(1, 1, 0), hw);
    CHECK(at_one[0].arithmetic_intensity == Approx(1.0));
    CHECK(at_one[0].bound_class == BoundClass::memory_bound);

    // Linear AI is B FLOP per byte at 2-byte weights; threshold is the balance.
    const double balance = machine_balance(hw);
    for (std::int64_t b : {1, 16, 100, 148, 149, 200, 512}) {
        const auto op = build_pipeline(m, decode(b, 1, 0), hw)[0];
        CHECK(op.arithmetic_intensity == Approx(static_cast<double>(b)));
        CHECK((op.bound_class == BoundClass::compute_bound) == (static_cast<double>(b) >= balance));
        CHECK(op.demand_bandwidth_gbps == Approx(op.offloadable_bytes / op.compute_time_s / 1e9));
    }
}

TEST_CASE("decode attention is memory bound wherever balance exceeds 4", "[pipeline][property]") {
    ModelSpec m = test::opt30b();
    m.n_layers = 2;
    for (const HardwareSpec& hw : {test::gh200(), test::rtx6000()}) {
        REQUIRE(machine_balance(hw) > 4.0);
        for (std::int64_t b : {1, 64, 1024}) {
            for (const auto& op : build_pipeline(m, decode(b, 2048, 64), hw)) {
                if (op.kind == OpKind::attention) CHECK(op.bound_class == BoundClass::memory_bound);
            }
        }
    }
}

TEST_CASE("prefill pipeline covers prompt tokens only", "[pipeline]") {
    const HardwareSpec hw = test::gh200();
    ModelSpec m = test::opt30b();
    m.n_layers = 1;
    const auto ops = build_pipeline(m, {2, 100, 0, Phase::prefill}, hw);
    // 2 prompts × 100 tokens against a 7168 × 7168 weight.
    CHECK(ops[0].flops == Approx(2.0 * 200 * 7168 * 7168));
    CHECK(ops.back().offloadable_bytes == 2LL * 2 * 100 * 7168 * 2);
}

TEST_CASE("model and workload validation", "[pipeline]") {
    const HardwareSpec hw = test::gh200();
    ModelSpec m = test::opt30b();
    m.n_kv_heads = 5;
    CHECK_THROWS_AS(validate(m), ConfigError);
    m = test::opt30b();
    m.n_layers = 0;
    CHECK_THROWS_AS(validate(m), ConfigError);

    CHECK_THROWS_AS(validate(WorkloadSpec{0, 1, 0, Phase::decode}), ConfigError);
    CHECK_THROWS_AS(validate(WorkloadSpec{1, 0, 0, Phase::decode}), ConfigError);
    CHECK_THROWS_AS(validate(WorkloadSpec{1, 1, -1, Phase::decode}), ConfigError);
    CHECK_THROWS_AS(phase_from_string("train"), ConfigError);
    CHECK(phase_from_string("prefill") == Phase::prefill);
}

TEST_CASE("model JSON round-trips", "[pipeline]") {
    for (const char* name : {"opt-30b", "opt-6.7b", "llama-2-7b"}) {
        const ModelSpec m = load_model(std::string(DAK_CONFIG_DIR "/models/") + name + ".json");
        CHECK(m.name == name);
        CHECK(model_from_json(nlohmann::json::parse(to_json(m).dump())) == m);
    }
    nlohmann::json doc = to_json(test::opt30b());
    doc["rope_theta"] = 10000;
    CHECK_THROWS_AS(model_from_json(doc), ConfigError);
}
