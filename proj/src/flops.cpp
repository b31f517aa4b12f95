#include "seqee/flops.hpp"

#include <nlohmann/json.hpp>

namespace seqee {

using nlohmann::json;

MacCounts layer_flops(Index n, Index m, const ModelConfig& cfg) {
    if (m > n || m < 0 || n < 0) throw UsageError("layer_flops needs 0 <= M <= N");
    const auto un = static_cast<std::uint64_t>(n);
    const auto um = static_cast<std::uint64_t>(m);
    const auto d = static_cast<std::uint64_t>(cfg.hidden_dim);
    const auto f = static_cast<std::uint64_t>(cfg.ffn_dim);
    MacCounts c;
    if (m == 0) return c;  // layer skipped entirely
    c.q_proj = um * d * d;
    c.kv_proj = 2 * un * d * d;
    c.o_proj = um * d * d;
    c.attn_scores = um * un * d;
    c.attn_apply = um * un * d;
    c.ffn = 2 * um * d * f;
    return c;
}

std::uint64_t off_ramp_flops(Index m, const ModelConfig& cfg) {
    return static_cast<std::uint64_t>(m) * cfg.hidden_dim * cfg.num_labels;
}

std::uint64_t uncertainty_flops(Index m, const ModelConfig& cfg) {
    return 2ull * static_cast<std::uint64_t>(m) * cfg.num_labels;
}

std::uint64_t full_forward_flops(Index n, const ModelConfig& cfg) {
    return static_cast<std::uint64_t>(cfg.num_layers) * layer_flops(n, n, cfg).backbone() +
           off_ramp_flops(n, cfg);
}

std::uint64_t FlopsLedger::total() const {
    std::uint64_t t = 0;
    for (const auto& l : per_layer) t += l.total();
    return t;
}

Real FlopsLedger::speedup() const {
    if (baseline_total == 0) throw UsageError("speedup needs baseline_total > 0");
    const std::uint64_t t = total();
    if (t == 0) throw UsageError("speedup of an empty ledger");
    return static_cast<Real>(baseline_total) / static_cast<Real>(t);
}

FlopsLedger FlopsLedger::full_forward(Index n, const ModelConfig& cfg) {
    FlopsLedger ledger;
    ledger.per_layer.assign(static_cast<std::size_t>(cfg.num_layers), MacCounts{});
    for (Index l = 0; l < cfg.num_layers; ++l)
        ledger.per_layer[static_cast<std::size_t>(l)] = layer_flops(n, n, cfg);
    ledger.per_layer.back().off_ramp = off_ramp_flops(n, cfg);
    ledger.baseline_total = full_forward_flops(n, cfg);
    return ledger;
}

std::string FlopsLedger::to_json_string() const {
    json layers = json::array();
    for (const auto& l : per_layer) {
        layers.push_back({{"q_proj", l.q_proj},
                          {"kv_proj", l.kv_proj},
                          {"o_proj", l.o_proj},
                          {"attn_scores", l.attn_scores},
                          {"attn_apply", l.attn_apply},
                          {"ffn", l.ffn},
                          {"off_ramp", l.off_ramp},
                          {"uncertainty", l.uncertainty},
                          {"total", l.total()}});
    }
    json j{{"schema_version", 1},
           {"per_layer", layers},
           {"total", total()},
           {"baseline_total", baseline_total},
           {"speedup", speedup()}};
    return j.dump(2);
}

Real average_speedup(const std::vector<FlopsLedger>& ledgers) {
    if (ledgers.empty()) throw InputError("average_speedup of empty set");
    std::uint64_t base = 0, tot = 0;
    for (const auto& l : ledgers) {
        base += l.baseline_total;
        tot += l.total();
    }
    return static_cast<Real>(base) / static_cast<Real>(tot);
}

}  // namespace seqee
