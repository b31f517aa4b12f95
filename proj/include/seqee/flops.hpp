#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqee/encoder.hpp"
#include "seqee/linalg.hpp"

namespace seqee {

// Analytic per-layer MAC counts for a layer with M active queries out of N
// positions. Counting convention: one multiply-add pair = 1 unit (this is
// what reproduces the published BERT-base table). Embedding lookups and
// layer norms are excluded on both sides of every ratio.
//
//   q_proj      M d^2          kv_proj     2 N d^2
//   o_proj      M d^2          attn_scores M N d
//   attn_apply  M N d          ffn         2 M d ffn_dim
MacCounts layer_flops(Index n, Index m, const ModelConfig& cfg);

// Linear classifier on M rows: M d C.
std::uint64_t off_ramp_flops(Index m, const ModelConfig& cfg);

// Normalized-entropy evaluation for M rows, modeled as 2 M C.
std::uint64_t uncertainty_flops(Index m, const ModelConfig& cfg);

// Cost of a plain full-depth forward: L full layers plus the final
// classifier. This is the baseline every speedup is measured against.
std::uint64_t full_forward_flops(Index n, const ModelConfig& cfg);

struct FlopsLedger {
    std::vector<MacCounts> per_layer;  // one entry per encoder layer
    std::uint64_t baseline_total = 0;

    std::uint64_t total() const;
    Real speedup() const;  // baseline_total / total

    // Ledger for the baseline itself (total == baseline_total, speedup 1).
    static FlopsLedger full_forward(Index n, const ModelConfig& cfg);

    std::string to_json_string() const;
};

// Dataset-level speedup: ratio of summed baselines to summed totals, not the
// mean of per-sentence ratios.
Real average_speedup(const std::vector<FlopsLedger>& ledgers);

}  // namespace seqee
