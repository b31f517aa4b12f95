#pragma once

#include <optional>
#include <vector>

#include "seqee/encoder.hpp"
#include "seqee/exit_policy.hpp"
#include "seqee/flops.hpp"

namespace seqee {

// Word -> wordpiece grouping for first-pooling: each range is a contiguous
// [begin, end) span of token positions; the first position represents the
// word. Ranges must partition the sequence in order.
struct WordGroups {
    std::vector<std::pair<Index, Index>> ranges;

    static WordGroups trivial(Index n);  // one group per token
    void validate(Index n) const;
};

struct EeResult {
    std::vector<int> labels;  // argmax at each token's exit-layer off-ramp
    EncoderTrace trace;
    FlopsLedger ledger;
};

// Tokens not yet exited, plus the frozen state of those that have. The
// engine owns one per sequence.
struct ActiveSet {
    std::vector<Index> active;       // ordered, strictly shrinking across layers
    std::vector<char> is_active;     // per token
    std::vector<Real> frozen_u;      // last computed uncertainty per token
    std::vector<int> exit_layer;     // 0 = still running
    std::vector<int> labels;         // -1 until exit

    explicit ActiveSet(Index n);
    Index count() const { return static_cast<Index>(active.size()); }
    void retire(Index token, int layer, int label);
};

// One layer evaluated only for the active queries; frozen rows of h_full are
// read as keys/values but never written. Same kernel as the full forward.
inline Matrix active_attention(const Matrix& h_full, const std::vector<Index>& active,
                               const LayerWeights& lw, const ModelConfig& cfg,
                               MacCounts* macs = nullptr) {
    return layer_forward_rows(h_full, active, lw, cfg, macs);
}

// TOKEE inference: per-token exits under a window-based threshold, exited
// hidden states copied upward verbatim. With groups, exit decisions are made
// per word on the first wordpiece and all pieces halt together.
EeResult forward_token_ee(const EncoderWeights& w, const ModelConfig& cfg,
                          const std::vector<int>& token_ids, const ExitPolicy& policy,
                          const WordGroups* groups = nullptr);

// SENTEE inference: the whole sequence exits at the first layer whose pooled
// uncertainty clears the threshold.
EeResult forward_sentence_ee(const EncoderWeights& w, const ModelConfig& cfg,
                             const std::vector<int>& token_ids, const ExitPolicy& policy);

// Deterministic synthetic wordpiece split: any token whose surface form is
// longer than `max_surface_len` becomes two pieces ("ab cd" -> "ab", "##cd").
// Returns piece surfaces plus the word grouping over pieces.
std::pair<std::vector<std::string>, WordGroups> synth_wordpieces(
    const std::vector<std::string>& tokens, std::size_t max_surface_len);

}  // namespace seqee
