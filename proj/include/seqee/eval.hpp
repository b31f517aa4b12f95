#pragma once

#include <optional>

#include "seqee/data_io.hpp"
#include "seqee/halt_copy.hpp"

namespace seqee {

struct PolicyEval {
    Real metric = 0;       // span F1 for BIO vocabularies, token accuracy otherwise
    Real avg_speedup = 1;  // ratio of summed FLOPs over the corpus
    std::vector<std::uint64_t> exit_histogram;  // token counts per layer 1..L
    Real mean_exit_layer = 0;
};

// Evaluate an exit policy over a corpus; std::nullopt runs the plain full
// forward (the 1.0x baseline). Sentences are scored in parallel workers and
// aggregated by input order, so results do not depend on thread timing.
PolicyEval evaluate_policy(const EncoderWeights& w, const ModelConfig& cfg,
                           const std::vector<LabeledSequence>& corpus, const LabelVocab& labels,
                           const std::optional<ExitPolicy>& policy, int workers = 0);

// SEQEE_WORKERS env var, else hardware concurrency.
int default_workers();

}  // namespace seqee
