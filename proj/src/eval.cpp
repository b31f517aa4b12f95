#include "seqee/eval.hpp"

#include <cstdlib>
#include <thread>

namespace seqee {

int default_workers() {
    if (const char* env = std::getenv("SEQEE_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

PolicyEval evaluate_policy(const EncoderWeights& w, const ModelConfig& cfg,
                           const std::vector<LabeledSequence>& corpus, const LabelVocab& labels,
                           const std::optional<ExitPolicy>& policy, int workers) {
    if (corpus.empty()) throw InputError("evaluate_policy on empty corpus");
    if (workers <= 0) workers = default_workers();
    workers = std::min<int>(workers, static_cast<int>(corpus.size()));

    struct PerSeq {
        std::vector<int> pred;
        std::vector<int> exits;
        std::uint64_t flops = 0;
        std::uint64_t baseline = 0;
    };
    std::vector<PerSeq> results(corpus.size());

    auto run_one = [&](std::size_t i) {
        const auto& seq = corpus[i];
        PerSeq out;
        if (!policy.has_value()) {
            const EncoderTrace trace = forward_full(w, cfg, seq.token_ids);
            const Matrix& p = trace.ramp_probs.back();
            for (Index r = 0; r < p.rows(); ++r)
                out.pred.push_back(static_cast<int>(argmax_row(p, r)));
            out.exits = trace.exit_layer;
            const FlopsLedger full =
                FlopsLedger::full_forward(static_cast<Index>(seq.token_ids.size()), cfg);
            out.flops = full.total();
            out.baseline = full.baseline_total;
        } else {
            const WordGroups groups{seq.groups};
            const bool grouped = !seq.groups.empty();
            EeResult r = policy->kind == PolicyKind::token
                             ? forward_token_ee(w, cfg, seq.token_ids, *policy,
                                                grouped ? &groups : nullptr)
                             : forward_sentence_ee(w, cfg, seq.token_ids, *policy);
            out.pred = std::move(r.labels);
            out.exits = std::move(r.trace.exit_layer);
            out.flops = r.ledger.total();
            out.baseline = r.ledger.baseline_total;
        }
        results[i] = std::move(out);
    };

    if (workers <= 1) {
        for (std::size_t i = 0; i < corpus.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = static_cast<std::size_t>(t); i < corpus.size();
                     i += static_cast<std::size_t>(workers))
                    run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    PolicyEval agg;
    agg.exit_histogram.assign(static_cast<std::size_t>(cfg.num_layers), 0);
    std::uint64_t flops = 0, baseline = 0, tokens = 0, exit_sum = 0;
    std::vector<std::vector<int>> preds, golds;
    preds.reserve(corpus.size());
    golds.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        flops += results[i].flops;
        baseline += results[i].baseline;
        for (int e : results[i].exits) {
            ++agg.exit_histogram[static_cast<std::size_t>(e - 1)];
            exit_sum += static_cast<std::uint64_t>(e);
            ++tokens;
        }
        preds.push_back(std::move(results[i].pred));
        golds.push_back(corpus[i].labels);
    }
    agg.avg_speedup = static_cast<Real>(baseline) / static_cast<Real>(flops);
    agg.mean_exit_layer = static_cast<Real>(exit_sum) / static_cast<Real>(tokens);
    agg.metric = labels.schema == LabelSchema::bio ? span_f1(preds, golds, labels).f1
                                                   : token_accuracy(preds, golds);
    return agg;
}

}  // namespace seqee
