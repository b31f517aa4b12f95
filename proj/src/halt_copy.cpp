#include "seqee/halt_copy.hpp"

#include <algorithm>

namespace seqee {

WordGroups WordGroups::trivial(Index n) {
    WordGroups g;
    g.ranges.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) g.ranges.emplace_back(i, i + 1);
    return g;
}

void WordGroups::validate(Index n) const {
    Index at = 0;
    for (const auto& [b, e] : ranges) {
        if (b != at || e <= b) throw InputError("word groups must partition the sequence");
        at = e;
    }
    if (at != n) throw InputError("word groups cover " + std::to_string(at) + " of " +
                                  std::to_string(n) + " tokens");
}

ActiveSet::ActiveSet(Index n)
    : is_active(static_cast<std::size_t>(n), 1),
      frozen_u(static_cast<std::size_t>(n), Real(1)),
      exit_layer(static_cast<std::size_t>(n), 0),
      labels(static_cast<std::size_t>(n), -1) {
    active.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = i;
}

void ActiveSet::retire(Index token, int layer, int label) {
    auto it = std::find(active.begin(), active.end(), token);
    if (it == active.end() || !is_active[static_cast<std::size_t>(token)])
        throw UsageError("token retired twice");
    active.erase(it);
    is_active[static_cast<std::size_t>(token)] = 0;
    exit_layer[static_cast<std::size_t>(token)] = layer;
    labels[static_cast<std::size_t>(token)] = label;
}

namespace {

// Copies the current frozen snapshot into the trace for one layer.
void push_trace_layer(EncoderTrace& trace, const Matrix& h, const Matrix& probs,
                      const std::vector<Real>& u, const std::vector<char>& entering_active) {
    trace.hidden.push_back(h);
    trace.ramp_probs.push_back(probs);
    trace.uncertainty.push_back(u);
    trace.active.push_back(entering_active);
}

}  // namespace

EeResult forward_token_ee(const EncoderWeights& w, const ModelConfig& cfg,
                          const std::vector<int>& token_ids, const ExitPolicy& policy,
                          const WordGroups* groups) {
    if (policy.kind != PolicyKind::token)
        throw UsageError("forward_token_ee needs a token-level policy (use forward_sentence_ee)");
    const Index n = static_cast<Index>(token_ids.size());
    WordGroups word_groups = groups ? *groups : WordGroups::trivial(n);
    word_groups.validate(n);
    const std::size_t num_words = word_groups.ranges.size();

    EeResult res;
    Matrix h = embed(w, cfg, token_ids);
    res.trace.hidden.push_back(h);
    res.ledger.per_layer.assign(static_cast<std::size_t>(cfg.num_layers), MacCounts{});
    res.ledger.baseline_total = full_forward_flops(n, cfg);

    ActiveSet state(n);
    Matrix frozen_probs = Matrix::Zero(n, cfg.num_labels);

    // Word-level view of the exit decision: uncertainty of a word is its
    // first wordpiece's, and all pieces leave together.
    std::vector<char> word_active(num_words, 1);
    std::vector<Real> word_u(num_words, Real(1));

    for (Index l = 1; l <= cfg.num_layers; ++l) {
        MacCounts& mc = res.ledger.per_layer[static_cast<std::size_t>(l - 1)];
        const std::vector<char> entering = state.is_active;
        if (state.count() == 0) {
            // Everyone exited: upper layers are pure copies and cost nothing.
            push_trace_layer(res.trace, h, frozen_probs, state.frozen_u, entering);
            continue;
        }
        Matrix rows = layer_forward_rows(h, state.active, w.layers[static_cast<std::size_t>(l - 1)],
                                         cfg, &mc);
        for (std::size_t r = 0; r < state.active.size(); ++r)
            h.row(state.active[r]) = rows.row(static_cast<Index>(r));

        Matrix probs =
            off_ramp_predict(rows, w.ramps[static_cast<std::size_t>(l - 1)], &mc.off_ramp);
        mc.uncertainty += uncertainty_flops(state.count(), cfg);
        for (std::size_t r = 0; r < state.active.size(); ++r) {
            const Index tok = state.active[r];
            frozen_probs.row(tok) = probs.row(static_cast<Index>(r));
            state.frozen_u[static_cast<std::size_t>(tok)] =
                token_uncertainty(probs.row(static_cast<Index>(r)), cfg.num_labels);
        }
        push_trace_layer(res.trace, h, frozen_probs, state.frozen_u, entering);

        // Exit decision at word granularity over first-piece uncertainties.
        for (std::size_t g = 0; g < num_words; ++g)
            if (word_active[g])
                word_u[g] = state.frozen_u[static_cast<std::size_t>(word_groups.ranges[g].first)];
        ExitDecision decision =
            decide_exits(word_u, policy, word_active, l == cfg.num_layers);
        for (std::size_t g = 0; g < num_words; ++g) {
            if (!decision.exit_now[g]) continue;
            word_active[g] = 0;
            const auto [begin, end] = word_groups.ranges[g];
            const int label = static_cast<int>(argmax_row(frozen_probs, begin));
            for (Index t = begin; t < end; ++t) state.retire(t, static_cast<int>(l), label);
        }
    }
    res.trace.exit_layer = state.exit_layer;
    res.labels = state.labels;
    return res;
}

EeResult forward_sentence_ee(const EncoderWeights& w, const ModelConfig& cfg,
                             const std::vector<int>& token_ids, const ExitPolicy& policy) {
    if (policy.kind != PolicyKind::sentence)
        throw UsageError("forward_sentence_ee needs a sentence-level policy (use forward_token_ee)");
    const Index n = static_cast<Index>(token_ids.size());
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;

    EeResult res;
    Matrix h = embed(w, cfg, token_ids);
    res.trace.hidden.push_back(h);
    res.ledger.per_layer.assign(static_cast<std::size_t>(cfg.num_layers), MacCounts{});
    res.ledger.baseline_total = full_forward_flops(n, cfg);

    Matrix frozen_probs = Matrix::Zero(n, cfg.num_labels);
    std::vector<Real> u(static_cast<std::size_t>(n), Real(1));
    int exit_at = 0;

    for (Index l = 1; l <= cfg.num_layers; ++l) {
        const bool running = exit_at == 0;
        std::vector<char> entering(static_cast<std::size_t>(n), running ? 1 : 0);
        if (!running) {
            push_trace_layer(res.trace, h, frozen_probs, u, entering);
            continue;
        }
        MacCounts& mc = res.ledger.per_layer[static_cast<std::size_t>(l - 1)];
        Matrix rows = layer_forward_rows(h, all, w.layers[static_cast<std::size_t>(l - 1)], cfg, &mc);
        h = rows;
        frozen_probs =
            off_ramp_predict(h, w.ramps[static_cast<std::size_t>(l - 1)], &mc.off_ramp);
        mc.uncertainty += uncertainty_flops(n, cfg);
        for (Index i = 0; i < n; ++i)
            u[static_cast<std::size_t>(i)] = token_uncertainty(frozen_probs.row(i), cfg.num_labels);
        push_trace_layer(res.trace, h, frozen_probs, u, entering);

        if (l == cfg.num_layers || sentence_uncertainty(u, policy.pool) < policy.threshold)
            exit_at = static_cast<int>(l);
    }
    res.trace.exit_layer.assign(static_cast<std::size_t>(n), exit_at);
    res.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        res.labels[static_cast<std::size_t>(i)] = static_cast<int>(argmax_row(frozen_probs, i));
    return res;
}

std::pair<std::vector<std::string>, WordGroups> synth_wordpieces(
    const std::vector<std::string>& tokens, std::size_t max_surface_len) {
    std::vector<std::string> pieces;
    WordGroups groups;
    Index at = 0;
    for (const std::string& t : tokens) {
        if (t.size() > max_surface_len) {
            const std::size_t half = t.size() / 2;
            pieces.push_back(t.substr(0, half));
            pieces.push_back("##" + t.substr(half));
            groups.ranges.emplace_back(at, at + 2);
            at += 2;
        } else {
            pieces.push_back(t);
            groups.ranges.emplace_back(at, at + 1);
            at += 1;
        }
    }
    return {std::move(pieces), std::move(groups)};
}

}  // namespace seqee
