#include "seqee/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "seqee/exit_policy.hpp"

namespace seqee {

using ad::Tape;
using ad::Var;
using nlohmann::json;

void TrainConfig::validate() const {
    if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (warmup_frac < 0 || warmup_frac >= 1) throw ConfigError("warmup_frac must be in [0, 1)");
    if (window_min < 0 || window_max < window_min) throw ConfigError("bad window range");
    if (delta_min < 0 || delta_max > 1 || delta_max < delta_min)
        throw ConfigError("delta range must satisfy 0 <= min <= max <= 1");
}

// --- losses ------------------------------------------------------------------

Real joint_loss(const EncoderTrace& trace, const std::vector<int>& gold, LossReduction reduction) {
    const Index n = trace.seq_len();
    const Index num_layers = trace.num_layers();
    if (static_cast<Index>(gold.size()) != n)
        throw InputError("joint_loss: " + std::to_string(gold.size()) + " labels for " +
                         std::to_string(n) + " tokens");
    Real weighted = 0, weight_sum = 0;
    for (Index l = 0; l < num_layers; ++l) {
        const Matrix& p = trace.ramp_probs[static_cast<std::size_t>(l)];
        Real ce = 0;
        for (Index i = 0; i < n; ++i) {
            const int y = gold[static_cast<std::size_t>(i)];
            if (y < 0 || y >= p.cols()) throw InputError("joint_loss: label out of range");
            ce -= std::log(std::max(p(i, y), Real(1e-300)));
        }
        if (reduction == LossReduction::mean) ce /= static_cast<Real>(n);
        const Real w = static_cast<Real>(l + 1);
        weighted += w * ce;
        weight_sum += w;
    }
    return weighted / weight_sum;
}

Real flooded_step_loss(Real raw, Real flooding_level) {
    if (flooding_level < 0) throw InputError("flooding level must be >= 0");
    return std::abs(raw - flooding_level) + flooding_level;
}

// --- tape model ----------------------------------------------------------------

TapeModel make_tape_model(Tape& tape, const EncoderWeights& w, const ModelConfig& cfg) {
    TapeModel m;
    m.cfg = &cfg;
    const auto tensors = named_tensors(w);
    m.params.reserve(tensors.size());
    for (const auto& t : tensors)
        m.params.push_back(tape.leaf(Eigen::Map<const Matrix>(t.data, t.rows, t.cols)));

    std::size_t at = 0;
    auto next = [&] { return m.params[at++]; };
    m.tok_emb = next();
    m.pos_emb = next();
    m.layers.resize(w.layers.size());
    for (auto& layer : m.layers) {
        layer.wq = next();
        layer.wk = next();
        layer.wv = next();
        layer.wo = next();
        layer.ffn_w1 = next();
        layer.ffn_b1 = next();
        layer.ffn_w2 = next();
        layer.ffn_b2 = next();
        layer.ln1_gain = next();
        layer.ln1_bias = next();
        layer.ln2_gain = next();
        layer.ln2_bias = next();
    }
    m.ramps.resize(w.ramps.size());
    for (auto& ramp : m.ramps) {
        ramp.w = next();
        ramp.b = next();
    }
    return m;
}

namespace {

Var tape_embed(Tape& t, const TapeModel& m, const std::vector<int>& ids) {
    const Index n = static_cast<Index>(ids.size());
    if (n == 0) throw InputError("empty token sequence");
    if (n > m.cfg->max_len) throw InputError("sequence exceeds max_len");
    std::vector<Index> tok_idx, pos_idx;
    for (Index i = 0; i < n; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= m.cfg->vocab_size) throw InputError("token id out of range");
        tok_idx.push_back(id);
        pos_idx.push_back(i);
    }
    return t.add(t.gather_rows(m.tok_emb, tok_idx), t.gather_rows(m.pos_emb, pos_idx));
}

// Differentiable twin of layer_forward_rows.
Var tape_layer_forward(Tape& t, const TapeModel& m, Var h_full,
                       const std::vector<Index>& active, const TapeModel::Layer& lw) {
    const Index hd = m.cfg->head_dim();
    Var ln1 = t.layer_norm(h_full, lw.ln1_gain, lw.ln1_bias, kLayerNormEps);
    Var x_act = t.gather_rows(h_full, active);
    Var ln1_act = t.gather_rows(ln1, active);
    Var q = t.matmul(ln1_act, lw.wq);
    Var k = t.matmul(ln1, lw.wk);
    Var v = t.matmul(ln1, lw.wv);
    const Real inv_sqrt_hd = Real(1) / std::sqrt(static_cast<Real>(hd));
    std::vector<Var> heads;
    for (Index h = 0; h < m.cfg->num_heads; ++h) {
        const Index off = h * hd;
        Var scores = t.scale(t.matmul_nt(t.slice_cols(q, off, hd), t.slice_cols(k, off, hd)),
                             inv_sqrt_hd);
        heads.push_back(t.matmul(t.softmax_rows(scores), t.slice_cols(v, off, hd)));
    }
    Var h1 = t.add(x_act, t.matmul(t.hstack(heads), lw.wo));
    Var ln2 = t.layer_norm(h1, lw.ln2_gain, lw.ln2_bias, kLayerNormEps);
    Var f = t.gelu(t.add_row(t.matmul(ln2, lw.ffn_w1), lw.ffn_b1));
    return t.add(h1, t.add_row(t.matmul(f, lw.ffn_w2), lw.ffn_b2));
}

std::vector<Index> all_indices(Index n) {
    std::vector<Index> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), Index(0));
    return v;
}

}  // namespace

std::vector<Var> tape_forward_ramp_logits(Tape& tape, const TapeModel& model,
                                          const std::vector<int>& token_ids) {
    const std::vector<Index> all = all_indices(static_cast<Index>(token_ids.size()));
    Var h = tape_embed(tape, model, token_ids);
    std::vector<Var> logits;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        h = tape_layer_forward(tape, model, h, all, model.layers[l]);
        logits.push_back(
            tape.add_row(tape.matmul(h, model.ramps[l].w), model.ramps[l].b));
    }
    return logits;
}

ad::Var tape_joint_loss(Tape& tape, const std::vector<Var>& ramp_logits,
                        const std::vector<int>& gold, LossReduction reduction) {
    if (ramp_logits.empty()) throw UsageError("joint loss over zero ramps");
    const auto red = reduction == LossReduction::mean ? ad::Reduction::mean : ad::Reduction::sum;
    Real weight_sum = 0;
    for (std::size_t l = 0; l < ramp_logits.size(); ++l) weight_sum += static_cast<Real>(l + 1);
    Var total;
    for (std::size_t l = 0; l < ramp_logits.size(); ++l) {
        Var ce = tape.cross_entropy_rows(ramp_logits[l], gold, red);
        Var term = tape.scale(ce, static_cast<Real>(l + 1) / weight_sum);
        total = l == 0 ? term : tape.add(total, term);
    }
    return total;
}

ad::Var tape_assigned_loss(Tape& tape, const TapeModel& model, const std::vector<int>& token_ids,
                           const std::vector<int>& gold, const ExitAssignment& assignment,
                           LossReduction reduction) {
    const Index n = static_cast<Index>(token_ids.size());
    const Index num_layers = static_cast<Index>(model.layers.size());
    if (static_cast<Index>(assignment.layer.size()) != n ||
        static_cast<Index>(gold.size()) != n)
        throw InputError("assignment/gold length mismatch");
    for (int l : assignment.layer)
        if (l < 1 || l > num_layers) throw InputError("assigned layer out of range");

    Var h = tape_embed(tape, model, token_ids);
    Var ce_sum;
    bool have_ce = false;
    for (Index l = 1; l <= num_layers; ++l) {
        std::vector<Index> active;
        std::vector<Index> exiting;
        std::vector<int> exiting_gold;
        for (Index i = 0; i < n; ++i) {
            const int a = assignment.layer[static_cast<std::size_t>(i)];
            if (a >= l) active.push_back(i);
            if (a == l) {
                exiting.push_back(i);
                exiting_gold.push_back(gold[static_cast<std::size_t>(i)]);
            }
        }
        if (active.empty()) break;  // everything below has already halted
        Var rows = tape_layer_forward(tape, model, h, active, model.layers[static_cast<std::size_t>(l - 1)]);
        h = tape.scatter_rows(h, rows, active);
        if (exiting.empty()) continue;
        Var exit_rows = tape.gather_rows(h, exiting);
        Var logits = tape.add_row(tape.matmul(exit_rows, model.ramps[static_cast<std::size_t>(l - 1)].w),
                                  model.ramps[static_cast<std::size_t>(l - 1)].b);
        Var ce = tape.cross_entropy_rows(logits, exiting_gold, ad::Reduction::sum);
        ce_sum = have_ce ? tape.add(ce_sum, ce) : ce;
        have_ce = true;
    }
    if (!have_ce) throw UsageError("no token reached its assigned ramp");
    const Real denom = reduction == LossReduction::mean ? static_cast<Real>(n) : Real(1);
    return tape.scale(ce_sum, Real(1) / denom);
}

ad::Var tape_sandwich_loss(Tape& tape, const TapeModel& model, const std::vector<int>& token_ids,
                           const std::vector<int>& gold, const ExitAssignment& sampled,
                           LossReduction reduction) {
    const Index num_layers = static_cast<Index>(model.layers.size());
    ExitAssignment tallest{std::vector<int>(token_ids.size(), static_cast<int>(num_layers))};
    ExitAssignment shortest{std::vector<int>(token_ids.size(), 1)};
    Var a = tape_assigned_loss(tape, model, token_ids, gold, sampled, reduction);
    Var b = tape_assigned_loss(tape, model, token_ids, gold, tallest, reduction);
    Var c = tape_assigned_loss(tape, model, token_ids, gold, shortest, reduction);
    return tape.add(tape.add(a, b), c);
}

// --- assignment sampling ----------------------------------------------------------

ExitAssignment sample_exit_assignment_self(const EncoderWeights& w, const ModelConfig& cfg,
                                           const std::vector<int>& token_ids,
                                           const TrainConfig& tc, std::mt19937_64& rng) {
    // Draw the window from {min..max} plus the unbounded slot, and the
    // threshold uniformly; then replay decisions on a frozen forward.
    const int slots = tc.window_max - tc.window_min + 1 + (tc.window_include_inf ? 1 : 0);
    const int pick = static_cast<int>(rng() % static_cast<std::uint64_t>(slots));
    const int window = pick == tc.window_max - tc.window_min + 1 ? ExitPolicy::kInfiniteWindow
                                                                 : tc.window_min + pick;
    std::uniform_real_distribution<Real> dd(tc.delta_min, tc.delta_max);
    const Real delta = dd(rng);
    const EncoderTrace trace = forward_full(w, cfg, token_ids);
    return ExitAssignment{
        simulate_exit_layers(trace.uncertainty, ExitPolicy::token(window, delta))};
}

ExitAssignment sample_exit_assignment_random(std::size_t num_tokens, Index num_layers,
                                             std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(1, static_cast<int>(num_layers));
    ExitAssignment a;
    a.layer.reserve(num_tokens);
    for (std::size_t i = 0; i < num_tokens; ++i) a.layer.push_back(pick(rng));
    return a;
}

// --- optimizer ----------------------------------------------------------------------

AdamW::AdamW(Real beta1, Real beta2, Real eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(std::vector<TensorRef>& params, const std::vector<Matrix>& grads, Real lr,
                 Real weight_decay) {
    if (params.size() != grads.size()) throw UsageError("param/grad count mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Index sz = params[i].rows * params[i].cols;
            m_[i] = Eigen::ArrayXd::Zero(sz);
            v_[i] = Eigen::ArrayXd::Zero(sz);
        }
    }
    ++t_;
    const Real bc1 = Real(1) - std::pow(beta1_, static_cast<Real>(t_));
    const Real bc2 = Real(1) - std::pow(beta2_, static_cast<Real>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Index sz = params[i].rows * params[i].cols;
        if (grads[i].size() != sz) throw ShapeError("gradient shape mismatch for " + params[i].name);
        Eigen::Map<Eigen::ArrayXd> theta(params[i].data, sz);
        Eigen::Map<const Eigen::ArrayXd> g(grads[i].data(), sz);
        m_[i] = beta1_ * m_[i] + (Real(1) - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (Real(1) - beta2_) * g.square();
        // Decoupled decay: applied directly to the weights, not to the moments.
        theta -= lr * weight_decay * theta;
        theta -= lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
    }
}

Real lr_at_step(Real peak, long step, long total_steps, Real warmup_frac) {
    if (total_steps <= 0) return peak;
    const long warmup = std::max<long>(1, static_cast<long>(warmup_frac * total_steps));
    if (step < warmup) return peak * static_cast<Real>(step + 1) / static_cast<Real>(warmup);
    const long rest = std::max<long>(1, total_steps - warmup);
    return peak * static_cast<Real>(total_steps - step) / static_cast<Real>(rest);
}

// --- pipeline --------------------------------------------------------------------------

Real dataset_joint_loss(const EncoderWeights& w, const ModelConfig& cfg,
                        const std::vector<LabeledSequence>& corpus, LossReduction reduction) {
    if (corpus.empty()) throw InputError("empty corpus");
    Real total = 0;
    for (const auto& seq : corpus)
        total += joint_loss(forward_full(w, cfg, seq.token_ids), seq.labels, reduction);
    return total / static_cast<Real>(corpus.size());
}

std::vector<Real> per_ramp_token_accuracy(const EncoderWeights& w, const ModelConfig& cfg,
                                          const std::vector<LabeledSequence>& corpus) {
    std::vector<std::uint64_t> hit(static_cast<std::size_t>(cfg.num_layers), 0);
    std::uint64_t total = 0;
    for (const auto& seq : corpus) {
        const EncoderTrace trace = forward_full(w, cfg, seq.token_ids);
        const Index n = trace.seq_len();
        total += static_cast<std::uint64_t>(n);
        for (Index l = 0; l < cfg.num_layers; ++l) {
            const Matrix& p = trace.ramp_probs[static_cast<std::size_t>(l)];
            for (Index i = 0; i < n; ++i)
                hit[static_cast<std::size_t>(l)] +=
                    argmax_row(p, i) == seq.labels[static_cast<std::size_t>(i)];
        }
    }
    std::vector<Real> acc;
    for (auto h : hit) acc.push_back(total ? static_cast<Real>(h) / static_cast<Real>(total) : 0);
    return acc;
}

namespace {

struct StepContext {
    std::vector<TensorRef> params;
    AdamW opt;
    long step = 0;
    long total_steps = 0;
};

// One optimizer step for a scalar tape loss already built on `tape`.
void apply_step(StepContext& ctx, Tape& tape, const TapeModel& model, Var loss,
                const TrainConfig& tc) {
    tape.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(model.params.size());
    for (Var p : model.params) grads.push_back(tape.grad(p));
    const Real lr = lr_at_step(tc.learning_rate, ctx.step, ctx.total_steps, tc.warmup_frac);
    ctx.opt.step(ctx.params, grads, lr, tc.weight_decay);
    ++ctx.step;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                   std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<long>(at),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

void emit(const MetricsSink& sink, const json& row) {
    if (sink) sink(row.dump());
}

}  // namespace

EncoderWeights train_stage1(const EncoderWeights& init, const ModelConfig& cfg,
                            const std::vector<LabeledSequence>& train,
                            const std::vector<LabeledSequence>& dev, const TrainConfig& tc,
                            const MetricsSink& sink) {
    tc.validate();
    if (train.empty()) throw InputError("empty training corpus");
    EncoderWeights w = init;
    std::mt19937_64 rng(tc.seed * 0x9e3779b97f4a7c15ull + 1);

    StepContext ctx{named_tensors(w), AdamW(), 0, 0};
    const long steps_per_epoch =
        static_cast<long>((train.size() + tc.batch_size - 1) / tc.batch_size);
    ctx.total_steps = steps_per_epoch * tc.stage1_epochs;

    for (int epoch = 0; epoch < tc.stage1_epochs; ++epoch) {
        Real epoch_loss = 0;
        long batches_seen = 0;
        for (const auto& batch : make_batches(train.size(), tc.batch_size, rng)) {
            Tape tape;
            const TapeModel model = make_tape_model(tape, w, cfg);
            Var batch_loss;
            for (std::size_t bi = 0; bi < batch.size(); ++bi) {
                const auto& seq = train[batch[bi]];
                Var loss = tape_joint_loss(
                    tape, tape_forward_ramp_logits(tape, model, seq.token_ids), seq.labels,
                    tc.reduction);
                batch_loss = bi == 0 ? loss : tape.add(batch_loss, loss);
            }
            batch_loss = tape.scale(batch_loss, Real(1) / static_cast<Real>(batch.size()));
            epoch_loss += tape.value(batch_loss)(0, 0);
            ++batches_seen;
            apply_step(ctx, tape, model, batch_loss, tc);
        }
        json row{{"stage", 1},
                 {"epoch", epoch + 1},
                 {"train_loss", epoch_loss / static_cast<Real>(batches_seen)}};
        if (!dev.empty()) row["dev_ramp_acc"] = per_ramp_token_accuracy(w, cfg, dev);
        emit(sink, row);
    }
    return w;
}

Stage2Result train_stage2(const EncoderWeights& stage1, const ModelConfig& cfg,
                          const std::vector<LabeledSequence>& train,
                          const std::vector<LabeledSequence>& dev, const TrainConfig& tc,
                          SamplingMode mode, const MetricsSink& sink) {
    tc.validate();
    if (train.empty()) throw InputError("empty training corpus");
    Stage2Result res;
    res.weights = stage1;
    EncoderWeights& w = res.weights;
    res.flooding_level = tc.flooding_level >= 0
                             ? tc.flooding_level
                             : dataset_joint_loss(stage1, cfg, train, tc.reduction);
    std::mt19937_64 rng(tc.seed * 0x9e3779b97f4a7c15ull + 2);

    StepContext ctx{named_tensors(w), AdamW(), 0, 0};
    const long steps_per_epoch =
        static_cast<long>((train.size() + tc.batch_size - 1) / tc.batch_size);
    ctx.total_steps = steps_per_epoch * tc.stage2_epochs;

    for (int epoch = 0; epoch < tc.stage2_epochs; ++epoch) {
        Real epoch_raw = 0;
        long batches_seen = 0;
        for (const auto& batch : make_batches(train.size(), tc.batch_size, rng)) {
            // Pass 1 (frozen): assignments from the current weights.
            std::vector<ExitAssignment> assignments;
            assignments.reserve(batch.size());
            for (std::size_t idx : batch) {
                const auto& seq = train[idx];
                assignments.push_back(
                    mode == SamplingMode::self_sampling
                        ? sample_exit_assignment_self(w, cfg, seq.token_ids, tc, rng)
                        : sample_exit_assignment_random(seq.token_ids.size(), cfg.num_layers,
                                                        rng));
            }
            // Pass 2 (differentiable): re-forward with forced halt-and-copy.
            Tape tape;
            const TapeModel model = make_tape_model(tape, w, cfg);
            Var combined;
            Var sampled_total;
            for (std::size_t bi = 0; bi < batch.size(); ++bi) {
                const auto& seq = train[batch[bi]];
                Var sampled = tape_assigned_loss(tape, model, seq.token_ids, seq.labels,
                                                 assignments[bi], tc.reduction);
                ExitAssignment tallest{
                    std::vector<int>(seq.token_ids.size(), static_cast<int>(cfg.num_layers))};
                ExitAssignment shortest{std::vector<int>(seq.token_ids.size(), 1)};
                Var tall = tape_assigned_loss(tape, model, seq.token_ids, seq.labels, tallest,
                                              tc.reduction);
                Var shallow = tape_assigned_loss(tape, model, seq.token_ids, seq.labels,
                                                 shortest, tc.reduction);
                Var sandwich = tape.add(tape.add(sampled, tall), shallow);
                combined = bi == 0 ? sandwich : tape.add(combined, sandwich);
                sampled_total = bi == 0 ? sampled : tape.add(sampled_total, sampled);
            }
            const Real inv_b = Real(1) / static_cast<Real>(batch.size());
            combined = tape.scale(combined, inv_b);
            sampled_total = tape.scale(sampled_total, inv_b);
            epoch_raw += tape.value(combined)(0, 0);
            ++batches_seen;

            Var loss = tc.flood_combined
                           ? tape.flood(combined, res.flooding_level)
                           : tape.add(tape.flood(sampled_total, res.flooding_level),
                                      tape.sub(combined, sampled_total));
            apply_step(ctx, tape, model, loss, tc);
        }
        json row{{"stage", 2},
                 {"mode", mode == SamplingMode::self_sampling ? "self" : "random"},
                 {"epoch", epoch + 1},
                 {"train_combined_loss", epoch_raw / static_cast<Real>(batches_seen)},
                 {"flooding_level", res.flooding_level}};
        if (!dev.empty()) row["dev_ramp_acc"] = per_ramp_token_accuracy(w, cfg, dev);
        emit(sink, row);
    }
    return res;
}

}  // namespace seqee
