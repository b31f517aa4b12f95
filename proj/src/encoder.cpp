#include "seqee/encoder.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

namespace seqee {

void ModelConfig::validate() const {
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (num_labels < 2) throw ConfigError("num_labels must be >= 2 (normalized entropy needs log C > 0)");
    if (hidden_dim < 1 || ffn_dim < 1 || vocab_size < 1 || max_len < 1 || num_heads < 1)
        throw ConfigError("all model dimensions must be positive");
    if (hidden_dim % num_heads != 0)
        throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by num_heads " + std::to_string(num_heads));
}

EncoderWeights EncoderWeights::random_init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> nd(0.0, 0.02);
    auto randm = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) m(i, j) = nd(rng);
        return m;
    };
    EncoderWeights w;
    w.tok_emb = randm(cfg.vocab_size, cfg.hidden_dim);
    w.pos_emb = randm(cfg.max_len, cfg.hidden_dim);
    w.layers.resize(static_cast<std::size_t>(cfg.num_layers));
    w.ramps.resize(static_cast<std::size_t>(cfg.num_layers));
    for (auto& lw : w.layers) {
        lw.wq = randm(cfg.hidden_dim, cfg.hidden_dim);
        lw.wk = randm(cfg.hidden_dim, cfg.hidden_dim);
        lw.wv = randm(cfg.hidden_dim, cfg.hidden_dim);
        lw.wo = randm(cfg.hidden_dim, cfg.hidden_dim);
        lw.ffn_w1 = randm(cfg.hidden_dim, cfg.ffn_dim);
        lw.ffn_w2 = randm(cfg.ffn_dim, cfg.hidden_dim);
        lw.ffn_b1 = RowVector::Zero(cfg.ffn_dim);
        lw.ffn_b2 = RowVector::Zero(cfg.hidden_dim);
        lw.ln1_gain = RowVector::Ones(cfg.hidden_dim);
        lw.ln1_bias = RowVector::Zero(cfg.hidden_dim);
        lw.ln2_gain = RowVector::Ones(cfg.hidden_dim);
        lw.ln2_bias = RowVector::Zero(cfg.hidden_dim);
    }
    for (auto& r : w.ramps) {
        r.w = randm(cfg.hidden_dim, cfg.num_labels);
        r.b = RowVector::Zero(cfg.num_labels);
    }
    return w;
}

namespace {

template <class W, class Ref>
std::vector<Ref> enumerate_tensors(W& w) {
    std::vector<Ref> out;
    auto mat = [&out](const std::string& name, auto& m) {
        out.push_back(Ref{name, m.data(), m.rows(), m.cols()});
    };
    mat("tok_emb", w.tok_emb);
    mat("pos_emb", w.pos_emb);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        auto& lw = w.layers[l];
        mat(p + "wq", lw.wq);
        mat(p + "wk", lw.wk);
        mat(p + "wv", lw.wv);
        mat(p + "wo", lw.wo);
        mat(p + "ffn_w1", lw.ffn_w1);
        mat(p + "ffn_b1", lw.ffn_b1);
        mat(p + "ffn_w2", lw.ffn_w2);
        mat(p + "ffn_b2", lw.ffn_b2);
        mat(p + "ln1_gain", lw.ln1_gain);
        mat(p + "ln1_bias", lw.ln1_bias);
        mat(p + "ln2_gain", lw.ln2_gain);
        mat(p + "ln2_bias", lw.ln2_bias);
    }
    for (std::size_t l = 0; l < w.ramps.size(); ++l) {
        const std::string p = "ramp" + std::to_string(l) + ".";
        mat(p + "w", w.ramps[l].w);
        mat(p + "b", w.ramps[l].b);
    }
    return out;
}

}  // namespace

std::vector<TensorRef> named_tensors(EncoderWeights& w) {
    return enumerate_tensors<EncoderWeights, TensorRef>(w);
}

std::vector<ConstTensorRef> named_tensors(const EncoderWeights& w) {
    return enumerate_tensors<const EncoderWeights, ConstTensorRef>(w);
}

Real token_uncertainty(const RowVector& p, Index num_labels) {
    if (num_labels < 2) throw ConfigError("token_uncertainty needs C >= 2");
    Real h = 0;
    for (Index i = 0; i < p.size(); ++i)
        if (p(i) > 0) h -= p(i) * std::log(p(i));
    Real u = h / std::log(static_cast<Real>(num_labels));
    return std::min(Real(1), std::max(Real(0), u));
}

Matrix off_ramp_logits(const Matrix& h, const OffRamp& ramp, std::uint64_t* macs) {
    Matrix logits = matmul(h, ramp.w, macs);
    logits.rowwise() += ramp.b.row(0);
    return logits;
}

Matrix off_ramp_predict(const Matrix& h, const OffRamp& ramp, std::uint64_t* macs) {
    return softmax_rows(off_ramp_logits(h, ramp, macs));
}

Matrix embed(const EncoderWeights& w, const ModelConfig& cfg, const std::vector<int>& token_ids) {
    const Index n = static_cast<Index>(token_ids.size());
    if (n == 0) throw InputError("empty token sequence");
    if (n > cfg.max_len)
        throw InputError("sequence length " + std::to_string(n) + " exceeds max_len " +
                         std::to_string(cfg.max_len));
    Matrix h(n, cfg.hidden_dim);
    for (Index i = 0; i < n; ++i) {
        const int id = token_ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= cfg.vocab_size)
            throw InputError("token id " + std::to_string(id) + " outside vocab of " +
                             std::to_string(cfg.vocab_size));
        h.row(i) = w.tok_emb.row(id) + w.pos_emb.row(i);
    }
    return h;
}

Matrix layer_forward_rows(const Matrix& h_full, const std::vector<Index>& active,
                          const LayerWeights& lw, const ModelConfig& cfg, MacCounts* macs) {
    const Index m = static_cast<Index>(active.size());
    const Index d = cfg.hidden_dim;
    const Index hd = cfg.head_dim();
    if (h_full.cols() != d) throw ShapeError("layer input has wrong width");

    // Keys/values come from every row (exited tokens stay attendable);
    // queries only from the active rows.
    Matrix ln1 = layer_norm(h_full, lw.ln1_gain, lw.ln1_bias, kLayerNormEps);
    Matrix x_act(m, d), ln1_act(m, d);
    for (Index r = 0; r < m; ++r) {
        x_act.row(r) = h_full.row(active[static_cast<std::size_t>(r)]);
        ln1_act.row(r) = ln1.row(active[static_cast<std::size_t>(r)]);
    }

    Matrix q = matmul(ln1_act, lw.wq, macs ? &macs->q_proj : nullptr);
    Matrix k = matmul(ln1, lw.wk, macs ? &macs->kv_proj : nullptr);
    Matrix v = matmul(ln1, lw.wv, macs ? &macs->kv_proj : nullptr);

    const Real inv_sqrt_hd = Real(1) / std::sqrt(static_cast<Real>(hd));
    Matrix ctx(m, d);
    for (Index h = 0; h < cfg.num_heads; ++h) {
        const Index off = h * hd;
        Matrix scores = matmul_nt(Matrix(q.middleCols(off, hd)), Matrix(k.middleCols(off, hd)),
                                  macs ? &macs->attn_scores : nullptr);
        scores *= inv_sqrt_hd;
        Matrix attn = softmax_rows(scores);
        ctx.middleCols(off, hd) =
            matmul(attn, Matrix(v.middleCols(off, hd)), macs ? &macs->attn_apply : nullptr);
    }
    Matrix h1 = x_act + matmul(ctx, lw.wo, macs ? &macs->o_proj : nullptr);

    Matrix ln2 = layer_norm(h1, lw.ln2_gain, lw.ln2_bias, kLayerNormEps);
    Matrix f = matmul(ln2, lw.ffn_w1, macs ? &macs->ffn : nullptr);
    f.rowwise() += lw.ffn_b1.row(0);
    f = gelu(f);
    Matrix f2 = matmul(f, lw.ffn_w2, macs ? &macs->ffn : nullptr);
    f2.rowwise() += lw.ffn_b2.row(0);
    return h1 + f2;
}

std::string trace_to_json_string(const EncoderTrace& trace, bool include_hidden) {
    nlohmann::json j{{"schema_version", 1},
                     {"seq_len", trace.seq_len()},
                     {"num_layers", trace.num_layers()},
                     {"exit_layer", trace.exit_layer},
                     {"uncertainty", trace.uncertainty}};
    nlohmann::json active = nlohmann::json::array();
    for (const auto& layer : trace.active) {
        std::vector<bool> row(layer.begin(), layer.end());
        active.push_back(row);
    }
    j["active"] = std::move(active);
    nlohmann::json preds = nlohmann::json::array();
    for (const Matrix& p : trace.ramp_probs) {
        std::vector<int> row;
        for (Index r = 0; r < p.rows(); ++r) row.push_back(static_cast<int>(argmax_row(p, r)));
        preds.push_back(row);
    }
    j["ramp_argmax"] = std::move(preds);
    if (include_hidden) {
        nlohmann::json hidden = nlohmann::json::array();
        for (const Matrix& h : trace.hidden) {
            nlohmann::json rows = nlohmann::json::array();
            for (Index r = 0; r < h.rows(); ++r) {
                std::vector<Real> row(h.row(r).begin(), h.row(r).end());
                rows.push_back(row);
            }
            hidden.push_back(rows);
        }
        j["hidden"] = std::move(hidden);
    }
    return j.dump();
}

EncoderTrace forward_full(const EncoderWeights& w, const ModelConfig& cfg,
                          const std::vector<int>& token_ids, MacCounts* macs) {
    const Index n = static_cast<Index>(token_ids.size());
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;

    EncoderTrace trace;
    trace.hidden.push_back(embed(w, cfg, token_ids));
    trace.exit_layer.assign(static_cast<std::size_t>(n), static_cast<int>(cfg.num_layers));
    for (Index l = 0; l < cfg.num_layers; ++l) {
        const Matrix& prev = trace.hidden.back();
        trace.hidden.push_back(
            layer_forward_rows(prev, all, w.layers[static_cast<std::size_t>(l)], cfg, macs));
        Matrix probs = off_ramp_predict(trace.hidden.back(), w.ramps[static_cast<std::size_t>(l)],
                                        macs ? &macs->off_ramp : nullptr);
        std::vector<Real> u(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i)
            u[static_cast<std::size_t>(i)] = token_uncertainty(probs.row(i), cfg.num_labels);
        if (macs) macs->uncertainty += 2ull * static_cast<std::uint64_t>(n) * cfg.num_labels;
        trace.ramp_probs.push_back(std::move(probs));
        trace.uncertainty.push_back(std::move(u));
        trace.active.emplace_back(static_cast<std::size_t>(n), char(1));
    }
    return trace;
}

}  // namespace seqee
