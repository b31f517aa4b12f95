#pragma once

#include <cstdint>
#include <vector>

#include "seqee/linalg.hpp"

namespace seqee {

inline constexpr Real kLayerNormEps = 1e-12;

struct ModelConfig {
    Index num_layers = 6;
    Index hidden_dim = 64;
    Index num_heads = 4;
    Index ffn_dim = 256;
    Index num_labels = 6;
    Index vocab_size = 64;
    Index max_len = 128;

    Index head_dim() const { return hidden_dim / num_heads; }
    void validate() const;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;    // d x d, no projection biases
    Matrix ffn_w1, ffn_w2;    // d x ffn, ffn x d
    RowVector ffn_b1, ffn_b2;
    RowVector ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct OffRamp {
    Matrix w;     // d x C
    RowVector b;  // 1 x C
};

struct EncoderWeights {
    Matrix tok_emb;  // vocab x d
    Matrix pos_emb;  // max_len x d
    std::vector<LayerWeights> layers;
    std::vector<OffRamp> ramps;  // one per layer

    static EncoderWeights random_init(const ModelConfig& cfg, std::uint64_t seed);
};

// Per-layer record of a forward pass. hidden[0] is the embedding output;
// hidden[l] is H^(l). For tokens that exited at layer e, entries at layers
// > e carry their frozen values.
struct EncoderTrace {
    std::vector<Matrix> hidden;               // L + 1 entries, each N x d
    std::vector<Matrix> ramp_probs;           // L entries, each N x C
    std::vector<std::vector<Real>> uncertainty;  // L entries, each length N
    std::vector<std::vector<char>> active;    // L entries: token computed layer l
    std::vector<int> exit_layer;              // per token, 1..L

    Index seq_len() const { return hidden.empty() ? 0 : hidden[0].rows(); }
    Index num_layers() const { return static_cast<Index>(ramp_probs.size()); }
};

// Canonical enumeration of every weight tensor. Checkpointing, the
// optimizer's parameter registry, and the training tape all walk this list,
// so they agree on order and naming by construction.
struct TensorRef {
    std::string name;
    Real* data;
    Index rows, cols;
};
struct ConstTensorRef {
    std::string name;
    const Real* data;
    Index rows, cols;
};
std::vector<TensorRef> named_tensors(EncoderWeights& w);
std::vector<ConstTensorRef> named_tensors(const EncoderWeights& w);

// Normalized entropy -sum p ln p / ln C in [0, 1]; 0 ln 0 counts as 0.
Real token_uncertainty(const RowVector& p, Index num_labels);

Matrix off_ramp_logits(const Matrix& h, const OffRamp& ramp, std::uint64_t* macs = nullptr);
// softmax(h W + b); rows are probability distributions.
Matrix off_ramp_predict(const Matrix& h, const OffRamp& ramp, std::uint64_t* macs = nullptr);

// Token + position embeddings for a sequence of ids.
Matrix embed(const EncoderWeights& w, const ModelConfig& cfg, const std::vector<int>& token_ids);

// One pre-norm transformer layer evaluated for the rows listed in `active`,
// reading keys/values from every row of h_full (frozen rows included).
// Returns the M x d replacement rows, in `active` order. With all rows
// active this IS the full layer; early-exit engines and the full forward
// share this kernel so the two paths stay bit-identical.
Matrix layer_forward_rows(const Matrix& h_full, const std::vector<Index>& active,
                          const LayerWeights& lw, const ModelConfig& cfg,
                          MacCounts* macs = nullptr);

// Full-depth forward: every token active at every layer, exit_layer == L.
EncoderTrace forward_full(const EncoderWeights& w, const ModelConfig& cfg,
                          const std::vector<int>& token_ids, MacCounts* macs = nullptr);

// Structured JSON view of a trace (uncertainties, active masks, exit layers,
// ramp argmaxes); hidden states are included only on request since they
// dominate the payload.
std::string trace_to_json_string(const EncoderTrace& trace, bool include_hidden = false);

}  // namespace seqee
