#pragma once

#include <functional>
#include <random>
#include <vector>

#include "seqee/autodiff.hpp"
#include "seqee/data_io.hpp"
#include "seqee/encoder.hpp"

namespace seqee {

enum class LossReduction { mean, sum };

struct TrainConfig {
    int stage1_epochs = 10;
    int stage2_epochs = 6;
    int batch_size = 8;
    Real learning_rate = 1e-3;
    Real weight_decay = 0.01;
    Real warmup_frac = 0.05;
    Real flooding_level = -1;  // < 0: measured as the final stage-1 training loss
    bool flood_combined = true;  // flood the whole sandwich loss vs only the sampled term
    int window_min = 0;
    int window_max = 4;
    bool window_include_inf = true;
    Real delta_min = 0.05;
    Real delta_max = 0.9;
    LossReduction reduction = LossReduction::mean;
    std::uint64_t seed = 1;

    void validate() const;
};

// Forced halting layer per token (1..L) for one training sequence.
struct ExitAssignment {
    std::vector<int> layer;
};

// --- losses ------------------------------------------------------------------

// Weighted off-ramp loss on a recorded trace: sum_l w_l CE_l / sum_l w_l with
// w_l = l; CE_l reduces over tokens per `reduction`.
Real joint_loss(const EncoderTrace& trace, const std::vector<int>& gold, LossReduction reduction);

// |raw - level| + level.
Real flooded_step_loss(Real raw, Real flooding_level);

// --- tape model ---------------------------------------------------------------

// Leaf handles for every weight tensor, in named_tensors() order.
struct TapeModel {
    const ModelConfig* cfg = nullptr;
    std::vector<ad::Var> params;  // aligned with named_tensors()
    ad::Var tok_emb, pos_emb;
    struct Layer {
        ad::Var wq, wk, wv, wo, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        ad::Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    };
    std::vector<Layer> layers;
    struct Ramp {
        ad::Var w, b;
    };
    std::vector<Ramp> ramps;
};

TapeModel make_tape_model(ad::Tape& tape, const EncoderWeights& w, const ModelConfig& cfg);

// Per-layer off-ramp logits of a full-depth differentiable forward.
std::vector<ad::Var> tape_forward_ramp_logits(ad::Tape& tape, const TapeModel& model,
                                              const std::vector<int>& token_ids);

ad::Var tape_joint_loss(ad::Tape& tape, const std::vector<ad::Var>& ramp_logits,
                        const std::vector<int>& gold, LossReduction reduction);

// Halt-and-copy forward with exits forced by `assignment`: each token's loss
// is taken at its assigned ramp; copied rows pass gradients through unchanged.
ad::Var tape_assigned_loss(ad::Tape& tape, const TapeModel& model,
                           const std::vector<int>& token_ids, const std::vector<int>& gold,
                           const ExitAssignment& assignment, LossReduction reduction);

// Sandwich rule: sampled path + full-depth path + exit-at-1 path, summed.
ad::Var tape_sandwich_loss(ad::Tape& tape, const TapeModel& model,
                           const std::vector<int>& token_ids, const std::vector<int>& gold,
                           const ExitAssignment& sampled, LossReduction reduction);

// --- assignment sampling -------------------------------------------------------

// TOKEE decisions replayed on a frozen full forward (no copying) under a
// (window, threshold) pair drawn uniformly from the configured ranges.
ExitAssignment sample_exit_assignment_self(const EncoderWeights& w, const ModelConfig& cfg,
                                           const std::vector<int>& token_ids,
                                           const TrainConfig& tc, std::mt19937_64& rng);

// I.i.d. uniform halting layers.
ExitAssignment sample_exit_assignment_random(std::size_t num_tokens, Index num_layers,
                                             std::mt19937_64& rng);

// --- optimizer ------------------------------------------------------------------

// Adam with decoupled weight decay. Moments are keyed by parameter index in
// named_tensors() order.
class AdamW {
public:
    AdamW(Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);
    void step(std::vector<TensorRef>& params, const std::vector<Matrix>& grads, Real lr,
              Real weight_decay);

private:
    Real beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Eigen::ArrayXd> m_, v_;
};

// Linear warmup to peak learning rate, then linear decay to zero.
Real lr_at_step(Real peak, long step, long total_steps, Real warmup_frac);

// --- pipeline --------------------------------------------------------------------

using MetricsSink = std::function<void(const std::string& json_line)>;

// Mean joint loss over a corpus under frozen weights (used for reporting and
// for measuring the flooding level).
Real dataset_joint_loss(const EncoderWeights& w, const ModelConfig& cfg,
                        const std::vector<LabeledSequence>& corpus, LossReduction reduction);

// Token accuracy of each off-ramp's argmax over a corpus.
std::vector<Real> per_ramp_token_accuracy(const EncoderWeights& w, const ModelConfig& cfg,
                                          const std::vector<LabeledSequence>& corpus);

// Stage 1: joint fine-tuning of all off-ramps.
EncoderWeights train_stage1(const EncoderWeights& init, const ModelConfig& cfg,
                            const std::vector<LabeledSequence>& train,
                            const std::vector<LabeledSequence>& dev, const TrainConfig& tc,
                            const MetricsSink& sink = nullptr);

enum class SamplingMode { self_sampling, random_sampling };

struct Stage2Result {
    EncoderWeights weights;
    Real flooding_level = 0;
};

// Stage 2: sandwich training with forced halt-and-copy assignments and
// flooding. Assignments always come from a frozen forward of the current
// weights, never from the mid-update graph.
Stage2Result train_stage2(const EncoderWeights& stage1, const ModelConfig& cfg,
                          const std::vector<LabeledSequence>& train,
                          const std::vector<LabeledSequence>& dev, const TrainConfig& tc,
                          SamplingMode mode, const MetricsSink& sink = nullptr);

}  // namespace seqee
