#pragma once

#include <functional>
#include <vector>

#include "seqee/linalg.hpp"

namespace seqee::ad {

// Handle into a Tape. Only valid for the tape that created it.
struct Var {
    Index id = -1;
    bool valid() const { return id >= 0; }
};

enum class Reduction { mean, sum };

// Define-by-run reverse-mode tape over dense matrices. One tape per forward
// pass; backward() replays recorded ops in reverse creation order, which is a
// reverse topological order, so a node's gradient is complete before its own
// rule runs. Tapes are single-threaded and discarded after use.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value);

    const Matrix& value(Var v) const { return node(v.id).value; }
    // Gradient of the last backward() w.r.t. v; zeros if v is off the loss path.
    Matrix grad(Var v) const;
    bool has_grad(Var v) const { return node(v.id).grad.size() > 0; }

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var add_row(Var a, Var row);  // broadcast a 1 x C row across all rows of a
    Var scale(Var a, Real s);
    Var sum(Var a);     // 1x1
    Var square(Var a);  // elementwise
    Var gelu(Var a);
    Var softmax_rows(Var a);
    Var layer_norm(Var a, Var gain, Var bias, Real eps);
    Var gather_rows(Var a, std::vector<Index> idx);
    // base with rows[r] written at idx[r]; gradient passes through untouched
    // rows of base unchanged (the halt-and-copy identity).
    Var scatter_rows(Var base, Var rows, std::vector<Index> idx);
    Var slice_cols(Var a, Index start, Index n);
    Var hstack(const std::vector<Var>& parts);
    // Per-row softmax cross-entropy against integer labels, reduced to 1x1.
    Var cross_entropy_rows(Var logits, std::vector<int> labels, Reduction red);
    // |x - level| + level, elementwise; subgradient 0 at the kink.
    Var flood(Var a, Real level);

    // loss must be 1x1. Accumulates gradients for every node on its path.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until first accumulation
        std::function<void(Tape&, const Matrix&)> backprop;  // gets this node's grad
    };

    Node& node(Index id) { return nodes_.at(static_cast<std::size_t>(id)); }
    const Node& node(Index id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    Var push(Matrix value, std::function<void(Tape&, const Matrix&)> backprop);
    void accumulate(Index id, const Matrix& g);

    std::vector<Node> nodes_;
};

}  // namespace seqee::ad
