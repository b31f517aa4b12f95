#include "seqee/autodiff.hpp"

#include <cmath>
#include <utility>

namespace seqee::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + " on " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&, const Matrix&)> backprop) {
    ensure_finite(value, "tape op");
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(backprop)});
    return Var{static_cast<Index>(nodes_.size()) - 1};
}

void Tape::accumulate(Index id, const Matrix& g) {
    Node& n = node(id);
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

Var Tape::leaf(Matrix value) { return push(std::move(value), nullptr); }

Matrix Tape::grad(Var v) const {
    const Node& n = node(v.id);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::matmul(Var a, Var b) {
    Matrix out = seqee::matmul(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g * t.value(b).transpose());
        t.accumulate(b.id, t.value(a).transpose() * g);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    Matrix out = seqee::matmul_nt(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g * t.value(b));
        t.accumulate(b.id, g.transpose() * t.value(a));
    });
}

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Matrix out = value(a) + value(b);
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Matrix out = value(a) - value(b);
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, -g);
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Matrix out = value(a).cwiseProduct(value(b));
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g.cwiseProduct(t.value(b)));
        t.accumulate(b.id, g.cwiseProduct(t.value(a)));
    });
}

Var Tape::add_row(Var a, Var row) {
    const Matrix& r = value(row);
    if (r.rows() != 1 || r.cols() != value(a).cols())
        throw ShapeError("add_row wants 1x" + std::to_string(value(a).cols()) + ", got " +
                         std::to_string(r.rows()) + "x" + std::to_string(r.cols()));
    Matrix out = value(a);
    out.rowwise() += r.row(0);
    return push(std::move(out), [a, row](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g);
        t.accumulate(row.id, g.colwise().sum());
    });
}

Var Tape::scale(Var a, Real s) {
    Matrix out = value(a) * s;
    return push(std::move(out), [a, s](Tape& t, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var Tape::sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), [a](Tape& t, const Matrix& g) {
        t.accumulate(a.id,
                     Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
    });
}

Var Tape::square(Var a) {
    Matrix out = value(a).cwiseProduct(value(a));
    return push(std::move(out), [a](Tape& t, const Matrix& g) {
        t.accumulate(a.id, Real(2) * g.cwiseProduct(t.value(a)));
    });
}

Var Tape::gelu(Var a) {
    Matrix out = seqee::gelu(value(a));
    return push(std::move(out), [a](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(a);
        Matrix dgelu = x.unaryExpr([](Real v) {
            const Real phi = Real(0.5) * (Real(1) + std::erf(v * Real(M_SQRT1_2)));
            const Real pdf = std::exp(Real(-0.5) * v * v) / std::sqrt(Real(2) * M_PI);
            return phi + v * pdf;
        });
        t.accumulate(a.id, g.cwiseProduct(dgelu));
    });
}

Var Tape::softmax_rows(Var a) {
    Matrix out = seqee::softmax_rows(value(a));
    Matrix y = out;  // captured for the backward rule
    return push(std::move(out), [a, y = std::move(y)](Tape& t, const Matrix& g) {
        Matrix dx(y.rows(), y.cols());
        for (Index r = 0; r < y.rows(); ++r) {
            const Real dot = g.row(r).dot(y.row(r));
            dx.row(r) = y.row(r).cwiseProduct(g.row(r) - RowVector::Constant(y.cols(), dot));
        }
        t.accumulate(a.id, dx);
    });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, Real eps) {
    const Matrix& x = value(a);
    const Matrix& gv = value(gain);
    const Matrix& bv = value(bias);
    if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != x.cols() || bv.cols() != x.cols())
        throw ShapeError("layer_norm gain/bias must be 1x" + std::to_string(x.cols()));
    const Real n = static_cast<Real>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Matrix inv_std(x.rows(), 1);
    for (Index r = 0; r < x.rows(); ++r) {
        const Real mean = x.row(r).mean();
        const Real var = (x.row(r).array() - mean).square().sum() / n;
        inv_std(r, 0) = Real(1) / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mean) * inv_std(r, 0);
    }
    Matrix out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r)
        out.row(r) = xhat.row(r).cwiseProduct(gv.row(0)) + bv.row(0);
    return push(std::move(out),
                [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 n](Tape& t, const Matrix& g) {
                    const Matrix& gv2 = t.value(gain);
                    Matrix dx(g.rows(), g.cols());
                    RowVector dgain = RowVector::Zero(g.cols());
                    RowVector dbias = RowVector::Zero(g.cols());
                    for (Index r = 0; r < g.rows(); ++r) {
                        dgain += g.row(r).cwiseProduct(xhat.row(r));
                        dbias += g.row(r);
                        RowVector gg = g.row(r).cwiseProduct(gv2.row(0));
                        const Real m1 = gg.mean();
                        const Real m2 = gg.cwiseProduct(xhat.row(r)).mean();
                        dx.row(r) = inv_std(r, 0) *
                                    (gg.array() - m1 - xhat.row(r).array() * m2).matrix();
                    }
                    t.accumulate(a.id, dx);
                    t.accumulate(gain.id, dgain);
                    t.accumulate(bias.id, dbias);
                });
}

Var Tape::gather_rows(Var a, std::vector<Index> idx) {
    const Matrix& x = value(a);
    Matrix out(static_cast<Index>(idx.size()), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= x.rows())
            throw InputError("gather_rows index " + std::to_string(idx[r]) + " out of range");
        out.row(static_cast<Index>(r)) = x.row(idx[r]);
    }
    return push(std::move(out), [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
        Matrix da = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
        for (std::size_t r = 0; r < idx.size(); ++r)
            da.row(idx[r]) += g.row(static_cast<Index>(r));
        t.accumulate(a.id, da);
    });
}

Var Tape::scatter_rows(Var base, Var rows, std::vector<Index> idx) {
    const Matrix& b = value(base);
    const Matrix& r = value(rows);
    if (r.rows() != static_cast<Index>(idx.size()) || r.cols() != b.cols())
        throw ShapeError("scatter_rows rows " + std::to_string(r.rows()) + "x" +
                         std::to_string(r.cols()) + " vs " + std::to_string(idx.size()) +
                         " indices");
    Matrix out = b;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= b.rows())
            throw InputError("scatter_rows index " + std::to_string(idx[k]) + " out of range");
        out.row(idx[k]) = r.row(static_cast<Index>(k));
    }
    return push(std::move(out), [base, rows, idx = std::move(idx)](Tape& t, const Matrix& g) {
        Matrix db = g;
        Matrix dr(static_cast<Index>(idx.size()), g.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            dr.row(static_cast<Index>(k)) = g.row(idx[k]);
            db.row(idx[k]).setZero();
        }
        t.accumulate(base.id, db);
        t.accumulate(rows.id, dr);
    });
}

Var Tape::slice_cols(Var a, Index start, Index n) {
    const Matrix& x = value(a);
    if (start < 0 || n < 0 || start + n > x.cols())
        throw ShapeError("slice_cols [" + std::to_string(start) + ", " +
                         std::to_string(start + n) + ") of " + std::to_string(x.cols()));
    Matrix out = x.middleCols(start, n);
    return push(std::move(out), [a, start, n](Tape& t, const Matrix& g) {
        Matrix da = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
        da.middleCols(start, n) = g;
        t.accumulate(a.id, da);
    });
}

Var Tape::hstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("hstack of nothing");
    Index rows = value(parts[0]).rows();
    Index cols = 0;
    for (Var p : parts) {
        if (value(p).rows() != rows) throw ShapeError("hstack row mismatch");
        cols += value(p).cols();
    }
    Matrix out(rows, cols);
    Index at = 0;
    for (Var p : parts) {
        out.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    return push(std::move(out), [parts](Tape& t, const Matrix& g) {
        Index at2 = 0;
        for (Var p : parts) {
            const Index w = t.value(p).cols();
            t.accumulate(p.id, g.middleCols(at2, w));
            at2 += w;
        }
    });
}

Var Tape::cross_entropy_rows(Var logits, std::vector<int> labels, Reduction red) {
    const Matrix& x = value(logits);
    if (static_cast<Index>(labels.size()) != x.rows())
        throw InputError("cross_entropy_rows: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(x.rows()) + " rows");
    for (int y : labels)
        if (y < 0 || y >= x.cols())
            throw InputError("cross_entropy_rows: label " + std::to_string(y) + " out of range");
    Matrix probs = seqee::softmax_rows(x);
    Real total = 0;
    for (Index r = 0; r < x.rows(); ++r) {
        const Real mx = x.row(r).maxCoeff();
        const Real lse = mx + std::log((x.row(r).array() - mx).exp().sum());
        total += lse - x(r, labels[static_cast<std::size_t>(r)]);
    }
    const Real denom = red == Reduction::mean ? static_cast<Real>(x.rows()) : Real(1);
    Matrix out(1, 1);
    out(0, 0) = total / denom;
    return push(std::move(out), [logits, labels = std::move(labels), probs = std::move(probs),
                                 denom](Tape& t, const Matrix& g) {
        Matrix dx = probs;
        for (Index r = 0; r < dx.rows(); ++r) dx(r, labels[static_cast<std::size_t>(r)]) -= 1;
        t.accumulate(logits.id, dx * (g(0, 0) / denom));
    });
}

Var Tape::flood(Var a, Real level) {
    if (level < 0) throw InputError("flood level must be >= 0");
    Matrix out = value(a).unaryExpr([level](Real x) { return std::abs(x - level) + level; });
    return push(std::move(out), [a, level](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(a);
        Matrix sign = x.unaryExpr([level](Real v) {
            if (v > level) return Real(1);
            if (v < level) return Real(-1);
            return Real(0);  // subgradient 0 at the kink
        });
        t.accumulate(a.id, g.cwiseProduct(sign));
    });
}

void Tape::backward(Var loss) {
    const Matrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
        throw UsageError("backward needs a scalar loss, got " + std::to_string(lv.rows()) + "x" +
                         std::to_string(lv.cols()));
    for (Node& n : nodes_) n.grad.resize(0, 0);
    Matrix seed(1, 1);
    seed(0, 0) = 1;
    accumulate(loss.id, seed);
    for (Index i = loss.id; i >= 0; --i) {
        Node& n = node(i);
        if (n.grad.size() == 0 || !n.backprop) continue;
        n.backprop(*this, n.grad);
    }
}

}  // namespace seqee::ad
