#pragma once

#include <functional>
#include <random>
#include <vector>

#include "seqee/autodiff.hpp"

namespace seqee::test {

using BuildLoss = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Max over all parameter entries of |g_analytic - g_fd| / max(1, |g_fd|),
// with g_fd from central differences. The builder must construct the same
// scalar loss from fresh leaves on any tape it is given.
inline Real gradcheck_max_rel_err(const std::vector<Matrix>& params, const BuildLoss& build,
                                  Real h = 1e-5) {
    std::vector<Matrix> analytic;
    {
        ad::Tape tape;
        std::vector<ad::Var> leaves;
        leaves.reserve(params.size());
        for (const auto& p : params) leaves.push_back(tape.leaf(p));
        ad::Var loss = build(tape, leaves);
        tape.backward(loss);
        for (ad::Var v : leaves) analytic.push_back(tape.grad(v));
    }
    auto eval = [&](const std::vector<Matrix>& ps) {
        ad::Tape tape;
        std::vector<ad::Var> leaves;
        leaves.reserve(ps.size());
        for (const auto& p : ps) leaves.push_back(tape.leaf(p));
        return tape.value(build(tape, leaves))(0, 0);
    };
    Real worst = 0;
    std::vector<Matrix> probe = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (Index i = 0; i < params[pi].rows(); ++i) {
            for (Index j = 0; j < params[pi].cols(); ++j) {
                const Real saved = probe[pi](i, j);
                probe[pi](i, j) = saved + h;
                const Real up = eval(probe);
                probe[pi](i, j) = saved - h;
                const Real down = eval(probe);
                probe[pi](i, j) = saved;
                const Real fd = (up - down) / (2 * h);
                const Real rel =
                    std::abs(analytic[pi](i, j) - fd) / std::max(Real(1), std::abs(fd));
                worst = std::max(worst, rel);
            }
        }
    }
    return worst;
}

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, Real scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> nd(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
    return m;
}

}  // namespace seqee::test
