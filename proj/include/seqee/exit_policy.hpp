#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqee/linalg.hpp"

namespace seqee {

enum class PolicyKind { sentence, token };
enum class Pool { max, average };

// SENTEE / TOKEE decision parameters. Thresholds are compared strictly
// (u < delta): a value > 1 exits everything at layer 1, a value of 0 never
// exits early because uncertainties are normalized into [0, 1].
struct ExitPolicy {
    static constexpr int kInfiniteWindow = -1;

    PolicyKind kind = PolicyKind::token;
    Pool pool = Pool::max;  // sentence-level only
    int window = 0;         // token-level only; kInfiniteWindow = whole sentence
    Real threshold = 0.0;

    static ExitPolicy sentence(Pool pool, Real delta) {
        return ExitPolicy{PolicyKind::sentence, pool, 0, delta};
    }
    static ExitPolicy token(int window, Real delta) {
        return ExitPolicy{PolicyKind::token, Pool::max, window, delta};
    }

    std::string to_json_string() const;
    static ExitPolicy from_json_string(const std::string& text);
};

// Pooled sentence uncertainty; empty input is an error.
Real sentence_uncertainty(const std::vector<Real>& u, Pool pool);

// u'_n = max of u over [n-k, n+k] clamped to the sequence; k = kInfiniteWindow
// yields the sentence max at every position.
std::vector<Real> window_uncertainty(const std::vector<Real>& u, int window);

struct ExitDecision {
    std::vector<char> exit_now;  // per token
    bool sentence_exit = false;  // set for sentence policies
};

// Decide which active tokens leave at the current layer. `u` must hold a
// value for every position: live values for active tokens, frozen exit-layer
// values for tokens that already left (they still shape neighbours' windows).
// On the final layer every active token exits unconditionally.
ExitDecision decide_exits(const std::vector<Real>& u, const ExitPolicy& policy,
                          const std::vector<char>& active, bool final_layer);

// Replay token-level decisions over per-layer uncertainties recorded from a
// full forward (no halt-and-copy): each token's first exit layer, defaulting
// to L for tokens that never clear the threshold.
std::vector<int> simulate_exit_layers(const std::vector<std::vector<Real>>& per_layer_u,
                                      const ExitPolicy& policy);

struct CalibrationResult {
    Real delta = 0;
    Real achieved = 0;
    bool converged = false;
};

// Bisect delta in [0, 1] until speedup_of(delta) lands within tol of target.
// Relies on speedup being (empirically) non-decreasing in delta; if even
// delta = 1 cannot reach the target the boundary value is returned with
// converged = false.
CalibrationResult calibrate_threshold(const std::function<Real(Real)>& speedup_of, Real target,
                                      Real tol = 0.02, int max_iter = 40);

}  // namespace seqee
