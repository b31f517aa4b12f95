#include "seqee/exit_policy.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace seqee {

using nlohmann::json;

std::string ExitPolicy::to_json_string() const {
    json j;
    if (kind == PolicyKind::sentence) {
        j["policy"] = "sentee";
        j["pool"] = pool == Pool::max ? "max" : "average";
    } else {
        j["policy"] = "tokee";
        if (window == kInfiniteWindow)
            j["k"] = "inf";
        else
            j["k"] = window;
    }
    j["delta"] = threshold;
    return j.dump();
}

ExitPolicy ExitPolicy::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad policy json: ") + e.what());
    }
    ExitPolicy p;
    const std::string name = j.value("policy", "");
    if (name == "sentee") {
        p.kind = PolicyKind::sentence;
        const std::string pool = j.value("pool", "max");
        if (pool == "max")
            p.pool = Pool::max;
        else if (pool == "average")
            p.pool = Pool::average;
        else
            throw ConfigError("unknown pool '" + pool + "'");
    } else if (name == "tokee") {
        p.kind = PolicyKind::token;
        if (j.contains("k") && j["k"].is_string()) {
            if (j["k"] != "inf") throw ConfigError("window must be an integer or \"inf\"");
            p.window = kInfiniteWindow;
        } else {
            p.window = j.value("k", 0);
            if (p.window < 0) p.window = kInfiniteWindow;
        }
    } else {
        throw ConfigError("policy must be 'sentee' or 'tokee'");
    }
    if (!j.contains("delta")) throw ConfigError("policy json needs a delta");
    p.threshold = j["delta"].get<Real>();
    return p;
}

Real sentence_uncertainty(const std::vector<Real>& u, Pool pool) {
    if (u.empty()) throw InputError("sentence_uncertainty of empty sequence");
    if (pool == Pool::max) return *std::max_element(u.begin(), u.end());
    Real s = 0;
    for (Real x : u) s += x;
    return s / static_cast<Real>(u.size());
}

std::vector<Real> window_uncertainty(const std::vector<Real>& u, int window) {
    const std::size_t n = u.size();
    std::vector<Real> out(n);
    if (window == ExitPolicy::kInfiniteWindow) {
        const Real mx = u.empty() ? Real(0) : *std::max_element(u.begin(), u.end());
        std::fill(out.begin(), out.end(), mx);
        return out;
    }
    if (window < 0) throw InputError("negative window");
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= static_cast<std::size_t>(window) ? i - window : 0;
        const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(window));
        Real mx = u[lo];
        for (std::size_t j = lo + 1; j <= hi; ++j) mx = std::max(mx, u[j]);
        out[i] = mx;
    }
    return out;
}

ExitDecision decide_exits(const std::vector<Real>& u, const ExitPolicy& policy,
                          const std::vector<char>& active, bool final_layer) {
    if (u.size() != active.size()) throw InputError("uncertainty/active length mismatch");
    ExitDecision d;
    d.exit_now.assign(u.size(), 0);
    if (final_layer) {
        for (std::size_t i = 0; i < u.size(); ++i) d.exit_now[i] = active[i];
        d.sentence_exit = true;
        return d;
    }
    if (policy.kind == PolicyKind::sentence) {
        const Real pooled = sentence_uncertainty(u, policy.pool);
        d.sentence_exit = pooled < policy.threshold;
        if (d.sentence_exit)
            for (std::size_t i = 0; i < u.size(); ++i) d.exit_now[i] = active[i];
        return d;
    }
    const std::vector<Real> uw = window_uncertainty(u, policy.window);
    for (std::size_t i = 0; i < u.size(); ++i)
        d.exit_now[i] = active[i] && uw[i] < policy.threshold;
    return d;
}

std::vector<int> simulate_exit_layers(const std::vector<std::vector<Real>>& per_layer_u,
                                      const ExitPolicy& policy) {
    if (policy.kind != PolicyKind::token)
        throw UsageError("simulate_exit_layers expects a token-level policy");
    if (per_layer_u.empty()) throw InputError("no layers to simulate");
    const std::size_t n = per_layer_u[0].size();
    const int num_layers = static_cast<int>(per_layer_u.size());
    std::vector<int> exit_layer(n, 0);
    std::vector<char> active(n, 1);
    std::vector<Real> frozen(n, 0);
    for (int l = 1; l <= num_layers; ++l) {
        const auto& live = per_layer_u[static_cast<std::size_t>(l - 1)];
        if (live.size() != n) throw InputError("ragged uncertainty layers");
        for (std::size_t i = 0; i < n; ++i)
            if (active[i]) frozen[i] = live[i];
        ExitDecision d = decide_exits(frozen, policy, active, l == num_layers);
        for (std::size_t i = 0; i < n; ++i) {
            if (d.exit_now[i]) {
                exit_layer[i] = l;
                active[i] = 0;
            }
        }
    }
    return exit_layer;
}

CalibrationResult calibrate_threshold(const std::function<Real(Real)>& speedup_of, Real target,
                                      Real tol, int max_iter) {
    if (target < 1) throw InputError("target speedup must be >= 1");
    CalibrationResult best;
    Real lo = 0, hi = 1;
    Real s_hi = speedup_of(hi);
    best.delta = hi;
    best.achieved = s_hi;
    if (s_hi < target - tol) return best;  // unreachable even at delta = 1
    for (int it = 0; it < max_iter; ++it) {
        const Real mid = Real(0.5) * (lo + hi);
        const Real s = speedup_of(mid);
        if (std::abs(s - target) < std::abs(best.achieved - target)) {
            best.delta = mid;
            best.achieved = s;
        }
        if (std::abs(s - target) <= tol) {
            best.converged = true;
            return best;
        }
        if (s < target)
            lo = mid;
        else
            hi = mid;
    }
    best.converged = std::abs(best.achieved - target) <= tol;
    return best;
}

}  // namespace seqee
