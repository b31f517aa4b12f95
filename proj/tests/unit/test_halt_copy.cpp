#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "seqee/halt_copy.hpp"

using namespace seqee;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.num_layers = 4;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.ffn_dim = 32;
    cfg.num_labels = 4;
    cfg.vocab_size = 12;
    cfg.max_len = 16;
    return cfg;
}

bool identical(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

std::vector<int> random_ids(Index n, Index vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(vocab) - 1);
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (auto& id : ids) id = pick(rng);
    return ids;
}

// A threshold that actually spreads exits over layers for this model/input.
Real spreading_delta(const EncoderWeights& w, const ModelConfig& cfg,
                     const std::vector<int>& ids) {
    const EncoderTrace t = forward_full(w, cfg, ids);
    std::vector<Real> all;
    for (const auto& layer_u : t.uncertainty) all.insert(all.end(), layer_u.begin(), layer_u.end());
    std::sort(all.begin(), all.end());
    return all[all.size() / 2];  // median uncertainty
}

}  // namespace

TEST_CASE("delta=0 TOKEE is bit-identical to the full forward") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 31);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto ids = random_ids(7, cfg.vocab_size, seed);
        const EncoderTrace full = forward_full(w, cfg, ids);
        const EeResult ee = forward_token_ee(w, cfg, ids, ExitPolicy::token(1, 0.0));

        REQUIRE(ee.trace.hidden.size() == full.hidden.size());
        for (std::size_t l = 0; l < full.hidden.size(); ++l)
            CHECK(identical(ee.trace.hidden[l], full.hidden[l]));
        for (std::size_t l = 0; l < full.ramp_probs.size(); ++l)
            CHECK(identical(ee.trace.ramp_probs[l], full.ramp_probs[l]));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            CHECK(ee.trace.exit_layer[i] == cfg.num_layers);
            CHECK(ee.labels[i] == static_cast<int>(argmax_row(full.ramp_probs.back(),
                                                              static_cast<Index>(i))));
        }
    }
}

TEST_CASE("delta>1 exits everything at layer 1 and pays for exactly one layer") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 32);
    const auto ids = random_ids(6, cfg.vocab_size, 9);
    const Index n = 6;

    const EeResult ee = forward_token_ee(w, cfg, ids, ExitPolicy::token(2, 1.5));
    const EncoderTrace full = forward_full(w, cfg, ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK(ee.trace.exit_layer[i] == 1);
        CHECK(ee.labels[i] ==
              static_cast<int>(argmax_row(full.ramp_probs[0], static_cast<Index>(i))));
    }
    // layer 1 full cost + one ramp + one uncertainty pass; nothing above
    MacCounts expect = layer_flops(n, n, cfg);
    expect.off_ramp = off_ramp_flops(n, cfg);
    expect.uncertainty = uncertainty_flops(n, cfg);
    CHECK(ee.ledger.per_layer[0] == expect);
    for (std::size_t l = 1; l < ee.ledger.per_layer.size(); ++l)
        CHECK(ee.ledger.per_layer[l].total() == 0);
    // hidden states above layer 1 are frozen copies
    for (std::size_t l = 2; l < ee.trace.hidden.size(); ++l)
        CHECK(identical(ee.trace.hidden[l], ee.trace.hidden[1]));
}

TEST_CASE("copy integrity and label provenance at a spreading threshold") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 33);
    const auto ids = random_ids(9, cfg.vocab_size, 17);
    const Real delta = spreading_delta(w, cfg, ids);
    const EeResult ee = forward_token_ee(w, cfg, ids, ExitPolicy::token(1, delta));

    bool spread = false;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i)
        spread = spread || ee.trace.exit_layer[i] != ee.trace.exit_layer[i + 1];
    CHECK(spread);  // the scenario actually exercises partial exits

    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int e = ee.trace.exit_layer[i];
        REQUIRE(e >= 1);
        // frozen rows stay bit-identical above the exit layer
        for (int l = e; l <= static_cast<int>(cfg.num_layers); ++l) {
            CHECK(identical(ee.trace.hidden[static_cast<std::size_t>(l)].row(static_cast<Index>(i)),
                            ee.trace.hidden[static_cast<std::size_t>(e)].row(static_cast<Index>(i))));
            CHECK(identical(
                ee.trace.ramp_probs[static_cast<std::size_t>(l - 1)].row(static_cast<Index>(i)),
                ee.trace.ramp_probs[static_cast<std::size_t>(e - 1)].row(static_cast<Index>(i))));
        }
        // predicted label comes from the exit-layer off-ramp
        CHECK(ee.labels[i] ==
              static_cast<int>(argmax_row(ee.trace.ramp_probs[static_cast<std::size_t>(e - 1)],
                                          static_cast<Index>(i))));
        // active mask: active through the exit layer, inactive above
        for (int l = 1; l <= static_cast<int>(cfg.num_layers); ++l)
            CHECK(static_cast<bool>(ee.trace.active[static_cast<std::size_t>(l - 1)][i]) ==
                  (l <= e));
    }
}

TEST_CASE("instrumented MAC counters match the analytic formulas per (N, M)") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 34);
    const auto ids = random_ids(8, cfg.vocab_size, 21);
    const Real delta = spreading_delta(w, cfg, ids);
    const EeResult ee = forward_token_ee(w, cfg, ids, ExitPolicy::token(1, delta));

    for (Index l = 1; l <= cfg.num_layers; ++l) {
        Index m = 0;
        for (char a : ee.trace.active[static_cast<std::size_t>(l - 1)]) m += a;
        MacCounts expect = layer_flops(8, m, cfg);
        expect.off_ramp = off_ramp_flops(m, cfg);
        expect.uncertainty = uncertainty_flops(m, cfg);
        CHECK(ee.ledger.per_layer[static_cast<std::size_t>(l - 1)] == expect);
    }
}

TEST_CASE("active rows computed alone equal the same rows of an all-active pass") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 35);
    // a partially-frozen input: random values stand in for copied rows
    const Matrix h_full = test::random_matrix(4, cfg.hidden_dim, 77);
    const std::vector<Index> two{1, 3};
    const std::vector<Index> all{0, 1, 2, 3};

    const Matrix rows_active = active_attention(h_full, two, w.layers[0], cfg);
    const Matrix rows_all = active_attention(h_full, all, w.layers[0], cfg);
    CHECK(identical(rows_active.row(0), rows_all.row(1)));
    CHECK(identical(rows_active.row(1), rows_all.row(3)));

    // M = N is the full layer, bit-exactly (same kernel, same shapes)
    const EncoderTrace full = forward_full(w, cfg, random_ids(4, cfg.vocab_size, 5));
    const Matrix again = active_attention(full.hidden[0], all, w.layers[0], cfg);
    CHECK(identical(again, full.hidden[1]));
}

TEST_CASE("single-token sequences: TOKEE and SENTEE agree for any threshold") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 36);
    for (Real delta : {0.0, 0.2, 0.5, 0.8, 1.5}) {
        for (int id = 0; id < 5; ++id) {
            const std::vector<int> ids{id};
            const EeResult tok = forward_token_ee(w, cfg, ids, ExitPolicy::token(3, delta));
            const EeResult sent =
                forward_sentence_ee(w, cfg, ids, ExitPolicy::sentence(Pool::max, delta));
            CHECK(tok.labels == sent.labels);
            CHECK(tok.trace.exit_layer == sent.trace.exit_layer);
        }
    }
}

TEST_CASE("sentence engine exits at the first layer whose pooled uncertainty clears delta") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 37);
    const auto ids = random_ids(7, cfg.vocab_size, 3);
    const EncoderTrace full = forward_full(w, cfg, ids);
    std::vector<Real> pooled;
    for (const auto& u : full.uncertainty) pooled.push_back(sentence_uncertainty(u, Pool::max));

    SUBCASE("delta > 1 exits at layer 1") {
        const EeResult r = forward_sentence_ee(w, cfg, ids, ExitPolicy::sentence(Pool::max, 1.5));
        for (int e : r.trace.exit_layer) CHECK(e == 1);
    }
    SUBCASE("unreachable delta rides to the top and reproduces the full forward") {
        const EeResult r = forward_sentence_ee(w, cfg, ids, ExitPolicy::sentence(Pool::max, 0.0));
        for (int e : r.trace.exit_layer) CHECK(e == cfg.num_layers);
        for (std::size_t i = 0; i < ids.size(); ++i)
            CHECK(r.labels[i] ==
                  static_cast<int>(argmax_row(full.ramp_probs.back(), static_cast<Index>(i))));
    }
    SUBCASE("mid threshold follows the first-below rule on recorded pooled values") {
        for (std::size_t target = 0; target < pooled.size(); ++target) {
            const Real delta = pooled[target] + 1e-9;
            int expect = static_cast<int>(cfg.num_layers);
            for (std::size_t l = 0; l < pooled.size(); ++l)
                if (pooled[l] < delta) {
                    expect = static_cast<int>(l) + 1;
                    break;
                }
            const EeResult r =
                forward_sentence_ee(w, cfg, ids, ExitPolicy::sentence(Pool::max, delta));
            for (int e : r.trace.exit_layer) CHECK(e == expect);
        }
    }
}

TEST_CASE("policy kind is enforced per engine") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 38);
    CHECK_THROWS_AS(forward_token_ee(w, cfg, {1}, ExitPolicy::sentence(Pool::max, 0.5)),
                    UsageError);
    CHECK_THROWS_AS(forward_sentence_ee(w, cfg, {1}, ExitPolicy::token(1, 0.5)), UsageError);
}

TEST_CASE("word groups halt together, decided by the first wordpiece") {
    const ModelConfig cfg = small_config();
    const EncoderWeights w = EncoderWeights::random_init(cfg, 39);
    const auto ids = random_ids(8, cfg.vocab_size, 13);
    WordGroups groups;
    groups.ranges = {{0, 2}, {2, 3}, {3, 6}, {6, 8}};

    const Real delta = spreading_delta(w, cfg, ids);
    const EeResult ee = forward_token_ee(w, cfg, ids, ExitPolicy::token(1, delta), &groups);

    for (const auto& [b, e] : groups.ranges) {
        for (Index t = b; t < e; ++t) {
            CHECK(ee.trace.exit_layer[static_cast<std::size_t>(t)] ==
                  ee.trace.exit_layer[static_cast<std::size_t>(b)]);
            CHECK(ee.labels[static_cast<std::size_t>(t)] == ee.labels[static_cast<std::size_t>(b)]);
        }
        const int el = ee.trace.exit_layer[static_cast<std::size_t>(b)];
        CHECK(ee.labels[static_cast<std::size_t>(b)] ==
              static_cast<int>(argmax_row(ee.trace.ramp_probs[static_cast<std::size_t>(el - 1)], b)));
    }

    WordGroups bad;
    bad.ranges = {{0, 2}, {3, 8}};  // hole
    CHECK_THROWS_AS(forward_token_ee(w, cfg, ids, ExitPolicy::token(1, delta), &bad), InputError);
}

TEST_CASE("synthetic wordpiece splitting is deterministic and grouped") {
    const auto [pieces, groups] =
        synth_wordpieces({"hi", "languages", "on", "grounds"}, 4);
    CHECK(pieces == std::vector<std::string>{"hi", "lang", "##uages", "on", "gro", "##unds"});
    REQUIRE(groups.ranges.size() == 4);
    CHECK(groups.ranges[1] == std::pair<Index, Index>{1, 3});
    CHECK(groups.ranges[3] == std::pair<Index, Index>{4, 6});
}
