#include <doctest.h>

#include "seqee/flops.hpp"

using namespace seqee;

namespace {

ModelConfig bert_base_geometry() {
    ModelConfig cfg;
    cfg.num_layers = 12;
    cfg.hidden_dim = 768;
    cfg.num_heads = 12;
    cfg.ffn_dim = 3072;
    cfg.num_labels = 50;
    cfg.vocab_size = 30522;
    cfg.max_len = 512;
    return cfg;
}

}  // namespace

TEST_CASE("published BERT-base cost table at N=256") {
    const ModelConfig cfg = bert_base_geometry();
    const MacCounts layer = layer_flops(256, 256, cfg);

    CHECK(layer.ffn == 1'207'959'552ull);  // "1207.9M", exact
    CHECK(off_ramp_flops(256, cfg) == 9'830'400ull);  // "9.8M", exact

    const Real attn = static_cast<Real>(layer.q_proj + layer.kv_proj + layer.o_proj +
                                        layer.attn_scores + layer.attn_apply);
    CHECK(attn == doctest::Approx(703.6e6).epsilon(0.015));  // published value, within 1.5%
    CHECK(static_cast<Real>(layer.backbone()) ==
          doctest::Approx(1911.5e6).epsilon(0.015));  // layer total

    // one off-ramp stays under 0.52% of one layer
    CHECK(static_cast<Real>(off_ramp_flops(256, cfg)) / static_cast<Real>(layer.backbone()) <=
          0.0052);
}

TEST_CASE("layer_flops formulas and edge cases") {
    ModelConfig cfg;
    cfg.num_layers = 4;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.ffn_dim = 32;
    cfg.num_labels = 5;
    cfg.vocab_size = 10;
    cfg.max_len = 32;

    const MacCounts c = layer_flops(10, 4, cfg);
    CHECK(c.q_proj == 4ull * 16 * 16);
    CHECK(c.kv_proj == 2ull * 10 * 16 * 16);
    CHECK(c.o_proj == 4ull * 16 * 16);
    CHECK(c.attn_scores == 4ull * 10 * 16);
    CHECK(c.attn_apply == 4ull * 10 * 16);
    CHECK(c.ffn == 2ull * 4 * 16 * 32);
    CHECK(c.backbone() == (2ull * 10 + 2 * 4) * 16 * 16 + 2ull * 4 * 10 * 16 + 2ull * 4 * 16 * 32);

    CHECK(layer_flops(10, 0, cfg).total() == 0);  // skipped layer
    CHECK_THROWS_AS(layer_flops(4, 10, cfg), UsageError);

    CHECK(uncertainty_flops(7, cfg) == 2ull * 7 * 5);
}

TEST_CASE("speedup: unity baseline, half-depth estimate, hand-summed ledger") {
    ModelConfig cfg;
    cfg.num_layers = 12;
    cfg.hidden_dim = 64;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.num_labels = 7;
    cfg.vocab_size = 50;
    cfg.max_len = 64;

    const FlopsLedger full = FlopsLedger::full_forward(20, cfg);
    CHECK(full.total() == full.baseline_total);
    CHECK(full.speedup() == doctest::Approx(1.0));

    // sentence exit at layer 6 of 12, ignoring ramp overhead: ~2x
    FlopsLedger half;
    half.per_layer.assign(12, MacCounts{});
    for (int l = 0; l < 6; ++l) half.per_layer[static_cast<std::size_t>(l)] = layer_flops(20, 20, cfg);
    half.baseline_total = 12ull * layer_flops(20, 20, cfg).backbone();
    CHECK(half.speedup() == doctest::Approx(2.0));

    // recorded exit pattern vs independent summation
    const std::vector<Index> active_per_layer{20, 20, 13, 8, 3, 1, 0, 0, 0, 0, 0, 0};
    FlopsLedger run;
    run.baseline_total = full_forward_flops(20, cfg);
    std::uint64_t by_hand = 0;
    for (Index m : active_per_layer) {
        MacCounts c = layer_flops(20, m, cfg);
        c.off_ramp = off_ramp_flops(m, cfg);
        c.uncertainty = uncertainty_flops(m, cfg);
        run.per_layer.push_back(c);
        by_hand += c.q_proj + c.kv_proj + c.o_proj + c.attn_scores + c.attn_apply + c.ffn +
                   c.off_ramp + c.uncertainty;
    }
    CHECK(run.total() == by_hand);
    CHECK(run.speedup() == doctest::Approx(static_cast<Real>(run.baseline_total) /
                                           static_cast<Real>(by_hand)));

    FlopsLedger empty;
    CHECK_THROWS_AS(empty.speedup(), UsageError);
}

TEST_CASE("average_speedup is the ratio of sums") {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_labels = 3;
    cfg.vocab_size = 10;
    cfg.max_len = 16;

    FlopsLedger a = FlopsLedger::full_forward(6, cfg);
    CHECK(average_speedup({a, a, a}) == doctest::Approx(a.speedup()));

    // one ledger at 1x and one at 3x with equal baselines: 1.5x, not 2x
    FlopsLedger one, three;
    one.baseline_total = three.baseline_total = 300;
    one.per_layer.push_back(MacCounts{});
    one.per_layer[0].ffn = 300;
    three.per_layer.push_back(MacCounts{});
    three.per_layer[0].ffn = 100;
    CHECK(one.speedup() == doctest::Approx(1.0));
    CHECK(three.speedup() == doctest::Approx(3.0));
    CHECK(average_speedup({one, three}) == doctest::Approx(1.5));

    // mixed corpus equals brute-force division of raw counts
    FlopsLedger b = FlopsLedger::full_forward(13, cfg);
    const Real brute = static_cast<Real>(a.baseline_total + b.baseline_total + three.baseline_total) /
                       static_cast<Real>(a.total() + b.total() + three.total());
    CHECK(average_speedup({a, b, three}) == doctest::Approx(brute));

    CHECK_THROWS_AS(average_speedup({}), InputError);
}

TEST_CASE("ledger json holds itemized fields") {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_labels = 3;
    cfg.vocab_size = 10;
    cfg.max_len = 16;
    const std::string j = FlopsLedger::full_forward(4, cfg).to_json_string();
    CHECK(j.find("\"q_proj\"") != std::string::npos);
    CHECK(j.find("\"baseline_total\"") != std::string::npos);
    CHECK(j.find("\"speedup\"") != std::string::npos);
}
