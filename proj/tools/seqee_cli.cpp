// Command-line surface: train the two-stage pipeline, sweep exit policies
// into trade-off tables, print the analytic FLOPs report, and dump
// exit-layer distributions.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqee/checkpoint.hpp"
#include "seqee/config.hpp"
#include "seqee/eval.hpp"
#include "seqee/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seqee;

namespace {

constexpr const char* kSweepSchema = "seqee-sweep-v1";

struct AppConfig {
    KvConfig raw;
    ModelConfig model;  // vocab_size filled after the corpus is known
    TrainConfig train;
    std::string data_source = "synth";
    std::string train_path, dev_path;
    int token_col = 0, label_col = -1;
    SynthSpec synth;
    int synth_train_sentences = 800;
    int synth_dev_sentences = 500;
};

AppConfig read_app_config(const std::string& path) {
    AppConfig app;
    if (!path.empty()) app.raw = KvConfig::load_file(path);
    const KvConfig& kv = app.raw;

    app.model.num_layers = kv.get_int("model.layers", 6);
    app.model.hidden_dim = kv.get_int("model.hidden", 64);
    app.model.num_heads = kv.get_int("model.heads", 4);
    app.model.ffn_dim = kv.get_int("model.ffn", 256);
    app.model.max_len = kv.get_int("model.max_len", 128);

    app.data_source = kv.get_str("data.source", "synth");
    app.train_path = kv.get_str("data.train", "");
    app.dev_path = kv.get_str("data.dev", "");
    app.token_col = static_cast<int>(kv.get_int("data.token_col", 0));
    app.label_col = static_cast<int>(kv.get_int("data.label_col", -1));

    app.synth.num_labels = static_cast<int>(kv.get_int("synth.labels", 6));
    app.synth.min_len = kv.get_int("synth.min_len", 8);
    app.synth.max_len = kv.get_int("synth.max_len", 24);
    app.synth.dependency_radius = static_cast<int>(kv.get_int("synth.radius", 1));
    app.synth.difficulty_mix = kv.get_real("synth.difficulty", 1.0);
    app.synth_train_sentences = static_cast<int>(kv.get_int("synth.train_sentences", 800));
    app.synth_dev_sentences = static_cast<int>(kv.get_int("synth.dev_sentences", 500));

    TrainConfig& tc = app.train;
    tc.stage1_epochs = static_cast<int>(kv.get_int("train.stage1_epochs", 60));
    tc.stage2_epochs = static_cast<int>(kv.get_int("train.stage2_epochs", 12));
    tc.batch_size = static_cast<int>(kv.get_int("train.batch", 8));
    tc.learning_rate = kv.get_real("train.lr", 1e-3);
    tc.weight_decay = kv.get_real("train.weight_decay", 0.01);
    tc.warmup_frac = kv.get_real("train.warmup", 0.05);
    tc.flooding_level = kv.get_real("train.flooding", -1);
    tc.flood_combined = kv.get_bool("train.flood_combined", true);
    tc.window_min = static_cast<int>(kv.get_int("train.k_min", 0));
    tc.window_max = static_cast<int>(kv.get_int("train.k_max", 4));
    tc.window_include_inf = kv.get_bool("train.k_inf", true);
    tc.delta_min = kv.get_real("train.delta_min", 0.05);
    tc.delta_max = kv.get_real("train.delta_max", 0.9);
    const std::string red = kv.get_str("train.reduction", "mean");
    if (red == "mean")
        tc.reduction = LossReduction::mean;
    else if (red == "sum")
        tc.reduction = LossReduction::sum;
    else
        throw ConfigError("train.reduction must be mean or sum");
    tc.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
    return app;
}

void dump_effective_config(const AppConfig& app, std::ostream& out) {
    std::map<std::string, std::string> eff;
    auto put = [&](const std::string& k, auto v) {
        std::ostringstream ss;
        ss << v;
        eff[k] = ss.str();
    };
    put("model.layers", app.model.num_layers);
    put("model.hidden", app.model.hidden_dim);
    put("model.heads", app.model.num_heads);
    put("model.ffn", app.model.ffn_dim);
    put("model.max_len", app.model.max_len);
    put("data.source", app.data_source);
    put("data.train", app.train_path);
    put("data.dev", app.dev_path);
    put("data.token_col", app.token_col);
    put("data.label_col", app.label_col);
    put("synth.labels", app.synth.num_labels);
    put("synth.train_sentences", app.synth_train_sentences);
    put("synth.dev_sentences", app.synth_dev_sentences);
    put("synth.min_len", app.synth.min_len);
    put("synth.max_len", app.synth.max_len);
    put("synth.radius", app.synth.dependency_radius);
    put("synth.difficulty", app.synth.difficulty_mix);
    put("train.stage1_epochs", app.train.stage1_epochs);
    put("train.stage2_epochs", app.train.stage2_epochs);
    put("train.batch", app.train.batch_size);
    put("train.lr", app.train.learning_rate);
    put("train.weight_decay", app.train.weight_decay);
    put("train.warmup", app.train.warmup_frac);
    put("train.flooding", app.train.flooding_level);
    put("train.flood_combined", app.train.flood_combined ? "true" : "false");
    put("train.k_min", app.train.window_min);
    put("train.k_max", app.train.window_max);
    put("train.k_inf", app.train.window_include_inf ? "true" : "false");
    put("train.delta_min", app.train.delta_min);
    put("train.delta_max", app.train.delta_max);
    put("train.reduction", app.train.reduction == LossReduction::mean ? "mean" : "sum");
    put("seed", app.train.seed);
    for (const auto& [k, v] : eff) out << k << " = " << v << "\n";
}

struct LoadedCorpus {
    std::vector<LabeledSequence> train, dev;
    TokenVocab tokens;
    LabelVocab labels;
};

LoadedCorpus load_corpus(const AppConfig& app) {
    LoadedCorpus c;
    if (app.data_source == "synth") {
        SynthSpec train_spec = app.synth;
        train_spec.num_sentences = app.synth_train_sentences;
        SynthSpec dev_spec = app.synth;
        dev_spec.num_sentences = app.synth_dev_sentences;
        // corpus seeds derive from the run seed so every command regenerates
        // the same data
        SynthData train_data = synth_task(train_spec, app.train.seed * 1000 + 7);
        SynthData dev_data = synth_task(dev_spec, app.train.seed * 1000 + 8);
        c.tokens = train_data.tokens;
        c.labels = train_data.labels;
        c.train = encode_corpus(train_data.sentences, c.tokens, c.labels);
        c.dev = encode_corpus(dev_data.sentences, c.tokens, c.labels);
    } else if (app.data_source == "conll") {
        if (app.train_path.empty()) throw ConfigError("data.train is required for conll data");
        const auto train_raw = read_conll(app.train_path, app.token_col, app.label_col);
        if (train_raw.empty()) throw InputError("training corpus " + app.train_path + " is empty");
        c.tokens = TokenVocab::build(train_raw);
        c.labels = LabelVocab::build(train_raw);
        c.train = encode_corpus(train_raw, c.tokens, c.labels);
        if (!app.dev_path.empty())
            c.dev = encode_corpus(read_conll(app.dev_path, app.token_col, app.label_col),
                                  c.tokens, c.labels);
    } else {
        throw ConfigError("data.source must be synth or conll");
    }
    return c;
}

std::vector<LabeledSequence> corpus_for_checkpoint(const Checkpoint& ckpt,
                                                   const std::string& corpus_path,
                                                   const AppConfig& app) {
    if (!corpus_path.empty()) {
        const auto raw = read_conll(corpus_path, app.token_col, app.label_col);
        return encode_corpus(raw, ckpt.tokens, ckpt.labels);
    }
    if (app.data_source != "synth")
        throw ConfigError("give --corpus, or a config whose data.source is synth");
    SynthSpec dev_spec = app.synth;
    dev_spec.num_sentences = app.synth_dev_sentences;
    SynthData dev_data = synth_task(dev_spec, app.train.seed * 1000 + 8);
    return encode_corpus(dev_data.sentences, ckpt.tokens, ckpt.labels);
}

std::vector<Real> parse_real_list(const std::string& text) {
    std::vector<Real> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_window_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (item == "inf")
            out.push_back(ExitPolicy::kInfiniteWindow);
        else
            out.push_back(std::stoi(item));
    }
    return out;
}

std::string window_name(int k) {
    return k == ExitPolicy::kInfiniteWindow ? "inf" : std::to_string(k);
}

// ---- train ------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, const std::string& stage2_mode,
              const std::string& resume_stage1) {
    AppConfig app = read_app_config(config_path);
    if (seed) app.train.seed = *seed;
    app.train.validate();

    const LoadedCorpus corpus = load_corpus(app);
    app.model.num_labels = corpus.labels.size();
    app.model.vocab_size = corpus.tokens.size();
    app.model.validate();

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output dir " + out_dir + ": " + ec.message());
    std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl", std::ios::app);
    if (!metrics) throw IoError("cannot write metrics log in " + out_dir);
    MetricsSink sink = [&](const std::string& line) {
        metrics << line << "\n";
        metrics.flush();
    };

    Checkpoint ckpt;
    ckpt.config = app.model;
    ckpt.labels = corpus.labels;
    ckpt.tokens = corpus.tokens;

    if (resume_stage1.empty()) {
        std::cout << "stage 1: joint off-ramp fine-tuning (" << app.train.stage1_epochs
                  << " epochs, " << corpus.train.size() << " sentences)\n";
        ckpt.weights = train_stage1(EncoderWeights::random_init(app.model, app.train.seed),
                                    app.model, corpus.train, corpus.dev, app.train, sink);
        save_checkpoint((fs::path(out_dir) / "stage1.ckpt").string(), ckpt);
    } else {
        Checkpoint loaded = load_checkpoint(resume_stage1);
        ckpt = std::move(loaded);
        std::cout << "stage 1: resumed from " << resume_stage1 << "\n";
    }

    auto run_stage2 = [&](SamplingMode mode, const std::string& file) {
        std::cout << "stage 2 (" << (mode == SamplingMode::self_sampling ? "self" : "random")
                  << "-sampling, " << app.train.stage2_epochs << " epochs)\n";
        Stage2Result res = train_stage2(ckpt.weights, app.model, corpus.train, corpus.dev,
                                        app.train, mode, sink);
        Checkpoint out = ckpt;
        out.weights = std::move(res.weights);
        save_checkpoint((fs::path(out_dir) / file).string(), out);
    };
    if (stage2_mode == "self" || stage2_mode == "all")
        run_stage2(SamplingMode::self_sampling, "stage2_self.ckpt");
    if (stage2_mode == "random" || stage2_mode == "all")
        run_stage2(SamplingMode::random_sampling, "stage2_random.ckpt");

    std::cout << "checkpoints written to " << out_dir << "\n";
    return 0;
}

// ---- sweep ------------------------------------------------------------------

struct SweepRow {
    std::string policy;
    std::string k;
    Real delta = 0, speedup = 1, metric = 0, delta_metric = 0;
    Real target = 0;  // matched-slice rows only
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     std::uint64_t seed, bool matched) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# schema: " << kSweepSchema << "\n";
    out << (matched ? "policy,k,target_speedup,delta,speedup,metric,delta_metric,seed\n"
                    : "policy,k,delta,speedup,metric,delta_metric,seed\n");
    for (const auto& r : rows) {
        out << r.policy << ',' << r.k << ',';
        if (matched) out << r.target << ',';
        out << r.delta << ',' << r.speedup << ',' << r.metric << ',' << r.delta_metric << ','
            << seed << "\n";
    }
}

int cmd_sweep(const std::string& ckpt_path, const std::string& config_path,
              const std::string& corpus_path, const std::string& policy_sel,
              const std::string& ks_text, const std::string& deltas_text,
              const std::string& match_text, const std::string& pool_name,
              const std::string& out_prefix, std::optional<std::uint64_t> seed, int workers) {
    AppConfig app = read_app_config(config_path);
    if (seed) app.train.seed = *seed;
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto corpus = corpus_for_checkpoint(ckpt, corpus_path, app);
    if (corpus.empty()) throw InputError("sweep corpus is empty");
    const Pool pool = pool_name == "average" ? Pool::average : Pool::max;

    const bool want_token = policy_sel == "tokee" || policy_sel == "both";
    const bool want_sentence = policy_sel == "sentee" || policy_sel == "both";
    if (!want_token && !want_sentence)
        throw ConfigError("--policy must be tokee, sentee or both");

    std::vector<Real> deltas = parse_real_list(deltas_text);
    if (deltas.empty()) throw ConfigError("--deltas list is empty");
    // the delta -> 0 anchor is part of every sweep
    if (std::find(deltas.begin(), deltas.end(), Real(0)) == deltas.end())
        deltas.insert(deltas.begin(), Real(0));
    const std::vector<int> ks = parse_window_list(ks_text);
    if (want_token && ks.empty()) throw ConfigError("--ks list is empty");

    const PolicyEval full = evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels,
                                            std::nullopt, workers);

    auto eval_policy_rows = [&](const ExitPolicy& proto, const std::string& name,
                                const std::string& kname) {
        std::vector<SweepRow> rows;
        for (Real delta : deltas) {
            SweepRow row{name, kname, delta, 1.0, full.metric, 0.0, 0.0};
            if (delta > 0) {
                ExitPolicy p = proto;
                p.threshold = delta;
                const PolicyEval pe =
                    evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels, p, workers);
                row.speedup = pe.avg_speedup;
                row.metric = pe.metric;
                row.delta_metric = pe.metric - full.metric;
            }
            rows.push_back(row);
        }
        return rows;
    };

    std::vector<SweepRow> rows;
    if (want_token)
        for (int k : ks) {
            auto part = eval_policy_rows(ExitPolicy::token(k, 0), "tokee", window_name(k));
            rows.insert(rows.end(), part.begin(), part.end());
        }
    if (want_sentence) {
        auto part = eval_policy_rows(ExitPolicy::sentence(pool, 0), "sentee",
                                     pool == Pool::max ? "max" : "average");
        rows.insert(rows.end(), part.begin(), part.end());
    }

    // matched-speedup slices per window size (and sentence-level for reference)
    std::vector<SweepRow> matched;
    for (Real target : parse_real_list(match_text)) {
        auto calibrate_row = [&](const ExitPolicy& proto, const std::string& name,
                                 const std::string& kname) {
            const CalibrationResult cal = calibrate_threshold(
                [&](Real d) {
                    ExitPolicy p = proto;
                    p.threshold = d;
                    return evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels, p,
                                           workers)
                        .avg_speedup;
                },
                target);
            ExitPolicy p = proto;
            p.threshold = cal.delta;
            const PolicyEval pe =
                evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels, p, workers);
            matched.push_back(SweepRow{name, kname, cal.delta, pe.avg_speedup, pe.metric,
                                       pe.metric - full.metric, target});
        };
        if (want_token)
            for (int k : ks) calibrate_row(ExitPolicy::token(k, 0), "tokee", window_name(k));
        if (want_sentence)
            calibrate_row(ExitPolicy::sentence(pool, 0), "sentee",
                          pool == Pool::max ? "max" : "average");
    }

    write_sweep_csv(out_prefix + ".csv", rows, app.train.seed, false);
    if (!matched.empty())
        write_sweep_csv(out_prefix + "_matched.csv", matched, app.train.seed, true);

    json j{{"schema_version", 1},
           {"schema", kSweepSchema},
           {"checkpoint", ckpt_path},
           {"seed", app.train.seed},
           {"full_metric", full.metric},
           {"rows", json::array()},
           {"matched", json::array()}};
    for (const auto& r : rows)
        j["rows"].push_back({{"policy", r.policy},
                             {"k", r.k},
                             {"delta", r.delta},
                             {"speedup", r.speedup},
                             {"metric", r.metric},
                             {"delta_metric", r.delta_metric}});
    for (const auto& r : matched)
        j["matched"].push_back({{"policy", r.policy},
                                {"k", r.k},
                                {"target_speedup", r.target},
                                {"delta", r.delta},
                                {"speedup", r.speedup},
                                {"metric", r.metric},
                                {"delta_metric", r.delta_metric}});
    std::ofstream jout(out_prefix + ".json");
    if (!jout) throw IoError("cannot write " + out_prefix + ".json");
    jout << j.dump(2) << "\n";

    std::cout << rows.size() << " sweep rows";
    if (!matched.empty()) std::cout << " + " << matched.size() << " matched rows";
    std::cout << " -> " << out_prefix << ".{csv,json}\n";
    return 0;
}

// ---- flops ------------------------------------------------------------------

void print_flops_table(const ModelConfig& cfg, Index n, std::ostream& out) {
    const MacCounts layer = layer_flops(n, n, cfg);
    auto mm = [](std::uint64_t v) {
        std::ostringstream ss;
        ss.precision(1);
        ss << std::fixed << static_cast<double>(v) / 1e6 << "M";
        return ss.str();
    };
    out << "geometry: layers=" << cfg.num_layers << " hidden=" << cfg.hidden_dim
        << " ffn=" << cfg.ffn_dim << " labels=" << cfg.num_labels << " seq_len=" << n << "\n";
    out << "per-layer MACs (1 MAC = 1 multiply-add):\n";
    out << "  self-attention " << mm(layer.q_proj + layer.kv_proj + layer.o_proj +
                                     layer.attn_scores + layer.attn_apply)
        << "  (q " << mm(layer.q_proj) << ", kv " << mm(layer.kv_proj) << ", out "
        << mm(layer.o_proj) << ", scores " << mm(layer.attn_scores) << ", apply "
        << mm(layer.attn_apply) << ")\n";
    out << "  feed-forward   " << mm(layer.ffn) << "\n";
    out << "  layer total    " << mm(layer.backbone()) << "\n";
    out << "  classifier     " << mm(off_ramp_flops(n, cfg)) << "\n";
    out << "full forward (" << cfg.num_layers << " layers + classifier): "
        << mm(full_forward_flops(n, cfg)) << "\n";
}

int cmd_flops(bool bert_base, long layers, long hidden, long heads, long ffn, long labels,
              long seq_len, long exit_layer, const std::string& active_text,
              const std::string& json_path) {
    ModelConfig cfg;
    if (bert_base) {
        cfg.num_layers = 12;
        cfg.hidden_dim = 768;
        cfg.num_heads = 12;
        cfg.ffn_dim = 3072;
        cfg.num_labels = 50;
        seq_len = 256;
    } else {
        cfg.num_layers = layers;
        cfg.hidden_dim = hidden;
        cfg.num_heads = heads;
        cfg.ffn_dim = ffn;
        cfg.num_labels = labels;
    }
    cfg.vocab_size = 1;
    cfg.max_len = std::max<Index>(seq_len, 1);
    cfg.validate();
    const Index n = seq_len;

    print_flops_table(cfg, n, std::cout);
    if (bert_base) {
        const MacCounts layer = layer_flops(n, n, cfg);
        const std::uint64_t attn = layer.q_proj + layer.kv_proj + layer.o_proj +
                                   layer.attn_scores + layer.attn_apply;
        auto line = [&](const char* what, double got, double published) {
            std::cout << "  " << what << ": computed " << got / 1e6 << "M vs published "
                      << published / 1e6 << "M (" << std::abs(got - published) / published * 100
                      << "% off)\n";
        };
        std::cout << "published-table comparison (N=256, 768->3072, 50 labels):\n";
        line("feed-forward ", static_cast<double>(layer.ffn), 1207.9e6);
        line("self-attention", static_cast<double>(attn), 703.6e6);
        line("layer total  ", static_cast<double>(layer.backbone()), 1911.5e6);
        line("classifier   ", static_cast<double>(off_ramp_flops(n, cfg)), 9.8e6);
    }

    FlopsLedger ledger = FlopsLedger::full_forward(n, cfg);
    if (!active_text.empty()) {
        // explicit active-token counts per layer (token-level exit pattern)
        std::vector<Real> ms = parse_real_list(active_text);
        if (static_cast<Index>(ms.size()) != cfg.num_layers)
            throw ConfigError("--active wants one count per layer");
        ledger.per_layer.clear();
        for (Real mv : ms) {
            const Index m = static_cast<Index>(mv);
            MacCounts c = layer_flops(n, m, cfg);
            c.off_ramp = off_ramp_flops(m, cfg);
            c.uncertainty = uncertainty_flops(m, cfg);
            ledger.per_layer.push_back(c);
        }
    } else if (exit_layer > 0) {
        // whole-sentence exit at a fixed layer
        if (exit_layer > cfg.num_layers) throw ConfigError("--exit-layer beyond the model");
        ledger.per_layer.assign(static_cast<std::size_t>(cfg.num_layers), MacCounts{});
        for (long l = 0; l < exit_layer; ++l) {
            MacCounts c = layer_flops(n, n, cfg);
            c.off_ramp = off_ramp_flops(n, cfg);
            c.uncertainty = uncertainty_flops(n, cfg);
            ledger.per_layer[static_cast<std::size_t>(l)] = c;
        }
    }
    if (!active_text.empty() || exit_layer > 0)
        std::cout << "early-exit ledger: total " << ledger.total() << " MACs, speedup "
                  << ledger.speedup() << "x\n";
    if (!json_path.empty()) {
        std::ofstream out(json_path);
        if (!out) throw IoError("cannot write " + json_path);
        out << ledger.to_json_string() << "\n";
    }
    return 0;
}

// ---- exit histogram ----------------------------------------------------------

int cmd_exit_histogram(const std::string& ckpt_path, const std::string& config_path,
                       const std::string& corpus_path, const std::string& policy_json,
                       int k, Real delta, const std::string& out_path,
                       const std::string& traces_path, std::optional<std::uint64_t> seed,
                       int workers) {
    AppConfig app = read_app_config(config_path);
    if (seed) app.train.seed = *seed;
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto corpus = corpus_for_checkpoint(ckpt, corpus_path, app);
    if (corpus.empty()) throw InputError("histogram corpus is empty");

    const ExitPolicy policy = policy_json.empty() ? ExitPolicy::token(k, delta)
                                                  : ExitPolicy::from_json_string(policy_json);
    const PolicyEval pe =
        evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels, policy, workers);

    if (!traces_path.empty()) {
        // one trace per line, in corpus order
        std::ofstream traces(traces_path);
        if (!traces) throw IoError("cannot write " + traces_path);
        for (const auto& seq : corpus) {
            const WordGroups groups{seq.groups};
            const EeResult r =
                policy.kind == PolicyKind::token
                    ? forward_token_ee(ckpt.weights, ckpt.config, seq.token_ids, policy,
                                       seq.groups.empty() ? nullptr : &groups)
                    : forward_sentence_ee(ckpt.weights, ckpt.config, seq.token_ids, policy);
            traces << trace_to_json_string(r.trace) << "\n";
        }
        std::cout << "traces -> " << traces_path << "\n";
    }

    // the sentence-level reference at the same achieved speedup
    const CalibrationResult cal = calibrate_threshold(
        [&](Real d) {
            return evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels,
                                   ExitPolicy::sentence(Pool::max, d), workers)
                .avg_speedup;
        },
        std::max(Real(1), pe.avg_speedup));
    const PolicyEval sent =
        evaluate_policy(ckpt.weights, ckpt.config, corpus, ckpt.labels,
                        ExitPolicy::sentence(Pool::max, cal.delta), workers);

    json j{{"schema_version", 1},
           {"policy", json::parse(policy.to_json_string())},
           {"speedup", pe.avg_speedup},
           {"metric", pe.metric},
           {"exit_counts_per_layer", pe.exit_histogram},
           {"mean_exit_layer", pe.mean_exit_layer},
           {"sentee_at_matched_speedup",
            {{"delta", cal.delta},
             {"speedup", sent.avg_speedup},
             {"mean_exit_layer", sent.mean_exit_layer},
             {"calibrated", cal.converged}}}};
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot write " + out_path);
        out << j.dump(2) << "\n";
        std::cout << "histogram -> " << out_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"seqee: sentence- and token-level early-exit for sequence labeling"};
    cli.require_subcommand(1);
    int workers = default_workers();
    cli.add_option("--workers", workers, "evaluation worker threads (or SEQEE_WORKERS)");

    std::string config_path, out_dir = "out", stage2_mode = "self", resume_stage1;
    std::optional<std::uint64_t> seed;

    auto* train = cli.add_subcommand("train", "two-stage training on a corpus");
    train->add_option("--config", config_path, "key=value config file")->required();
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--stage2-mode", stage2_mode, "self | random | all | none");
    train->add_option("--resume-stage1", resume_stage1, "skip stage 1, start from a checkpoint");

    std::string ckpt_path, corpus_path, policy_sel = "both", ks_text = "0,1,2,4,inf";
    std::string deltas_text = "0,0.05,0.1,0.15,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
    std::string match_text, pool_name = "max", out_prefix = "sweep";
    auto* sweep = cli.add_subcommand("sweep", "policy grid -> trade-off table (CSV + JSON)");
    sweep->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    sweep->add_option("--config", config_path, "config (for a synth corpus and defaults)");
    sweep->add_option("--corpus", corpus_path, "CoNLL corpus (overrides the config corpus)");
    sweep->add_option("--policy", policy_sel, "tokee | sentee | both");
    sweep->add_option("--ks", ks_text, "comma list of window sizes; inf allowed");
    sweep->add_option("--deltas", deltas_text, "comma list of thresholds (0 = anchor row)");
    sweep->add_option("--match-speedup", match_text,
                      "comma list of target speedups for per-k calibrated slices");
    sweep->add_option("--pool", pool_name, "sentence pooling: max | average");
    sweep->add_option("--out", out_prefix, "output prefix");
    sweep->add_option("--seed", seed, "override the config seed");

    bool bert_base = false;
    long f_layers = 12, f_hidden = 768, f_heads = 12, f_ffn = 3072, f_labels = 50,
         f_seq = 256, f_exit = 0;
    std::string active_text, flops_json;
    auto* flops = cli.add_subcommand("flops", "analytic FLOPs report");
    flops->add_flag("--bert-base", bert_base, "BERT-base geometry + published-table comparison");
    flops->add_option("--layers", f_layers, "encoder layers");
    flops->add_option("--hidden", f_hidden, "hidden width");
    flops->add_option("--heads", f_heads, "attention heads");
    flops->add_option("--ffn", f_ffn, "feed-forward width");
    flops->add_option("--labels", f_labels, "label count");
    flops->add_option("--seq-len", f_seq, "sequence length N");
    flops->add_option("--exit-layer", f_exit, "whole-sentence exit at this layer");
    flops->add_option("--active", active_text, "per-layer active token counts (token-level)");
    flops->add_option("--json", flops_json, "write the ledger as JSON here");

    std::string policy_json, hist_out, traces_path;
    int hist_k = 1;
    Real hist_delta = 0.3;
    auto* hist = cli.add_subcommand("exit-histogram", "per-layer exit distribution (JSON)");
    hist->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    hist->add_option("--config", config_path, "config (for a synth corpus)");
    hist->add_option("--corpus", corpus_path, "CoNLL corpus");
    hist->add_option("--policy-json", policy_json, "policy as JSON, e.g. {\"policy\":\"tokee\",...}");
    hist->add_option("--k", hist_k, "window size (ignored with --policy-json)");
    hist->add_option("--delta", hist_delta, "threshold (ignored with --policy-json)");
    hist->add_option("--out", hist_out, "output file (default stdout)");
    hist->add_option("--dump-traces", traces_path, "also write one trace JSON per sentence here");
    hist->add_option("--seed", seed, "override the config seed");

    auto* dump = cli.add_subcommand("dump-config", "print the effective configuration");
    dump->add_option("--config", config_path, "config file to overlay on the defaults");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return cli.exit(e);
    }

    try {
        if (*train)
            return cmd_train(config_path, out_dir, seed, stage2_mode, resume_stage1);
        if (*sweep)
            return cmd_sweep(ckpt_path, config_path, corpus_path, policy_sel, ks_text,
                             deltas_text, match_text, pool_name, out_prefix, seed, workers);
        if (*flops)
            return cmd_flops(bert_base, f_layers, f_hidden, f_heads, f_ffn, f_labels, f_seq,
                             f_exit, active_text, flops_json);
        if (*hist)
            return cmd_exit_histogram(ckpt_path, config_path, corpus_path, policy_json, hist_k,
                                      hist_delta, hist_out, traces_path, seed, workers);
        if (*dump) {
            dump_effective_config(read_app_config(config_path), std::cout);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
