#include "seqee/data_io.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace seqee {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<RawSentence> read_conll(const std::string& path, int token_col, int label_col) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<RawSentence> out;
    RawSentence cur;
    std::string line;
    long line_no = 0;
    auto flush = [&] {
        if (!cur.tokens.empty()) out.push_back(std::move(cur));
        cur = RawSentence{};
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) {
            flush();
            continue;
        }
        if (line[0] == '#') continue;
        const std::vector<std::string> cols = split_ws(line);
        const int ncols = static_cast<int>(cols.size());
        const int lcol = label_col < 0 ? ncols + label_col : label_col;
        if (token_col >= ncols || lcol >= ncols || lcol < 0)
            throw ParseError(path, line_no,
                             "expected at least " + std::to_string(std::max(token_col, label_col) + 1) +
                                 " columns, got " + std::to_string(ncols));
        cur.tokens.push_back(cols[static_cast<std::size_t>(token_col)]);
        cur.labels.push_back(cols[static_cast<std::size_t>(lcol)]);
    }
    flush();
    return out;
}

void write_conll(const std::string& path, const std::vector<RawSentence>& sentences) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        const auto& sent = sentences[s];
        for (std::size_t i = 0; i < sent.tokens.size(); ++i)
            out << sent.tokens[i] << ' ' << sent.labels[i] << '\n';
        if (s + 1 < sentences.size()) out << '\n';
    }
}

int LabelVocab::id(const std::string& name) const {
    auto it = std::lower_bound(names.begin(), names.end(), name);
    if (it == names.end() || *it != name) throw InputError("unknown label '" + name + "'");
    return static_cast<int>(it - names.begin());
}

LabelVocab LabelVocab::build(const std::vector<RawSentence>& sentences) {
    std::set<std::string> uniq;
    for (const auto& s : sentences)
        for (const auto& l : s.labels) uniq.insert(l);
    LabelVocab v;
    v.names.assign(uniq.begin(), uniq.end());
    if (v.names.size() < 2) throw InputError("label vocabulary needs at least 2 labels");
    auto bio_like = [](const std::string& l) {
        return l == "O" || (l.size() > 2 && (l[0] == 'B' || l[0] == 'I') && l[1] == '-');
    };
    v.schema = std::all_of(v.names.begin(), v.names.end(), bio_like) ? LabelSchema::bio
                                                                     : LabelSchema::plain;
    return v;
}

int TokenVocab::id(const std::string& token) const {
    auto it = std::lower_bound(names.begin(), names.end(), token);
    if (it != names.end() && *it == token) return static_cast<int>(it - names.begin());
    if (unk_id >= 0) return unk_id;
    throw InputError("unknown token '" + token + "' and no <unk> entry");
}

TokenVocab TokenVocab::build(const std::vector<RawSentence>& sentences, bool add_unk) {
    std::vector<std::string> names;
    {
        std::set<std::string> uniq;
        for (const auto& s : sentences)
            for (const auto& t : s.tokens) uniq.insert(t);
        names.assign(uniq.begin(), uniq.end());
    }
    return from_names(std::move(names), add_unk);
}

TokenVocab TokenVocab::from_names(std::vector<std::string> names, bool add_unk) {
    TokenVocab v;
    if (add_unk) names.push_back("<unk>");
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    v.names = std::move(names);
    if (add_unk)
        v.unk_id = static_cast<int>(
            std::lower_bound(v.names.begin(), v.names.end(), "<unk>") - v.names.begin());
    return v;
}

LabeledSequence encode(const RawSentence& raw, const TokenVocab& tokens, const LabelVocab& labels) {
    if (raw.tokens.size() != raw.labels.size())
        throw InputError("sentence has " + std::to_string(raw.tokens.size()) + " tokens but " +
                         std::to_string(raw.labels.size()) + " labels");
    LabeledSequence seq;
    seq.tokens = raw.tokens;
    seq.token_ids.reserve(raw.tokens.size());
    seq.labels.reserve(raw.labels.size());
    for (const auto& t : raw.tokens) seq.token_ids.push_back(tokens.id(t));
    for (const auto& l : raw.labels) seq.labels.push_back(labels.id(l));

    // "##"-prefixed pieces continue the previous word.
    bool any_pieces = false;
    Index begin = 0;
    for (std::size_t i = 0; i < raw.tokens.size(); ++i) {
        const bool cont = i > 0 && raw.tokens[i].rfind("##", 0) == 0;
        any_pieces = any_pieces || cont;
        if (i > 0 && !cont) {
            seq.groups.emplace_back(begin, static_cast<Index>(i));
            begin = static_cast<Index>(i);
        }
    }
    if (!raw.tokens.empty()) seq.groups.emplace_back(begin, static_cast<Index>(raw.tokens.size()));
    if (!any_pieces) seq.groups.clear();
    return seq;
}

std::vector<LabeledSequence> encode_corpus(const std::vector<RawSentence>& raw,
                                           const TokenVocab& tokens, const LabelVocab& labels) {
    std::vector<LabeledSequence> out;
    out.reserve(raw.size());
    for (const auto& s : raw) out.push_back(encode(s, tokens, labels));
    return out;
}

std::vector<Span> bio_spans(const std::vector<int>& labels, const LabelVocab& vocab) {
    std::vector<Span> spans;
    Span cur;
    bool open = false;
    auto close = [&](std::size_t end) {
        if (open) {
            cur.end = end;
            spans.push_back(cur);
            open = false;
        }
    };
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::string& name = vocab.name(labels[i]);
        if (name == "O" || name.size() < 3 || name[1] != '-') {
            close(i);
            continue;
        }
        const char head = name[0];
        const std::string type = name.substr(2);
        if (head == 'B' || !open || cur.type != type) {
            // fresh B-, or a stray/mismatched I- repaired into a new span
            close(i);
            cur = Span{i, i, type};
            open = true;
        }
        // I- matching the live span just extends it
    }
    close(labels.size());
    return spans;
}

PRF span_f1(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gold,
            const LabelVocab& vocab) {
    if (pred.size() != gold.size()) throw InputError("span_f1: sentence count mismatch");
    PRF r;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].size() != gold[s].size())
            throw InputError("span_f1: length mismatch in sentence " + std::to_string(s));
        const std::vector<Span> ps = bio_spans(pred[s], vocab);
        const std::vector<Span> gs = bio_spans(gold[s], vocab);
        for (const Span& p : ps)
            if (std::find(gs.begin(), gs.end(), p) != gs.end())
                ++r.tp;
            else
                ++r.fp;
        for (const Span& g : gs)
            if (std::find(ps.begin(), ps.end(), g) == ps.end()) ++r.fn;
    }
    r.precision = r.tp + r.fp == 0 ? Real(0) : static_cast<Real>(r.tp) / (r.tp + r.fp);
    r.recall = r.tp + r.fn == 0 ? Real(0) : static_cast<Real>(r.tp) / (r.tp + r.fn);
    r.f1 = r.precision + r.recall == 0 ? Real(0)
                                       : 2 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

Real token_accuracy(const std::vector<std::vector<int>>& pred,
                    const std::vector<std::vector<int>>& gold) {
    if (pred.size() != gold.size()) throw InputError("token_accuracy: sentence count mismatch");
    std::uint64_t hit = 0, total = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].size() != gold[s].size())
            throw InputError("token_accuracy: length mismatch in sentence " + std::to_string(s));
        for (std::size_t i = 0; i < pred[s].size(); ++i) {
            ++total;
            hit += pred[s][i] == gold[s][i];
        }
    }
    return total == 0 ? Real(0) : static_cast<Real>(hit) / static_cast<Real>(total);
}

// --- synthetic task ---------------------------------------------------------

namespace synth {

enum class Tier { content, succ, pair, noise };

struct TokenInfo {
    Tier tier;
    int salt;  // content: class; others: the <j> digit
};

TokenInfo classify(const std::string& surface) {
    if (surface.rfind("succ", 0) == 0) return {Tier::succ, surface.back() - '0'};
    if (surface.rfind("both", 0) == 0) return {Tier::pair, surface.back() - '0'};
    if (surface.rfind("unk", 0) == 0) return {Tier::noise, surface.back() - '0'};
    if (surface.size() >= 4 && surface[0] == 'w') return {Tier::content, surface[1] - '0'};
    throw InputError("not a synthetic token: '" + surface + "'");
}

}  // namespace synth

SynthData synth_task(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.num_labels < 2 || spec.num_labels > 9)
        throw ConfigError("synth num_labels must be in [2, 9]");
    if (spec.min_len < 1 || spec.max_len < spec.min_len)
        throw ConfigError("synth length range invalid");
    if (spec.difficulty_mix < 0 || spec.difficulty_mix > 1)
        throw ConfigError("synth difficulty_mix must be in [0, 1]");
    if (spec.dependency_radius < 1) throw ConfigError("synth dependency_radius must be >= 1");

    std::vector<std::string> inventory;
    for (int c = 0; c < spec.num_labels; ++c)
        for (int j = 0; j < 4; ++j)
            inventory.push_back("w" + std::to_string(c) + "x" + std::to_string(j));
    const std::size_t content_count = inventory.size();
    for (int j = 0; j < 2; ++j) inventory.push_back("succ" + std::to_string(j));
    for (int j = 0; j < 2; ++j) inventory.push_back("both" + std::to_string(j));
    for (int j = 0; j < 2; ++j) inventory.push_back("unk" + std::to_string(j));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> len_dist(spec.min_len, spec.max_len);
    std::uniform_real_distribution<Real> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> content_pick(0, content_count - 1);
    std::uniform_int_distribution<int> two(0, 1);
    std::uniform_int_distribution<int> label_pick(0, spec.num_labels - 1);

    const Real m = spec.difficulty_mix;
    // Sentences are built from units so every chain depth carries real mass:
    // a chain unit is one content token followed by 1..kMaxChain succ links.
    const Real p_chain = 0.32 * m, p_pair = 0.15 * m, p_noise = 0.08 * m;
    std::uniform_int_distribution<int> chain_len(1, SynthSpec::kMaxChain);

    auto nearest_content = [&](const RawSentence& sent, std::size_t i, int dir) -> int {
        for (int d = 1; d <= spec.dependency_radius; ++d) {
            const long j = static_cast<long>(i) + dir * d;
            if (j < 0 || j >= static_cast<long>(sent.tokens.size())) break;
            const auto info = synth::classify(sent.tokens[static_cast<std::size_t>(j)]);
            if (info.tier == synth::Tier::content) return info.salt;
        }
        return -1;
    };

    SynthData data;
    data.sentences.reserve(static_cast<std::size_t>(spec.num_sentences));
    for (int s = 0; s < spec.num_sentences; ++s) {
        RawSentence sent;
        const Index len = len_dist(rng);
        while (static_cast<Index>(sent.tokens.size()) < len) {
            const Real roll = unit(rng);
            if (roll < p_chain) {
                sent.tokens.push_back(inventory[content_pick(rng)]);
                const int links = chain_len(rng);
                for (int c = 0; c < links && static_cast<Index>(sent.tokens.size()) < len; ++c)
                    sent.tokens.push_back("succ" + std::to_string(two(rng)));
            } else if (roll < p_chain + p_pair) {
                sent.tokens.push_back("both" + std::to_string(two(rng)));
            } else if (roll < p_chain + p_pair + p_noise) {
                sent.tokens.push_back("unk" + std::to_string(two(rng)));
            } else {
                sent.tokens.push_back(inventory[content_pick(rng)]);
            }
        }
        // labels left to right: succ reads its (already labeled) neighbour
        std::vector<int> labels(sent.tokens.size(), 0);
        for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
            const auto info = synth::classify(sent.tokens[i]);
            switch (info.tier) {
                case synth::Tier::content:
                    labels[i] = info.salt % spec.num_labels;
                    break;
                case synth::Tier::succ:
                    labels[i] = (labels[i - 1] + 1 + info.salt) % spec.num_labels;
                    break;
                case synth::Tier::pair: {
                    const int l = nearest_content(sent, i, -1);
                    const int r = nearest_content(sent, i, +1);
                    labels[i] = ((l >= 0 ? l : 0) + (r >= 0 ? r : 0)) % spec.num_labels;
                    break;
                }
                case synth::Tier::noise:
                    labels[i] = label_pick(rng);
                    break;
            }
        }
        for (int l : labels) sent.labels.push_back("L" + std::to_string(l));
        data.sentences.push_back(std::move(sent));
    }

    data.tokens = TokenVocab::from_names(inventory, /*add_unk=*/false);
    std::vector<RawSentence> label_seed(1);
    for (int c = 0; c < spec.num_labels; ++c) {
        label_seed[0].tokens.push_back("w" + std::to_string(c) + "x0");
        label_seed[0].labels.push_back("L" + std::to_string(c));
    }
    data.labels = LabelVocab::build(label_seed);
    return data;
}

}  // namespace seqee
