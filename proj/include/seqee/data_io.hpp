#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqee/linalg.hpp"

namespace seqee {

struct RawSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> labels;
};

// Blank-line separated sentences, whitespace-separated columns, '#' comment
// lines skipped. label_col -1 selects the last column. Ragged rows raise
// ParseError with the offending line number; an empty file is an empty list.
std::vector<RawSentence> read_conll(const std::string& path, int token_col = 0,
                                    int label_col = -1);
// Canonical two-column form: "token label", one blank line between sentences.
void write_conll(const std::string& path, const std::vector<RawSentence>& sentences);

enum class LabelSchema { plain, bio };

struct LabelVocab {
    std::vector<std::string> names;  // dense ids from 0, sorted
    LabelSchema schema = LabelSchema::plain;

    Index size() const { return static_cast<Index>(names.size()); }
    int id(const std::string& name) const;
    const std::string& name(int id) const { return names.at(static_cast<std::size_t>(id)); }
    static LabelVocab build(const std::vector<RawSentence>& sentences);
};

struct TokenVocab {
    std::vector<std::string> names;  // sorted; may include "<unk>"
    int unk_id = -1;

    Index size() const { return static_cast<Index>(names.size()); }
    int id(const std::string& token) const;  // unk fallback, else InputError
    static TokenVocab build(const std::vector<RawSentence>& sentences, bool add_unk = true);
    static TokenVocab from_names(std::vector<std::string> names, bool add_unk = true);
};

struct LabeledSequence {
    std::vector<std::string> tokens;
    std::vector<int> token_ids;
    std::vector<int> labels;
    // Word ranges when the corpus carries "##"-prefixed wordpieces; empty
    // when every token is its own word.
    std::vector<std::pair<Index, Index>> groups;
};

LabeledSequence encode(const RawSentence& raw, const TokenVocab& tokens, const LabelVocab& labels);
std::vector<LabeledSequence> encode_corpus(const std::vector<RawSentence>& raw,
                                           const TokenVocab& tokens, const LabelVocab& labels);

// --- metrics ---------------------------------------------------------------

struct Span {
    std::size_t begin = 0;  // [begin, end)
    std::size_t end = 0;
    std::string type;
    friend bool operator==(const Span&, const Span&) = default;
};

// BIO decoding with conlleval-compatible repair: a stray I-X (no live X span)
// opens a new span as if it were B-X.
std::vector<Span> bio_spans(const std::vector<int>& labels, const LabelVocab& vocab);

struct PRF {
    Real precision = 0, recall = 0, f1 = 0;
    std::uint64_t tp = 0, fp = 0, fn = 0;
};

PRF span_f1(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gold,
            const LabelVocab& vocab);
Real token_accuracy(const std::vector<std::vector<int>>& pred,
                    const std::vector<std::vector<int>>& gold);

// --- synthetic task ---------------------------------------------------------

// Corpus generator for the desk-scale experiments. Labels are deterministic
// functions of a bounded window around each token, with tiers that need
// progressively deeper composition plus an irreducibly ambiguous fraction,
// so trained off-ramps improve with depth and exits spread over layers:
//   content  "w<c>x<j>"  -> label c                      (readable in place)
//   succ     "succ<j>"   -> (left neighbour's label + 1 + j) mod C; chains
//                           of m of these root at a content token, and each
//                           link applies its own step, so resolving the m-th
//                           link takes m sequential hops (a distance lookup
//                           is not enough)
//   pair     "both<j>"   -> (left neighbour content class + right neighbour
//                           content class) mod C, non-content sides count 0
//   noise    "unk<j>"    -> uniform random (never predictable)
// Successor chains are capped at kMaxChain and only ever follow content or
// succ tokens, so every label is fixed by a window of radius
// max(dependency_radius, kMaxChain).
struct SynthSpec {
    static constexpr int kMaxChain = 4;

    int num_labels = 6;
    Index min_len = 8;
    Index max_len = 24;
    int dependency_radius = 1;  // reach of the pair rule
    Real difficulty_mix = 0.5;  // 0 = all content tokens
    int num_sentences = 800;
};

struct SynthData {
    std::vector<RawSentence> sentences;
    TokenVocab tokens;  // built from the full generator inventory
    LabelVocab labels;
};

SynthData synth_task(const SynthSpec& spec, std::uint64_t seed);

}  // namespace seqee
