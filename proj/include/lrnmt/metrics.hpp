#pragma once

#include <array>
#include <string>
#include <vector>

namespace lrnmt {

struct EvalReport {
    double bleu_percent = 0.0;
    double chrf_score = 0.0;
    std::size_t n_sentences = 0;
    double brevity_penalty = 0.0;
    std::array<double, 4> precisions{};       // clipped n-gram precisions p1..p4
    std::vector<double> per_sentence_bleu;    // filled only on request
};

// Corpus-level BLEU over whitespace tokens of detokenized text: geometric
// mean of clipped 1..4-gram precisions times the brevity penalty, as a
// percentage. No smoothing: any order with zero matches gives 0.
EvalReport bleu(const std::vector<std::string>& hypotheses,
                const std::vector<std::string>& references, bool per_sentence = false,
                bool sentence_smoothing = true);

// Sentence-level BLEU; with smoothing, zero-match orders count as 1 match
// over an incremented denominator (add-one smoothing) so short outputs still
// rank.
double bleu_sentence(const std::string& hypothesis, const std::string& reference,
                     bool smoothing = true);

struct ChrfDetail {
    std::array<double, 6> precision{};
    std::array<double, 6> recall{};
    std::array<bool, 6> order_present{};  // some order had n-grams on either side
    double score = 0.0;
};

// chrF with character n-grams of order 1..6 inside whitespace words
// (n-grams never cross word boundaries) and beta = 2, scaled to [0, 100].
double chrf(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references);
ChrfDetail chrf_detail(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references);

// Convenience wrapper producing the full report used by the CLI.
EvalReport evaluate_corpus(const std::vector<std::string>& hypotheses,
                           const std::vector<std::string>& references,
                           bool per_sentence = false);

}  // namespace lrnmt
