#include "lrnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lrnmt/common.hpp"
#include "lrnmt/text.hpp"
#include "lrnmt/utf8.hpp"

namespace lrnmt {

namespace {

constexpr std::size_t kBleuOrder = 4;
constexpr std::size_t kChrfOrder = 6;
constexpr double kChrfBeta = 2.0;

using Counts = std::map<std::string, long long>;

// Word n-grams joined with '\x1f' so token boundaries stay unambiguous.
Counts word_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    Counts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t j = 1; j < n; ++j) {
            key += '\x1f';
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

long long clipped_matches(const Counts& hyp, const Counts& ref) {
    long long matches = 0;
    for (const auto& [key, count] : hyp) {
        auto it = ref.find(key);
        if (it != ref.end()) matches += std::min(count, it->second);
    }
    return matches;
}

long long total(const Counts& c) {
    long long t = 0;
    for (const auto& [key, count] : c) t += count;
    return t;
}

struct BleuStats {
    std::array<long long, kBleuOrder> matches{};
    std::array<long long, kBleuOrder> hyp_ngrams{};
    long long hyp_len = 0;
    long long ref_len = 0;

    void accumulate(const std::vector<std::string>& hyp_tokens,
                    const std::vector<std::string>& ref_tokens) {
        hyp_len += static_cast<long long>(hyp_tokens.size());
        ref_len += static_cast<long long>(ref_tokens.size());
        for (std::size_t n = 1; n <= kBleuOrder; ++n) {
            Counts h = word_ngrams(hyp_tokens, n);
            Counts r = word_ngrams(ref_tokens, n);
            matches[n - 1] += clipped_matches(h, r);
            hyp_ngrams[n - 1] += total(h);
        }
    }
};

// Effective order: orders the hypothesis has no n-grams of (everything
// shorter than n tokens) drop out of the geometric mean, so identical short
// pairs still score 100. Among counted orders, any zero-match order gives 0
// unless add-one smoothing is on.
double bleu_from_stats(const BleuStats& s, std::array<double, kBleuOrder>* precisions_out,
                       double* bp_out, bool smoothing) {
    double log_sum = 0.0;
    std::size_t counted = 0;
    bool zero_order = false;
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        if (precisions_out)
            (*precisions_out)[n] = s.hyp_ngrams[n] > 0
                                       ? static_cast<double>(s.matches[n]) /
                                             static_cast<double>(s.hyp_ngrams[n])
                                       : 0.0;
        if (s.hyp_ngrams[n] == 0) continue;
        ++counted;
        double matches = static_cast<double>(s.matches[n]);
        double totals = static_cast<double>(s.hyp_ngrams[n]);
        if (smoothing && s.matches[n] == 0) {
            matches += 1.0;
            totals += 1.0;
        }
        const double p = matches / totals;
        if (p <= 0.0)
            zero_order = true;
        else
            log_sum += std::log(p);
    }
    double bp = 0.0;
    if (s.hyp_len > 0) {
        bp = s.hyp_len >= s.ref_len
                 ? 1.0
                 : std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
    }
    if (bp_out) *bp_out = bp;
    if (zero_order || counted == 0) return 0.0;
    return 100.0 * bp * std::exp(log_sum / static_cast<double>(counted));
}

void check_inputs(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    if (hyp.empty()) throw DataError("metric needs at least one hypothesis/reference pair");
    if (hyp.size() != ref.size())
        throw DataError("hypothesis count " + std::to_string(hyp.size()) +
                        " does not match reference count " + std::to_string(ref.size()));
}

struct ChrfStats {
    std::array<long long, kChrfOrder> matches{};
    std::array<long long, kChrfOrder> hyp_total{};
    std::array<long long, kChrfOrder> ref_total{};

    // Character n-grams inside words; they never cross word boundaries.
    static Counts char_ngrams(const std::string& text, std::size_t n) {
        Counts counts;
        for (const std::string& word : split_whitespace(text)) {
            std::vector<std::string> chars = utf8_chars(word);
            if (chars.size() < n) continue;
            for (std::size_t i = 0; i + n <= chars.size(); ++i) {
                std::string key;
                for (std::size_t j = 0; j < n; ++j) key += chars[i + j];
                ++counts[key];
            }
        }
        return counts;
    }

    void accumulate(const std::string& hyp, const std::string& ref) {
        for (std::size_t n = 1; n <= kChrfOrder; ++n) {
            Counts h = char_ngrams(hyp, n);
            Counts r = char_ngrams(ref, n);
            matches[n - 1] += clipped_matches(h, r);
            hyp_total[n - 1] += total(h);
            ref_total[n - 1] += total(r);
        }
    }
};

ChrfDetail chrf_from_stats(const ChrfStats& s) {
    ChrfDetail detail;
    double precision_sum = 0.0, recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t n = 0; n < kChrfOrder; ++n) {
        const bool any = s.hyp_total[n] > 0 || s.ref_total[n] > 0;
        detail.order_present[n] = any;
        if (!any) continue;  // no n-grams of this order on either side
        ++present;
        detail.precision[n] = s.hyp_total[n] > 0 ? static_cast<double>(s.matches[n]) /
                                                       static_cast<double>(s.hyp_total[n])
                                                 : 0.0;
        detail.recall[n] = s.ref_total[n] > 0 ? static_cast<double>(s.matches[n]) /
                                                    static_cast<double>(s.ref_total[n])
                                              : 0.0;
        precision_sum += detail.precision[n];
        recall_sum += detail.recall[n];
    }
    if (present == 0) return detail;
    const double p = precision_sum / static_cast<double>(present);
    const double r = recall_sum / static_cast<double>(present);
    const double beta2 = kChrfBeta * kChrfBeta;
    if (p + r > 0) detail.score = 100.0 * (1.0 + beta2) * p * r / (beta2 * p + r);
    return detail;
}

}  // namespace

EvalReport bleu(const std::vector<std::string>& hypotheses,
                const std::vector<std::string>& references, bool per_sentence,
                bool sentence_smoothing) {
    check_inputs(hypotheses, references);
    BleuStats stats;
    EvalReport report;
    report.n_sentences = hypotheses.size();
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        stats.accumulate(split_whitespace(hypotheses[i]), split_whitespace(references[i]));
        if (per_sentence)
            report.per_sentence_bleu.push_back(
                bleu_sentence(hypotheses[i], references[i], sentence_smoothing));
    }
    report.bleu_percent =
        bleu_from_stats(stats, &report.precisions, &report.brevity_penalty, /*smoothing=*/false);
    return report;
}

double bleu_sentence(const std::string& hypothesis, const std::string& reference, bool smoothing) {
    BleuStats stats;
    stats.accumulate(split_whitespace(hypothesis), split_whitespace(reference));
    return bleu_from_stats(stats, nullptr, nullptr, smoothing);
}

double chrf(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references) {
    return chrf_detail(hypotheses, references).score;
}

ChrfDetail chrf_detail(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references) {
    check_inputs(hypotheses, references);
    ChrfStats stats;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) stats.accumulate(hypotheses[i], references[i]);
    return chrf_from_stats(stats);
}

EvalReport evaluate_corpus(const std::vector<std::string>& hypotheses,
                           const std::vector<std::string>& references, bool per_sentence) {
    EvalReport report = bleu(hypotheses, references, per_sentence);
    report.chrf_score = chrf(hypotheses, references);
    return report;
}

}  // namespace lrnmt
