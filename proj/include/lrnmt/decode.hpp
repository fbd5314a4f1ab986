#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lrnmt/bpe.hpp"
#include "lrnmt/text.hpp"
#include "lrnmt/transformer.hpp"

namespace lrnmt {

struct Hypothesis {
    std::vector<int> tokens;  // bos-prefixed; may end with eos
    double log_prob = 0.0;
    bool finished = false;

    // generated tokens, excluding the bos prefix
    std::size_t length() const { return tokens.empty() ? 0 : tokens.size() - 1; }
};

// Anything that can score the next token given a source and a bos-prefixed
// prefix. The transformer provides one; tests provide enumerable toy models.
class SequenceScorer {
  public:
    virtual ~SequenceScorer() = default;
    virtual std::vector<double> next_log_probs(const std::vector<int>& src,
                                               const std::vector<int>& prefix) = 0;
    virtual int bos_id() const { return Vocabulary::kBos; }
    virtual int eos_id() const { return Vocabulary::kEos; }
};

// Argmax decoding; ties break toward the lowest token id, matching the
// candidate ordering used by beam_search.
inline Hypothesis greedy_decode(SequenceScorer& scorer, const std::vector<int>& src,
                                std::size_t max_len) {
    Hypothesis hyp;
    hyp.tokens.push_back(scorer.bos_id());
    while (hyp.length() < max_len) {
        const std::vector<double> lp = scorer.next_log_probs(src, hyp.tokens);
        std::size_t best = 0;
        for (std::size_t i = 1; i < lp.size(); ++i)
            if (lp[i] > lp[best]) best = i;
        hyp.tokens.push_back(static_cast<int>(best));
        hyp.log_prob += lp[best];
        if (static_cast<int>(best) == scorer.eos_id()) break;
    }
    hyp.finished = true;  // ended with eos or hit the length cap
    return hyp;
}

// Standard beam search: the top-`width` prefixes by cumulative log-prob
// survive each step, finished hypotheses move to a completed pool, and the
// final ranking divides by length^length_alpha. Ties break toward shorter
// hypotheses, then lexicographically smaller token sequences.
inline Hypothesis beam_search(SequenceScorer& scorer, const std::vector<int>& src,
                              std::size_t width, std::size_t max_len, double length_alpha = 1.0) {
    if (width < 1) throw ConfigError("beam width must be >= 1");

    auto normalized = [length_alpha](const Hypothesis& h) {
        const double len = static_cast<double>(std::max<std::size_t>(1, h.length()));
        return h.log_prob / std::pow(len, length_alpha);
    };
    auto better_final = [&](const Hypothesis& a, const Hypothesis& b) {
        const double na = normalized(a), nb = normalized(b);
        if (na != nb) return na > nb;
        if (a.length() != b.length()) return a.length() < b.length();
        return a.tokens < b.tokens;
    };

    std::vector<Hypothesis> live{{{scorer.bos_id()}, 0.0, false}};
    std::vector<Hypothesis> finished;

    for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
        std::vector<Hypothesis> candidates;
        candidates.reserve(live.size() * 8);
        for (const Hypothesis& hyp : live) {
            const std::vector<double> lp = scorer.next_log_probs(src, hyp.tokens);
            for (std::size_t tok = 0; tok < lp.size(); ++tok) {
                Hypothesis next = hyp;
                next.tokens.push_back(static_cast<int>(tok));
                next.log_prob += lp[tok];
                candidates.push_back(std::move(next));
            }
        }
        const std::size_t keep = std::min(width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), [](const Hypothesis& a, const Hypothesis& b) {
                              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                              return a.tokens < b.tokens;
                          });
        candidates.resize(keep);

        live.clear();
        for (Hypothesis& hyp : candidates) {
            if (hyp.tokens.back() == scorer.eos_id()) {
                hyp.finished = true;
                finished.push_back(std::move(hyp));
            } else {
                live.push_back(std::move(hyp));
            }
        }
    }
    for (Hypothesis& hyp : live) {
        hyp.finished = true;  // truncated at max_len
        finished.push_back(std::move(hyp));
    }

    Hypothesis best = finished.front();
    for (std::size_t i = 1; i < finished.size(); ++i)
        if (better_final(finished[i], best)) best = finished[i];
    return best;
}

// Scores continuations with a transformer checkpoint. Re-runs the decoder
// over the whole prefix each step; fine at desk scale.
template <class T>
class TransformerScorer : public SequenceScorer {
  public:
    explicit TransformerScorer(const TransformerModel<T>& model) : model_(model) {}

    std::vector<double> next_log_probs(const std::vector<int>& src,
                                       const std::vector<int>& prefix) override {
        Tape<T> tape(false);
        DropoutCtx dctx = DropoutCtx::inference();
        TokenBatch src_batch = TokenBatch::from_sequences({src});
        TokenBatch tgt_batch = TokenBatch::from_sequences({prefix});
        Var<T> logits = transformer_forward(tape, model_, src_batch, tgt_batch, dctx);
        return log_softmax_row(logits, prefix.size() - 1);
    }

    // log-softmax of the logits row at `position`, in double
    static std::vector<double> log_softmax_row(const Var<T>& logits, std::size_t position) {
        const std::size_t v = logits->shape.back();
        const T* row = logits->value.data() + position * v;
        double mx = static_cast<double>(row[0]);
        for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, static_cast<double>(row[i]));
        double sum = 0;
        for (std::size_t i = 0; i < v; ++i) sum += std::exp(static_cast<double>(row[i]) - mx);
        const double lse = mx + std::log(sum);
        std::vector<double> out(v);
        for (std::size_t i = 0; i < v; ++i) out[i] = static_cast<double>(row[i]) - lse;
        return out;
    }

  private:
    const TransformerModel<T>& model_;
};

struct DecodeConfig {
    std::size_t beam_width = 5;
    std::size_t max_len = 128;
    double length_alpha = 1.0;
};

// Token ids for one source sentence: subwords plus a trailing eos.
inline std::vector<int> encode_source(const BpeModel& bpe, const Vocabulary& vocab,
                                      const std::string& sentence) {
    std::vector<int> ids = vocab.encode(apply_bpe(bpe, normalize_text(sentence)));
    ids.push_back(Vocabulary::kEos);
    return ids;
}

// Strips bos/eos and reverses BPE into plain text.
inline std::string decode_target(const Vocabulary& vocab, const std::vector<int>& tokens) {
    std::vector<std::string> subwords;
    for (int id : tokens) {
        if (id == Vocabulary::kBos || id == Vocabulary::kEos || id == Vocabulary::kPad) continue;
        subwords.push_back(vocab.token_of(id));
    }
    return decode_bpe(subwords);
}

// Full text-to-text path: normalize -> BPE -> ids -> search -> ids -> text.
template <class T>
std::string translate(const TransformerModel<T>& model, const BpeModel& bpe,
                      const Vocabulary& vocab, const std::string& sentence,
                      const DecodeConfig& config = {}) {
    if (normalize_text(sentence).empty()) return "";
    TransformerScorer<T> scorer(model);
    const std::vector<int> src = encode_source(bpe, vocab, sentence);
    Hypothesis hyp = config.beam_width <= 1
                         ? greedy_decode(scorer, src, config.max_len)
                         : beam_search(scorer, src, config.beam_width, config.max_len,
                                       config.length_alpha);
    return decode_target(vocab, hyp.tokens);
}

}  // namespace lrnmt
