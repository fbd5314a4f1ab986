#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lrnmt/checkpoint.hpp"
#include "lrnmt/corpus.hpp"
#include "lrnmt/decode.hpp"
#include "lrnmt/metrics.hpp"
#include "lrnmt/optim.hpp"
#include "lrnmt/transformer.hpp"

namespace lrnmt {

struct TrainerOptions {
    int epochs = 100;
    std::size_t token_batch_size = 4096;
    LrSchedule schedule;
    int patience = 4;        // early stop after this many stagnant validations
    int validate_every = 1;  // epochs between validations
    std::uint64_t seed = 1;
    bool use_adamw = false;
    double weight_decay = 0.01;
    std::size_t max_len = 128;  // pairs longer than this after BPE are dropped
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double val_bleu = -1.0;  // -1 when this epoch had no validation
    double val_chrf = -1.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_bleu = -1.0;
    bool aborted = false;
    std::string abort_reason;
    std::size_t dropped_overlong = 0;
    std::int64_t steps = 0;
};

struct EncodedPair {
    std::vector<int> src;      // subword ids + eos
    std::vector<int> tgt_in;   // bos + subword ids
    std::vector<int> tgt_out;  // subword ids + eos

    std::size_t token_count() const { return src.size() + tgt_out.size(); }
};

inline std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const BpeModel& bpe,
                                              const Vocabulary& vocab, std::size_t max_len,
                                              std::size_t* dropped_overlong = nullptr) {
    std::vector<EncodedPair> out;
    std::size_t dropped = 0;
    for (const SentencePair& pair : corpus.pairs) {
        EncodedPair enc;
        std::vector<int> src_ids = vocab.encode(apply_bpe(bpe, pair.src));
        std::vector<int> tgt_ids = vocab.encode(apply_bpe(bpe, pair.tgt));
        if (src_ids.empty() || tgt_ids.empty() || src_ids.size() + 1 > max_len ||
            tgt_ids.size() + 1 > max_len) {
            ++dropped;
            continue;
        }
        enc.src = std::move(src_ids);
        enc.src.push_back(Vocabulary::kEos);
        enc.tgt_in.push_back(Vocabulary::kBos);
        enc.tgt_in.insert(enc.tgt_in.end(), tgt_ids.begin(), tgt_ids.end());
        enc.tgt_out = std::move(tgt_ids);
        enc.tgt_out.push_back(Vocabulary::kEos);
        out.push_back(std::move(enc));
    }
    if (dropped_overlong) *dropped_overlong = dropped;
    return out;
}

// Batches close before the combined source+target token count would exceed
// the budget; a pair too large on its own still forms a singleton batch.
inline std::vector<std::vector<std::size_t>> token_batches(
    const std::vector<EncodedPair>& pairs, const std::vector<std::size_t>& order,
    std::size_t token_budget) {
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> current;
    std::size_t current_tokens = 0;
    for (std::size_t idx : order) {
        const std::size_t cost = pairs[idx].token_count();
        if (!current.empty() && current_tokens + cost > token_budget) {
            batches.push_back(std::move(current));
            current.clear();
            current_tokens = 0;
        }
        current.push_back(idx);
        current_tokens += cost;
    }
    if (!current.empty()) batches.push_back(std::move(current));
    return batches;
}

// Greedy decoding of a whole corpus followed by corpus BLEU/chrF, the
// validation metric used during training.
template <class T>
std::pair<double, double> evaluate_greedy(const TransformerModel<T>& model, const BpeModel& bpe,
                                          const Vocabulary& vocab, const ParallelCorpus& corpus,
                                          std::size_t max_len) {
    if (corpus.pairs.empty()) return {0.0, 0.0};
    TransformerScorer<T> scorer(model);
    std::vector<std::string> hyp, ref;
    hyp.reserve(corpus.pairs.size());
    for (const SentencePair& pair : corpus.pairs) {
        const std::vector<int> src = encode_source(bpe, vocab, pair.src);
        Hypothesis h = greedy_decode(scorer, src, max_len);
        hyp.push_back(decode_target(vocab, h.tokens));
        ref.push_back(pair.tgt);
    }
    EvalReport report = bleu(hyp, ref);
    return {report.bleu_percent, chrf(hyp, ref)};
}

// Full training loop: token batching, per-step schedule, periodic greedy
// validation, best-BLEU snapshot, early stopping after `patience` stagnant
// validations. `validate_override` substitutes the validation metric in
// tests. A non-finite loss or gradient aborts and restores the last good
// snapshot.
template <class T>
TrainResult train_transformer(
    TransformerModel<T>& model, const SplitCorpus& split, const BpeModel& bpe,
    const Vocabulary& vocab, const TrainerOptions& opts,
    const std::function<void(const EpochRecord&)>& on_epoch = {},
    const std::function<std::pair<double, double>(int)>& validate_override = {}) {
    TrainResult result;
    std::vector<EncodedPair> train_pairs =
        encode_corpus(split.train, bpe, vocab, opts.max_len, &result.dropped_overlong);
    if (train_pairs.empty()) throw DataError("training corpus is empty after encoding");

    auto params = model.named_parameters();
    std::vector<Var<T>> param_list;
    for (auto& [name, p] : params) param_list.push_back(p);
    OptimizerState<T> optim;
    optim.weight_decay = opts.use_adamw ? opts.weight_decay : 0.0;

    LrSchedule schedule = opts.schedule;
    {
        std::vector<std::size_t> order(train_pairs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        const std::size_t steps_per_epoch =
            token_batches(train_pairs, order, opts.token_batch_size).size();
        if (schedule.kind == ScheduleKind::kLinear && schedule.total_steps == 0)
            schedule.total_steps =
                static_cast<std::int64_t>(steps_per_epoch) * std::max(1, opts.epochs);
        if (schedule.kind == ScheduleKind::kCyclic && schedule.step_size == 0)
            schedule.step_size = static_cast<std::int64_t>(4 * std::max<std::size_t>(1, steps_per_epoch));
    }

    std::vector<double> bleu_history;
    std::vector<std::vector<T>> best_snapshot;
    int stagnant = 0;
    std::int64_t step = 0;
    double last_lr = 0.0;

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        std::vector<std::size_t> order(train_pairs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        RngStream shuffle_rng(mix_seed(opts.seed, "epoch-" + std::to_string(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        double loss_sum = 0.0;
        std::size_t token_sum = 0;
        for (const auto& batch_indices : token_batches(train_pairs, order, opts.token_batch_size)) {
            std::vector<std::vector<int>> src_seqs, tgt_in_seqs;
            std::size_t tgt_len = 0;
            for (std::size_t idx : batch_indices) {
                src_seqs.push_back(train_pairs[idx].src);
                tgt_in_seqs.push_back(train_pairs[idx].tgt_in);
                tgt_len = std::max(tgt_len, train_pairs[idx].tgt_in.size());
            }
            TokenBatch src = TokenBatch::from_sequences(src_seqs);
            TokenBatch tgt_in = TokenBatch::from_sequences(tgt_in_seqs);
            std::vector<int> targets(tgt_in.batch * tgt_in.len, Vocabulary::kPad);
            std::size_t live_tokens = 0;
            for (std::size_t b = 0; b < batch_indices.size(); ++b) {
                const auto& t_out = train_pairs[batch_indices[b]].tgt_out;
                std::copy(t_out.begin(), t_out.end(), targets.begin() + b * tgt_in.len);
                live_tokens += t_out.size();
            }

            try {
                Tape<T> tape;
                DropoutCtx dctx = DropoutCtx::for_step(model.config.dropout, opts.seed,
                                                       static_cast<std::uint64_t>(step));
                Var<T> logits = transformer_forward(tape, model, src, tgt_in, dctx);
                Var<T> loss = cross_entropy(tape, logits, targets, Vocabulary::kPad,
                                            model.config.label_smoothing);
                if (!std::isfinite(static_cast<double>(loss->value[0])))
                    throw NumericError("non-finite training loss at step " + std::to_string(step));
                tape.backward(loss);
                last_lr = lr_at(schedule, step, bleu_history);
                if (opts.use_adamw)
                    adamw_step(param_list, optim, last_lr);
                else
                    adam_step(param_list, optim, last_lr);
                zero_grads(param_list);
                loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(live_tokens);
                token_sum += live_tokens;
                ++step;
            } catch (const NumericError& e) {
                result.aborted = true;
                result.abort_reason = e.what();
                if (!best_snapshot.empty()) restore_values(params, best_snapshot);
                result.steps = step;
                return result;
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.loss = token_sum ? loss_sum / static_cast<double>(token_sum) : 0.0;
        record.lr = last_lr;

        const bool validate = opts.validate_every > 0 && epoch % opts.validate_every == 0;
        if (validate) {
            const auto [vb, vc] = validate_override
                                      ? validate_override(epoch)
                                      : evaluate_greedy(model, bpe, vocab, split.valid, opts.max_len);
            record.val_bleu = vb;
            record.val_chrf = vc;
            bleu_history.push_back(vb);
            if (vb > result.best_bleu) {
                result.best_bleu = vb;
                result.best_epoch = epoch;
                best_snapshot = snapshot_values(params);
                stagnant = 0;
            } else {
                ++stagnant;
            }
        }
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);
        if (validate && stagnant >= opts.patience) break;
    }

    if (!best_snapshot.empty()) restore_values(params, best_snapshot);
    result.steps = step;
    return result;
}

}  // namespace lrnmt
