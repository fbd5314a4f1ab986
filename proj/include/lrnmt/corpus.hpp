#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lrnmt {

struct SentencePair {
    std::string src;
    std::string tgt;

    bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
    std::vector<SentencePair> pairs;
    std::string src_lang = "fr";
    std::string tgt_lang = "bm";

    std::size_t size() const { return pairs.size(); }
};

struct SplitCorpus {
    ParallelCorpus train;
    ParallelCorpus valid;
    ParallelCorpus test;
    std::uint64_t seed = 0;
};

struct InstructionRecord {
    std::string system;
    std::string user;
    std::string assistant;
};

// The fixed prompt used when exporting instruction-format records.
inline constexpr const char* kDefaultInstruction =
    "Traduire cette phrase du français en bambara";

struct CleanReport {
    std::size_t input_count = 0;
    std::map<std::string, std::size_t> dropped_by_rule;  // encoding, link, repetition, empty, duplicate
    std::size_t output_count = 0;

    std::size_t dropped(const std::string& rule) const {
        auto it = dropped_by_rule.find(rule);
        return it == dropped_by_rule.end() ? 0 : it->second;
    }
};

struct CleanRules {
    bool drop_links = true;
    bool drop_repetition = true;
    bool strip_markers = true;  // one-sided enumerations and emojis
    bool dedup = true;
};

// One-sided cleanup of an already-normalized pair: enumeration markers and
// emojis are stripped from a side only when the other side has none.
SentencePair clean_pair(const SentencePair& pair);

// Full cleaning pipeline: normalize -> drop link rows -> drop repetition
// rows -> clean_pair -> drop emptied pairs -> exact dedup keeping the first
// occurrence. Invalid UTF-8 on either side drops the pair under "encoding".
std::pair<ParallelCorpus, CleanReport> preprocess(const ParallelCorpus& corpus,
                                                  const CleanRules& rules = {});

// Deterministic shuffle + contiguous partition. Ratios must sum to 1;
// |train| = floor(r0*N), |valid| = round(r1*N) clamped to what remains.
SplitCorpus split(const ParallelCorpus& corpus, double train_ratio, double valid_ratio,
                  double test_ratio, std::uint64_t seed);

InstructionRecord to_instruction(const SentencePair& pair,
                                 const std::string& system_prompt = kDefaultInstruction);

// Toy language pair for desk-scale training: random source token sequences,
// target = word-reversed source under a fixed bijective token substitution.
ParallelCorpus gen_synthetic(std::size_t n, std::uint64_t seed, std::size_t vocab_size);

// The substitution used by gen_synthetic, exposed so tests and demos can
// invert it: source word index i maps to target word index vocab_size-1-i.
std::string synthetic_src_word(std::size_t index);
std::string synthetic_tgt_word(std::size_t index);

// --- file formats ---------------------------------------------------------

std::vector<std::string> load_lines(const std::string& path);
ParallelCorpus load_parallel_text(const std::string& src_path, const std::string& tgt_path,
                                  const std::string& src_lang = "fr",
                                  const std::string& tgt_lang = "bm");
ParallelCorpus load_tsv(const std::string& path, const std::string& src_lang = "fr",
                        const std::string& tgt_lang = "bm");
void save_parallel_text(const ParallelCorpus& corpus, const std::string& src_path,
                        const std::string& tgt_path);
void save_tsv(const ParallelCorpus& corpus, const std::string& path);

// One JSON object per line with keys "system", "user", "assistant".
void save_instructions_jsonl(const ParallelCorpus& corpus, const std::string& path,
                             const std::string& system_prompt = kDefaultInstruction);

std::string clean_report_to_json(const CleanReport& report);

}  // namespace lrnmt
