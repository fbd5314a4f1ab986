#include "lrnmt/corpus.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "lrnmt/common.hpp"
#include "lrnmt/text.hpp"
#include "lrnmt/utf8.hpp"

namespace lrnmt {

SentencePair clean_pair(const SentencePair& pair) {
    SentencePair out = pair;
    const bool src_enum = has_leading_enumeration(out.src);
    const bool tgt_enum = has_leading_enumeration(out.tgt);
    if (src_enum && !tgt_enum) out.src = strip_leading_enumeration(out.src);
    if (tgt_enum && !src_enum) out.tgt = strip_leading_enumeration(out.tgt);

    const bool src_emoji = has_emoji(out.src);
    const bool tgt_emoji = has_emoji(out.tgt);
    if (src_emoji && !tgt_emoji) out.src = strip_emoji(out.src);
    if (tgt_emoji && !src_emoji) out.tgt = strip_emoji(out.tgt);
    return out;
}

std::pair<ParallelCorpus, CleanReport> preprocess(const ParallelCorpus& corpus,
                                                  const CleanRules& rules) {
    ParallelCorpus out;
    out.src_lang = corpus.src_lang;
    out.tgt_lang = corpus.tgt_lang;
    CleanReport report;
    report.input_count = corpus.pairs.size();
    for (const char* rule : {"encoding", "link", "repetition", "empty", "duplicate"})
        report.dropped_by_rule[rule] = 0;

    std::unordered_set<std::string> seen;
    std::vector<char32_t> scratch;
    for (const SentencePair& raw : corpus.pairs) {
        if (!utf8_decode(raw.src, scratch) || !utf8_decode(raw.tgt, scratch)) {
            ++report.dropped_by_rule["encoding"];
            continue;
        }
        SentencePair pair{normalize_text(raw.src), normalize_text(raw.tgt)};
        if (rules.drop_links && (has_link(pair.src) || has_link(pair.tgt))) {
            ++report.dropped_by_rule["link"];
            continue;
        }
        if (rules.drop_repetition &&
            (has_anomalous_repetition(pair.src) || has_anomalous_repetition(pair.tgt))) {
            ++report.dropped_by_rule["repetition"];
            continue;
        }
        if (rules.strip_markers) pair = clean_pair(pair);
        if (pair.src.empty() || pair.tgt.empty()) {
            ++report.dropped_by_rule["empty"];
            continue;
        }
        if (rules.dedup) {
            std::string key = pair.src + '\t' + pair.tgt;
            if (!seen.insert(std::move(key)).second) {
                ++report.dropped_by_rule["duplicate"];
                continue;
            }
        }
        out.pairs.push_back(std::move(pair));
    }
    report.output_count = out.pairs.size();
    return {std::move(out), std::move(report)};
}

SplitCorpus split(const ParallelCorpus& corpus, double train_ratio, double valid_ratio,
                  double test_ratio, std::uint64_t seed) {
    const double sum = train_ratio + valid_ratio + test_ratio;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
    const std::size_t n = corpus.pairs.size();
    if (n == 0) throw DataError("split: corpus is empty");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RngStream rng(mix_seed(seed, "corpus-split"));
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);

    const std::size_t n_train = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n)));
    std::size_t n_valid = static_cast<std::size_t>(std::llround(valid_ratio * static_cast<double>(n)));
    if (n_train + n_valid > n) n_valid = n - n_train;

    SplitCorpus result;
    result.seed = seed;
    for (ParallelCorpus* part : {&result.train, &result.valid, &result.test}) {
        part->src_lang = corpus.src_lang;
        part->tgt_lang = corpus.tgt_lang;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const SentencePair& p = corpus.pairs[order[i]];
        if (i < n_train)
            result.train.pairs.push_back(p);
        else if (i < n_train + n_valid)
            result.valid.pairs.push_back(p);
        else
            result.test.pairs.push_back(p);
    }
    return result;
}

InstructionRecord to_instruction(const SentencePair& pair, const std::string& system_prompt) {
    if (pair.src.empty() || pair.tgt.empty())
        throw DataError("to_instruction: pair has an empty side");
    return InstructionRecord{system_prompt, pair.src, pair.tgt};
}

std::string synthetic_src_word(std::size_t index) { return "fr" + std::to_string(index); }
std::string synthetic_tgt_word(std::size_t index) { return "bm" + std::to_string(index); }

ParallelCorpus gen_synthetic(std::size_t n, std::uint64_t seed, std::size_t vocab_size) {
    if (n < 1) throw ConfigError("gen_synthetic: n must be >= 1");
    if (vocab_size < 4) throw ConfigError("gen_synthetic: vocab_size must be >= 4");
    RngStream rng(mix_seed(seed, "synthetic-corpus"));
    ParallelCorpus corpus;
    corpus.src_lang = "src";
    corpus.tgt_lang = "tgt";
    corpus.pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = 3 + rng.next_below(6);
        std::vector<std::size_t> words(len);
        for (auto& w : words) w = rng.next_below(vocab_size);
        std::string src, tgt;
        for (std::size_t k = 0; k < len; ++k) {
            if (k) src += ' ';
            src += synthetic_src_word(words[k]);
        }
        for (std::size_t k = len; k-- > 0;) {
            if (k + 1 != len) tgt += ' ';
            tgt += synthetic_tgt_word(vocab_size - 1 - words[k]);
        }
        corpus.pairs.push_back({std::move(src), std::move(tgt)});
    }
    return corpus;
}

std::vector<std::string> load_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

ParallelCorpus load_parallel_text(const std::string& src_path, const std::string& tgt_path,
                                  const std::string& src_lang, const std::string& tgt_lang) {
    std::vector<std::string> src = load_lines(src_path);
    std::vector<std::string> tgt = load_lines(tgt_path);
    if (src.size() != tgt.size())
        throw DataError("line count mismatch: " + src_path + " has " + std::to_string(src.size()) +
                        " lines, " + tgt_path + " has " + std::to_string(tgt.size()));
    ParallelCorpus corpus;
    corpus.src_lang = src_lang;
    corpus.tgt_lang = tgt_lang;
    corpus.pairs.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i)
        corpus.pairs.push_back({std::move(src[i]), std::move(tgt[i])});
    return corpus;
}

ParallelCorpus load_tsv(const std::string& path, const std::string& src_lang,
                        const std::string& tgt_lang) {
    ParallelCorpus corpus;
    corpus.src_lang = src_lang;
    corpus.tgt_lang = tgt_lang;
    std::size_t line_no = 0;
    for (std::string& line : load_lines(path)) {
        ++line_no;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected src<TAB>tgt");
        corpus.pairs.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return corpus;
}

void save_parallel_text(const ParallelCorpus& corpus, const std::string& src_path,
                        const std::string& tgt_path) {
    std::ofstream src(src_path, std::ios::binary), tgt(tgt_path, std::ios::binary);
    if (!src) throw IoError("cannot write file: " + src_path);
    if (!tgt) throw IoError("cannot write file: " + tgt_path);
    for (const SentencePair& p : corpus.pairs) {
        src << p.src << '\n';
        tgt << p.tgt << '\n';
    }
}

void save_tsv(const ParallelCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    for (const SentencePair& p : corpus.pairs) out << p.src << '\t' << p.tgt << '\n';
}

void save_instructions_jsonl(const ParallelCorpus& corpus, const std::string& path,
                             const std::string& system_prompt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    for (const SentencePair& p : corpus.pairs) {
        InstructionRecord rec = to_instruction(p, system_prompt);
        nlohmann::json j{{"system", rec.system}, {"user", rec.user}, {"assistant", rec.assistant}};
        out << j.dump() << '\n';
    }
}

std::string clean_report_to_json(const CleanReport& report) {
    nlohmann::json j;
    j["input_count"] = report.input_count;
    j["output_count"] = report.output_count;
    j["dropped_by_rule"] = report.dropped_by_rule;
    return j.dump(2);
}

}  // namespace lrnmt
