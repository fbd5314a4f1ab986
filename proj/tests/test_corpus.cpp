#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "lrnmt/common.hpp"
#include "lrnmt/corpus.hpp"

using namespace lrnmt;

namespace {

ParallelCorpus make_fixture() {
    ParallelCorpus c;
    c.pairs = {
        {"Bonjour , monde", "I ni ce"},
        {"voir https://example.org", "a filɛ"},
        {"looool super", "kosɛbɛ"},
        {"1) Lavez les mains", "I tɛgɛ ko"},
        {"Merci 🙏", "A ni ce"},
        {"Bonjour ,  monde", "I ni ce"},
    };
    return c;
}

std::string temp_path(const std::string& name) {
    return std::string("corpus_test_") + name;
}

}  // namespace

TEST_CASE("clean_pair one-sided enumeration and emoji") {
    CHECK(clean_pair({"1) Lavez les mains", "I tɛgɛ ko"}) ==
          SentencePair{"Lavez les mains", "I tɛgɛ ko"});
    CHECK(clean_pair({"1) Un", "1) Kelen"}) == SentencePair{"1) Un", "1) Kelen"});
    CHECK(clean_pair({"Merci 🙏", "A ni ce"}) == SentencePair{"Merci", "A ni ce"});
    CHECK(clean_pair({"Merci 🙏", "A ni ce 🙏"}) == SentencePair{"Merci 🙏", "A ni ce 🙏"});
}

TEST_CASE("preprocess fixture drops and report") {
    auto [cleaned, report] = preprocess(make_fixture());
    CHECK(cleaned.pairs.size() == 3);
    CHECK(report.input_count == 6);
    CHECK(report.output_count == 3);
    CHECK(report.dropped("link") == 1);
    CHECK(report.dropped("repetition") == 1);
    CHECK(report.dropped("duplicate") == 1);
    CHECK(report.dropped("empty") == 0);
    CHECK(report.dropped("encoding") == 0);

    std::size_t total_dropped = 0;
    for (const auto& [rule, n] : report.dropped_by_rule) total_dropped += n;
    CHECK(report.output_count == report.input_count - total_dropped);

    REQUIRE(cleaned.pairs.size() == 3);
    CHECK(cleaned.pairs[0] == SentencePair{"Bonjour, monde", "I ni ce"});
    CHECK(cleaned.pairs[1] == SentencePair{"Lavez les mains", "I tɛgɛ ko"});
    CHECK(cleaned.pairs[2] == SentencePair{"Merci", "A ni ce"});
}

TEST_CASE("preprocess is idempotent") {
    auto [once, r1] = preprocess(make_fixture());
    auto [twice, r2] = preprocess(once);
    CHECK(once.pairs == twice.pairs);
    for (const auto& [rule, n] : r2.dropped_by_rule) {
        CAPTURE(rule);
        CHECK(n == 0);
    }
}

TEST_CASE("preprocess counts malformed UTF-8 under encoding") {
    ParallelCorpus c;
    c.pairs = {{"bien", "a"}, {std::string("mauvais \xFF\xFE"), "b"}};
    auto [cleaned, report] = preprocess(c);
    CHECK(cleaned.pairs.size() == 1);
    CHECK(report.dropped("encoding") == 1);
}

TEST_CASE("preprocess dedup keeps first occurrence order") {
    ParallelCorpus c;
    c.pairs = {{"c", "3"}, {"a", "1"}, {"c", "3"}, {"b", "2"}, {"a", "1"}};
    auto [cleaned, report] = preprocess(c);
    REQUIRE(cleaned.pairs.size() == 3);
    CHECK(cleaned.pairs[0] == SentencePair{"c", "3"});
    CHECK(cleaned.pairs[1] == SentencePair{"a", "1"});
    CHECK(cleaned.pairs[2] == SentencePair{"b", "2"});
    CHECK(report.dropped("duplicate") == 2);
}

TEST_CASE("split sizes follow the ratios") {
    ParallelCorpus c;
    for (int i = 0; i < 100; ++i) c.pairs.push_back({"s" + std::to_string(i), "t"});
    SplitCorpus s = split(c, 0.8, 0.1, 0.1, 42);
    CHECK(s.train.size() == 80);
    CHECK(s.valid.size() == 10);
    CHECK(s.test.size() == 10);
}

TEST_CASE("split reproduces the full-corpus partition sizes") {
    // 353,629 pairs -> (282,903, 35,363, 35,363). Building the corpus is
    // cheap; the pair text does not matter for sizing.
    ParallelCorpus c;
    c.pairs.resize(353629, {"s", "t"});
    SplitCorpus s = split(c, 0.8, 0.1, 0.1, 7);
    CHECK(s.train.size() == 282903);
    CHECK(s.valid.size() == 35363);
    CHECK(s.test.size() == 35363);
}

TEST_CASE("split is deterministic and a partition") {
    ParallelCorpus c;
    for (int i = 0; i < 10; ++i) c.pairs.push_back({"s" + std::to_string(i), "t" + std::to_string(i)});
    SplitCorpus a = split(c, 0.8, 0.1, 0.1, 5);
    SplitCorpus b = split(c, 0.8, 0.1, 0.1, 5);
    CHECK(a.train.pairs == b.train.pairs);
    CHECK(a.valid.pairs == b.valid.pairs);
    CHECK(a.test.pairs == b.test.pairs);

    std::multiset<std::string> seen;
    for (const ParallelCorpus* part : {&a.train, &a.valid, &a.test})
        for (const SentencePair& p : part->pairs) seen.insert(p.src + '\t' + p.tgt);
    std::multiset<std::string> expected;
    for (const SentencePair& p : c.pairs) expected.insert(p.src + '\t' + p.tgt);
    CHECK(seen == expected);
}

TEST_CASE("split rejects bad ratios and empty corpora") {
    ParallelCorpus c;
    c.pairs = {{"a", "b"}};
    CHECK_THROWS_AS(split(c, 0.8, 0.1, 0.2, 1), ConfigError);
    ParallelCorpus empty;
    CHECK_THROWS_AS(split(empty, 0.8, 0.1, 0.1, 1), DataError);
}

TEST_CASE("to_instruction") {
    InstructionRecord rec = to_instruction({"Bonjour", "I ni sɔgɔma"});
    CHECK(rec.system == "Traduire cette phrase du français en bambara");
    CHECK(rec.user == "Bonjour");
    CHECK(rec.assistant == "I ni sɔgɔma");

    CHECK(to_instruction({"a", "b"}, "X").system == "X");
    CHECK_THROWS_AS(to_instruction({"", "x"}), DataError);
}

TEST_CASE("gen_synthetic determinism and shape") {
    ParallelCorpus a = gen_synthetic(2, 1, 12);
    ParallelCorpus b = gen_synthetic(2, 1, 12);
    CHECK(a.pairs == b.pairs);
    CHECK(a.pairs.size() == 2);
    CHECK(gen_synthetic(5, 2, 12).pairs != gen_synthetic(5, 3, 12).pairs);
    CHECK_THROWS_AS(gen_synthetic(0, 1, 12), ConfigError);
    CHECK_THROWS_AS(gen_synthetic(1, 1, 3), ConfigError);
}

TEST_CASE("gen_synthetic target is the word-reversed substitution of the source") {
    const std::size_t vocab = 20;
    ParallelCorpus c = gen_synthetic(64, 9, vocab);
    CHECK(c.pairs.size() == 64);
    for (const SentencePair& p : c.pairs) {
        // Invert: reverse target words, map bm<j> back to fr<vocab-1-j>.
        std::vector<std::string> words;
        std::string cur;
        for (char ch : p.tgt) {
            if (ch == ' ') {
                words.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        words.push_back(cur);
        std::string rebuilt;
        for (std::size_t k = words.size(); k-- > 0;) {
            REQUIRE(words[k].substr(0, 2) == "bm");
            std::size_t j = std::stoul(words[k].substr(2));
            if (!rebuilt.empty()) rebuilt += ' ';
            rebuilt += synthetic_src_word(vocab - 1 - j);
        }
        CHECK(rebuilt == p.src);
    }
}

TEST_CASE("parallel text and tsv round trip") {
    ParallelCorpus c;
    c.pairs = {{"un deux", "kelen fila"}, {"trois", "saba"}};
    save_parallel_text(c, temp_path("a.src"), temp_path("a.tgt"));
    ParallelCorpus back = load_parallel_text(temp_path("a.src"), temp_path("a.tgt"));
    CHECK(back.pairs == c.pairs);

    save_tsv(c, temp_path("a.tsv"));
    CHECK(load_tsv(temp_path("a.tsv")).pairs == c.pairs);

    CHECK_THROWS_AS(load_parallel_text("no_such.src", temp_path("a.tgt")), IoError);
    for (const char* f : {"a.src", "a.tgt", "a.tsv"}) std::remove(temp_path(f).c_str());
}

TEST_CASE("misaligned parallel files are rejected") {
    write_text_file(temp_path("b.src"), "un\ndeux\n");
    write_text_file(temp_path("b.tgt"), "kelen\n");
    CHECK_THROWS_AS(load_parallel_text(temp_path("b.src"), temp_path("b.tgt")), DataError);
    std::remove(temp_path("b.src").c_str());
    std::remove(temp_path("b.tgt").c_str());
}

TEST_CASE("instruction export writes one json object per line") {
    ParallelCorpus c;
    c.pairs = {{"Bonjour", "I ni ce"}, {"Merci", "A ni ce"}};
    save_instructions_jsonl(c, temp_path("inst.jsonl"));
    std::vector<std::string> lines = load_lines(temp_path("inst.jsonl"));
    REQUIRE(lines.size() == 2);
    nlohmann::json j = nlohmann::json::parse(lines[0]);
    CHECK(j["system"] == "Traduire cette phrase du français en bambara");
    CHECK(j["user"] == "Bonjour");
    CHECK(j["assistant"] == "I ni ce");
    std::remove(temp_path("inst.jsonl").c_str());
}

TEST_CASE("clean report serializes to json") {
    auto [cleaned, report] = preprocess(make_fixture());
    nlohmann::json j = nlohmann::json::parse(clean_report_to_json(report));
    CHECK(j["input_count"] == 6);
    CHECK(j["output_count"] == 3);
    CHECK(j["dropped_by_rule"]["link"] == 1);
}
