#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrnmt/corpus.hpp"

namespace lrnmt {

// Byte Pair Encoding over whitespace words. Symbols start as UTF-8
// characters; merges concatenate adjacent symbols. Non-final subwords of a
// word carry the "@@" continuation suffix (subword-nmt convention).
struct BpeModel {
    std::vector<std::pair<std::string, std::string>> merges;  // learned order
    std::size_t num_merges = 0;                               // requested budget
    static constexpr const char* kContinuation = "@@";
};

// Shared subword vocabulary with fixed special tokens.
class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    Vocabulary();

    // Tokens beyond the specials, already ordered by id.
    void add_token(const std::string& token);
    int id_of(const std::string& token) const;  // kUnk when absent
    const std::string& token_of(int id) const;
    std::size_t size() const { return id_to_token_.size(); }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    // SHA-256 over "token\tid" lines; stored in checkpoint manifests so a
    // model can refuse a mismatched vocabulary.
    std::string content_hash() const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Greedy most-frequent-pair merging over both sides of the training split.
// Ties break lexicographically on the pair; learning stops early when no
// pair occurs at least twice.
BpeModel learn_bpe(const ParallelCorpus& train, std::size_t num_merges);

std::vector<std::string> segment_word(const BpeModel& model, const std::string& word);
std::vector<std::string> apply_bpe(const BpeModel& model, const std::string& sentence);
std::string decode_bpe(const std::vector<std::string>& tokens);

// Vocabulary = specials + every subword type produced by apply_bpe over the
// training split, ids by descending frequency then lexicographic.
Vocabulary build_vocab(const BpeModel& model, const ParallelCorpus& train);

// Merge file: "#bpe-v1 <num_merges>" header then one "left right" per line.
void save_bpe(const BpeModel& model, const std::string& path);
BpeModel load_bpe(const std::string& path);

}  // namespace lrnmt
