#include "lrnmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lrnmt/common.hpp"
#include "lrnmt/text.hpp"
#include "lrnmt/utf8.hpp"

namespace lrnmt {

namespace {

using SymbolPair = std::pair<std::string, std::string>;

// Merges non-overlapping occurrences of (x, y) left to right.
void merge_in_word(std::vector<std::string>& symbols, const SymbolPair& pair) {
    std::vector<std::string> out;
    out.reserve(symbols.size());
    std::size_t i = 0;
    while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
            out.push_back(symbols[i] + symbols[i + 1]);
            i += 2;
        } else {
            out.push_back(std::move(symbols[i]));
            ++i;
        }
    }
    symbols = std::move(out);
}

}  // namespace

BpeModel learn_bpe(const ParallelCorpus& train, std::size_t num_merges) {
    if (train.pairs.empty()) throw DataError("learn_bpe: empty training corpus");

    // Word frequency table over the concatenation of both sides.
    std::map<std::string, long long> word_freq;
    for (const SentencePair& p : train.pairs) {
        for (const std::string& w : split_whitespace(p.src)) ++word_freq[w];
        for (const std::string& w : split_whitespace(p.tgt)) ++word_freq[w];
    }
    if (word_freq.empty()) throw DataError("learn_bpe: corpus contains no words");

    std::vector<std::vector<std::string>> words;
    std::vector<long long> freqs;
    words.reserve(word_freq.size());
    for (const auto& [word, freq] : word_freq) {
        words.push_back(utf8_chars(word));
        freqs.push_back(freq);
    }

    // Ordered pair statistics; the in-order scan below makes the
    // lexicographic tie-break implicit.
    std::map<SymbolPair, long long> counts;
    std::map<SymbolPair, std::set<std::size_t>> where;

    auto add_word_stats = [&](std::size_t wi, long long sign) {
        const auto& syms = words[wi];
        const long long f = sign * freqs[wi];
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
            SymbolPair p{syms[i], syms[i + 1]};
            long long& c = counts[p];
            c += f;
            if (c <= 0) {
                counts.erase(p);
                where[p].erase(wi);
                if (where[p].empty()) where.erase(p);
            } else if (sign > 0) {
                where[p].insert(wi);
            }
        }
        if (sign < 0) {
            // Remove the word from the index of every pair it used to contain.
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                SymbolPair p{syms[i], syms[i + 1]};
                auto it = where.find(p);
                if (it != where.end()) {
                    it->second.erase(wi);
                    if (it->second.empty()) where.erase(it);
                }
            }
        }
    };

    for (std::size_t wi = 0; wi < words.size(); ++wi) add_word_stats(wi, +1);

    BpeModel model;
    model.num_merges = num_merges;
    for (std::size_t m = 0; m < num_merges; ++m) {
        const SymbolPair* best = nullptr;
        long long best_count = 1;  // pairs seen once are never merged
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {
                best_count = count;
                best = &pair;
            }
        }
        if (!best) break;
        const SymbolPair merge = *best;
        model.merges.push_back(merge);

        const std::set<std::size_t> touched = where[merge];
        for (std::size_t wi : touched) {
            add_word_stats(wi, -1);
            merge_in_word(words[wi], merge);
            add_word_stats(wi, +1);
        }
    }
    return model;
}

std::vector<std::string> segment_word(const BpeModel& model, const std::string& word) {
    std::vector<std::string> symbols = utf8_chars(word);
    for (const auto& merge : model.merges) {
        if (symbols.size() < 2) break;
        merge_in_word(symbols, merge);
    }
    return symbols;
}

std::vector<std::string> apply_bpe(const BpeModel& model, const std::string& sentence) {
    std::vector<std::string> tokens;
    for (const std::string& word : split_whitespace(sentence)) {
        std::vector<std::string> parts = segment_word(model, word);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (i + 1 < parts.size())
                tokens.push_back(parts[i] + BpeModel::kContinuation);
            else
                tokens.push_back(parts[i]);
        }
    }
    return tokens;
}

std::string decode_bpe(const std::vector<std::string>& tokens) {
    std::string out;
    std::string word;
    for (const std::string& tok : tokens) {
        if (tok.size() >= 2 && tok.compare(tok.size() - 2, 2, BpeModel::kContinuation) == 0) {
            word += tok.substr(0, tok.size() - 2);
        } else {
            word += tok;
            if (!out.empty()) out += ' ';
            out += word;
            word.clear();
        }
    }
    if (!word.empty()) {
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (const char* tok : {"<pad>", "<unk>", "<bos>", "<eos>"}) {
        token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
        id_to_token_.emplace_back(tok);
    }
}

void Vocabulary::add_token(const std::string& token) {
    if (token_to_id_.count(token)) throw DataError("vocabulary already contains: " + token);
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw DataError("token id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(id_of(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (int id : ids) tokens.push_back(token_of(id));
    return tokens;
}

std::string Vocabulary::content_hash() const {
    Sha256 h;
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        std::string line = id_to_token_[i] + '\t' + std::to_string(i) + '\n';
        h.update(line.data(), line.size());
    }
    return h.hex_digest();
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    Vocabulary vocab;
    std::string line;
    std::size_t expect = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw DataError(path + ": expected token<TAB>id");
        const std::string token = line.substr(0, tab);
        const long id = std::stol(line.substr(tab + 1));
        if (static_cast<std::size_t>(id) != expect)
            throw DataError(path + ": ids must be dense and ascending, got " + std::to_string(id));
        if (expect < 4) {
            if (token != vocab.token_of(static_cast<int>(expect)))
                throw DataError(path + ": special token mismatch at id " + std::to_string(expect));
        } else {
            vocab.add_token(token);
        }
        ++expect;
    }
    if (expect < 4) throw DataError(path + ": missing special tokens");
    return vocab;
}

Vocabulary build_vocab(const BpeModel& model, const ParallelCorpus& train) {
    std::map<std::string, long long> freq;
    for (const SentencePair& p : train.pairs) {
        for (const std::string& tok : apply_bpe(model, p.src)) ++freq[tok];
        for (const std::string& tok : apply_bpe(model, p.tgt)) ++freq[tok];
    }
    std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary vocab;
    for (const auto& [token, count] : items) vocab.add_token(token);
    return vocab;
}

void save_bpe(const BpeModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << "#bpe-v1 " << model.num_merges << '\n';
    for (const auto& [left, right] : model.merges) out << left << ' ' << right << '\n';
}

BpeModel load_bpe(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty merge file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    BpeModel model;
    std::istringstream header(line);
    std::string tag;
    header >> tag >> model.num_merges;
    if (tag != "#bpe-v1") throw DataError(path + ": missing #bpe-v1 header");
    std::set<SymbolPair> seen;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t sp = line.find(' ');
        if (sp == std::string::npos) throw DataError(path + ": expected 'left right' merge line");
        SymbolPair merge{line.substr(0, sp), line.substr(sp + 1)};
        if (!seen.insert(merge).second) throw DataError(path + ": duplicate merge pair");
        model.merges.push_back(std::move(merge));
    }
    if (model.merges.size() > model.num_merges)
        throw DataError(path + ": more merges than the header budget");
    return model;
}

}  // namespace lrnmt
