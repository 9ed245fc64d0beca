#include "tmft/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace tmft {

namespace {

bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

std::vector<std::string> basic_tokenize(const std::string& text, bool lower) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c) || std::iscntrl(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, static_cast<char>(c));
        } else {
            cur += static_cast<char>(lower && c < 0x80 ? std::tolower(c) : c);
        }
    }
    flush();
    return words;
}

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, bool lower_case)
    : vocab_(std::move(vocab)), lower_case_(lower_case) {
    for (int i = 0; i < static_cast<int>(vocab_.size()); ++i) {
        if (!index_.emplace(vocab_[i], i).second)
            throw DataError("duplicate vocab entry: " + vocab_[i]);
    }
    auto find = [&](const char* tok) {
        auto it = index_.find(tok);
        if (it == index_.end()) throw DataError(std::string("vocab missing ") + tok);
        return it->second;
    };
    pad_id_ = find("[PAD]");
    cls_id_ = find("[CLS]");
    sep_id_ = find("[SEP]");
    unk_id_ = find("[UNK]");
    mask_id_ = find("[MASK]");
}

WordPieceTokenizer WordPieceTokenizer::from_file(const fs::path& vocab_file, bool lower_case) {
    std::ifstream in(vocab_file);
    if (!in) throw DataError("cannot open vocab file: " + vocab_file.string());
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) vocab.push_back(line);
    }
    return WordPieceTokenizer(std::move(vocab), lower_case);
}

void WordPieceTokenizer::save(const fs::path& vocab_file) const {
    std::ostringstream ss;
    for (const auto& t : vocab_) ss << t << "\n";
    atomic_write_file(vocab_file, ss.str());
}

std::vector<std::string> WordPieceTokenizer::wordpiece(const std::string& text) const {
    std::vector<std::string> pieces;
    for (const auto& word : basic_tokenize(text, lower_case_)) {
        if (word.size() > 200) {
            pieces.push_back("[UNK]");
            continue;
        }
        // greedy longest-match-first
        std::vector<std::string> word_pieces;
        std::size_t start = 0;
        bool ok = true;
        while (start < word.size()) {
            std::size_t end = word.size();
            std::string match;
            while (end > start) {
                std::string sub = word.substr(start, end - start);
                if (start > 0) sub = "##" + sub;
                if (index_.count(sub)) {
                    match = sub;
                    break;
                }
                --end;
            }
            if (match.empty()) {
                ok = false;
                break;
            }
            word_pieces.push_back(match);
            start = end;
        }
        if (ok)
            pieces.insert(pieces.end(), word_pieces.begin(), word_pieces.end());
        else
            pieces.push_back("[UNK]");
    }
    return pieces;
}

std::vector<int> WordPieceTokenizer::encode(const std::string& text, int max_len) const {
    std::vector<int> ids;
    ids.push_back(cls_id_);
    for (const auto& p : wordpiece(text)) ids.push_back(index_.at(p));
    ids.push_back(sep_id_);
    if (max_len > 0 && static_cast<int>(ids.size()) > max_len) {
        ids.resize(max_len);
        ids.back() = sep_id_;
        ++truncations_;
    }
    return ids;
}

}  // namespace tmft
