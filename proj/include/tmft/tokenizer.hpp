#pragma once

#include "tmft/common.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace tmft {

// WordPiece over a vocab.txt (one token per line). Basic tokenization splits
// on whitespace and ASCII punctuation; lowercasing is ASCII-only.
class WordPieceTokenizer {
  public:
    WordPieceTokenizer(std::vector<std::string> vocab, bool lower_case);

    static WordPieceTokenizer from_file(const fs::path& vocab_file, bool lower_case);

    // [CLS] pieces... [SEP], truncated to max_len when positive. Increments
    // the truncation counter when a sequence is cut.
    std::vector<int> encode(const std::string& text, int max_len = 0) const;

    std::vector<std::string> wordpiece(const std::string& text) const;

    int vocab_size() const { return static_cast<int>(vocab_.size()); }
    int pad_id() const { return pad_id_; }
    int cls_id() const { return cls_id_; }
    int sep_id() const { return sep_id_; }
    int unk_id() const { return unk_id_; }
    int mask_id() const { return mask_id_; }
    bool is_special(int id) const { return id == pad_id_ || id == cls_id_ || id == sep_id_; }
    const std::string& token(int id) const { return vocab_.at(id); }
    std::uint64_t truncation_count() const { return truncations_; }

    void save(const fs::path& vocab_file) const;

  private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
    bool lower_case_;
    int pad_id_ = -1, cls_id_ = -1, sep_id_ = -1, unk_id_ = -1, mask_id_ = -1;
    mutable std::uint64_t truncations_ = 0;
};

}  // namespace tmft
