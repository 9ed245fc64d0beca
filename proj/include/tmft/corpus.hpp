#pragma once

#include "tmft/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tmft {

struct SentencePair {
    std::string text_a;
    std::string text_b;
    double gold = 0.0;  // STS: raw score in [0,5]; classification: integer label
    std::string language = "en";
};

enum class WordSource { RG65, WS353, SimLex999, SimVerb3500 };

const char* word_source_name(WordSource s);
WordSource word_source_from_name(const std::string& name);
// Documented raw score range of each source (RG-65 uses [0,4], the rest [0,10]).
std::pair<double, double> word_source_scale(WordSource s);

struct WordPair {
    std::string word_a;
    std::string word_b;
    double score = 0.0;  // normalized to [0,1]
    WordSource source = WordSource::RG65;
};

enum class Provenance { SNLI, MultiNLI, Mixed };

struct SentenceCorpus {
    std::vector<std::string> sentences;
    Provenance provenance = Provenance::Mixed;
};

template <typename T>
struct SplitSet {
    std::vector<T> train;
    std::vector<T> validation;
    std::vector<T> test;
    std::optional<std::uint64_t> split_seed;  // word pairs only
    std::map<std::string, std::string> source_checksums;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

enum class ClassificationTask { MRPC, SICKE };

// Loaders. A "locator" is a directory holding train/validation/test files in
// .tsv or .jsonl form (columns text_a, text_b, gold or label).
SplitSet<SentencePair> load_sts(const fs::path& locator, const std::string& language = "en");
SplitSet<SentencePair> load_pair_classification(ClassificationTask task, const fs::path& locator);

// Pools all sources, rescales each to [0,1] by its documented scale, shuffles
// with split_seed and splits 70:15:15. Duplicate (word_a, word_b, source) rows
// keep the first occurrence.
SplitSet<WordPair> load_word_pairs(const std::map<WordSource, fs::path>& sources,
                                   std::uint64_t split_seed);

// Extracts every premise and hypothesis as its own sentence, removes exact
// string duplicates, keeps first-occurrence order.
SentenceCorpus load_mlm_corpus(const std::vector<fs::path>& sources,
                               Provenance provenance = Provenance::Mixed);

// Canonical JSON-lines serialization plus a manifest (checksums, seed, counts).
void write_splits(const SplitSet<SentencePair>& splits, const fs::path& out_dir);
void write_splits(const SplitSet<WordPair>& splits, const fs::path& out_dir);
void write_corpus(const SentenceCorpus& corpus, const fs::path& out_file);

int sicke_label(const std::string& name);  // entailment→0, neutral→1, contradiction→2

}  // namespace tmft
