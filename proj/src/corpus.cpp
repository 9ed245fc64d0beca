#include "tmft/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

using nlohmann::json;

namespace tmft {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Rows as string->string maps, from a .tsv with a header line or a .jsonl.
std::vector<std::map<std::string, std::string>> read_rows(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open dataset file: " + file.string());
    std::vector<std::map<std::string, std::string>> rows;
    std::string line;
    if (file.extension() == ".jsonl") {
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw DataError(file.string() + " row " + std::to_string(lineno) +
                                ": invalid JSON (" + e.what() + ")");
            }
            std::map<std::string, std::string> row;
            for (auto& [k, v] : j.items()) {
                if (v.is_string())
                    row[k] = v.get<std::string>();
                else
                    row[k] = v.dump();
            }
            rows.push_back(std::move(row));
        }
    } else {
        if (!std::getline(in, line)) throw DataError("empty dataset file: " + file.string());
        auto header = split_tabs(line);
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto fields = split_tabs(line);
            if (fields.size() != header.size())
                throw DataError(file.string() + " row " + std::to_string(lineno) +
                                ": expected " + std::to_string(header.size()) + " columns, got " +
                                std::to_string(fields.size()));
            std::map<std::string, std::string> row;
            for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields[i];
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

const std::string& need(const std::map<std::string, std::string>& row, const std::string& key,
                        const fs::path& file, std::size_t idx) {
    auto it = row.find(key);
    if (it == row.end())
        throw DataError(file.string() + " row " + std::to_string(idx) + ": missing column '" +
                        key + "'");
    return it->second;
}

double parse_real(const std::string& s, const fs::path& file, std::size_t idx) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(file.string() + " row " + std::to_string(idx) + ": not a number: '" + s +
                        "'");
    }
}

fs::path find_split_file(const fs::path& dir, const std::string& stem) {
    for (const char* ext : {".tsv", ".jsonl"}) {
        fs::path p = dir / (stem + ext);
        if (fs::exists(p)) return p;
    }
    throw ConfigError("missing split '" + stem + "' under " + dir.string());
}

enum class PairKind { Sts, Mrpc, SickE };

std::vector<SentencePair> load_pairs_file(const fs::path& file, PairKind kind,
                                          const std::string& default_lang) {
    auto rows = read_rows(file);
    std::vector<SentencePair> out;
    out.reserve(rows.size());
    std::size_t idx = 0;
    for (const auto& row : rows) {
        ++idx;
        SentencePair p;
        p.text_a = need(row, "text_a", file, idx);
        p.text_b = need(row, "text_b", file, idx);
        if (p.text_a.empty() || p.text_b.empty())
            throw DataError(file.string() + " row " + std::to_string(idx) + ": empty sentence");
        if (auto it = row.find("language"); it != row.end())
            p.language = it->second;
        else
            p.language = default_lang;
        if (kind == PairKind::Sts) {
            p.gold = parse_real(need(row, "gold", file, idx), file, idx);
            if (p.gold < 0.0 || p.gold > 5.0)
                throw DataError(file.string() + " row " + std::to_string(idx) +
                                ": gold score out of [0,5]: " + std::to_string(p.gold));
        } else {
            const std::string& raw = need(row, "label", file, idx);
            if (kind == PairKind::SickE && !raw.empty() && !std::isdigit((unsigned char)raw[0])) {
                p.gold = sicke_label(raw);
            } else {
                p.gold = parse_real(raw, file, idx);
            }
            int label = static_cast<int>(p.gold);
            int n_labels = kind == PairKind::Mrpc ? 2 : 3;
            if (p.gold != label || label < 0 || label >= n_labels)
                throw DataError(file.string() + " row " + std::to_string(idx) +
                                ": label outside the task's label set: " + raw);
        }
        out.push_back(std::move(p));
    }
    return out;
}

template <typename T>
SplitSet<T> load_official_splits(const fs::path& locator, PairKind kind,
                                 const std::string& lang) {
    if (!fs::is_directory(locator))
        throw ConfigError("dataset locator is not a directory: " + locator.string());
    SplitSet<T> s;
    for (auto [stem, dest] : {std::pair{std::string("train"), &s.train},
                              {std::string("validation"), &s.validation},
                              {std::string("test"), &s.test}}) {
        fs::path f = find_split_file(locator, stem);
        *dest = load_pairs_file(f, kind, lang);
        s.source_checksums[stem] = file_checksum(f);
    }
    return s;
}

json pair_to_json(const SentencePair& p) {
    return json{{"text_a", p.text_a}, {"text_b", p.text_b}, {"gold", p.gold},
                {"language", p.language}};
}

json pair_to_json(const WordPair& p) {
    return json{{"word_a", p.word_a}, {"word_b", p.word_b}, {"score", p.score},
                {"source", word_source_name(p.source)}};
}

template <typename T>
void write_splits_impl(const SplitSet<T>& splits, const fs::path& out_dir) {
    json manifest;
    manifest["source_checksums"] = splits.source_checksums;
    if (splits.split_seed) manifest["split_seed"] = *splits.split_seed;
    for (auto [name, part] : {std::pair{std::string("train"), &splits.train},
                              {std::string("validation"), &splits.validation},
                              {std::string("test"), &splits.test}}) {
        std::ostringstream ss;
        for (const auto& p : *part) ss << pair_to_json(p).dump() << "\n";
        atomic_write_file(out_dir / (name + ".jsonl"), ss.str());
        manifest["counts"][name] = part->size();
    }
    atomic_write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

const char* word_source_name(WordSource s) {
    switch (s) {
        case WordSource::RG65: return "RG65";
        case WordSource::WS353: return "WS353";
        case WordSource::SimLex999: return "SimLex999";
        case WordSource::SimVerb3500: return "SimVerb3500";
    }
    return "?";
}

WordSource word_source_from_name(const std::string& name) {
    for (auto s : {WordSource::RG65, WordSource::WS353, WordSource::SimLex999,
                   WordSource::SimVerb3500})
        if (name == word_source_name(s)) return s;
    throw ConfigError("unknown word-similarity source: " + name);
}

std::pair<double, double> word_source_scale(WordSource s) {
    return s == WordSource::RG65 ? std::pair{0.0, 4.0} : std::pair{0.0, 10.0};
}

int sicke_label(const std::string& name) {
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower((unsigned char)c));
    if (lower == "entailment" || lower == "entail") return 0;
    if (lower == "neutral") return 1;
    if (lower == "contradiction" || lower == "contradict") return 2;
    throw DataError("unknown SICK-E label: " + name);
}

SplitSet<SentencePair> load_sts(const fs::path& locator, const std::string& language) {
    return load_official_splits<SentencePair>(locator, PairKind::Sts, language);
}

SplitSet<SentencePair> load_pair_classification(ClassificationTask task, const fs::path& locator) {
    return load_official_splits<SentencePair>(
        locator, task == ClassificationTask::MRPC ? PairKind::Mrpc : PairKind::SickE, "en");
}

SplitSet<WordPair> load_word_pairs(const std::map<WordSource, fs::path>& sources,
                                   std::uint64_t split_seed) {
    std::vector<WordPair> pool;
    std::map<std::string, std::string> checksums;
    for (const auto& [source, file] : sources) {
        auto rows = read_rows(file);
        auto [lo, hi] = word_source_scale(source);
        std::set<std::pair<std::string, std::string>> seen;
        std::size_t idx = 0;
        for (const auto& row : rows) {
            ++idx;
            WordPair p;
            p.word_a = need(row, "word_a", file, idx);
            p.word_b = need(row, "word_b", file, idx);
            if (p.word_a.empty() || p.word_b.empty())
                throw DataError(file.string() + " row " + std::to_string(idx) + ": empty word");
            double raw = parse_real(need(row, "raw_score", file, idx), file, idx);
            if (raw < lo || raw > hi)
                throw DataError(file.string() + " row " + std::to_string(idx) +
                                ": score outside the source scale [" + std::to_string(lo) + "," +
                                std::to_string(hi) + "]: " + std::to_string(raw));
            p.score = (raw - lo) / (hi - lo);
            p.source = source;
            if (!seen.insert({p.word_a, p.word_b}).second) {
                std::cerr << "warning: duplicate pair (" << p.word_a << ", " << p.word_b
                          << ") in " << word_source_name(source) << ", keeping first\n";
                continue;
            }
            pool.push_back(std::move(p));
        }
        checksums[word_source_name(source)] = file_checksum(file);
    }
    if (pool.empty()) throw DataError("no word pairs loaded");

    Rng rng(split_seed);
    std::shuffle(pool.begin(), pool.end(), rng);

    SplitSet<WordPair> s;
    s.split_seed = split_seed;
    s.source_checksums = std::move(checksums);
    std::size_t n = pool.size();
    std::size_t n_train = static_cast<std::size_t>(std::lround(0.70 * n));
    std::size_t n_val = static_cast<std::size_t>(std::lround(0.15 * n));
    s.train.assign(pool.begin(), pool.begin() + n_train);
    s.validation.assign(pool.begin() + n_train, pool.begin() + n_train + n_val);
    s.test.assign(pool.begin() + n_train + n_val, pool.end());
    return s;
}

SentenceCorpus load_mlm_corpus(const std::vector<fs::path>& sources, Provenance provenance) {
    SentenceCorpus corpus;
    corpus.provenance = provenance;
    std::set<std::string> seen;
    for (const auto& file : sources) {
        auto rows = read_rows(file);
        std::size_t idx = 0;
        for (const auto& row : rows) {
            ++idx;
            for (const char* key : {"premise", "hypothesis"}) {
                auto it = row.find(key);
                if (it == row.end())
                    throw DataError(file.string() + " row " + std::to_string(idx) +
                                    ": missing column '" + key + "'");
                if (it->second.empty()) continue;
                if (seen.insert(it->second).second) corpus.sentences.push_back(it->second);
            }
        }
    }
    if (corpus.sentences.empty()) throw DataError("MLM corpus is empty");
    return corpus;
}

void write_splits(const SplitSet<SentencePair>& splits, const fs::path& out_dir) {
    write_splits_impl(splits, out_dir);
}

void write_splits(const SplitSet<WordPair>& splits, const fs::path& out_dir) {
    write_splits_impl(splits, out_dir);
}

void write_corpus(const SentenceCorpus& corpus, const fs::path& out_file) {
    std::ostringstream ss;
    for (const auto& s : corpus.sentences) ss << json{{"sentence", s}}.dump() << "\n";
    atomic_write_file(out_file, ss.str());
}

}  // namespace tmft
