#include "tmft/tokenizer.hpp"

#include <doctest.h>

using namespace tmft;

namespace {

WordPieceTokenizer make_tok(bool lower = true) {
    return WordPieceTokenizer({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "the", "cat", "un",
                               "##able", "##s", "able", ",", ".", "run", "##ning"},
                              lower);
}

}  // namespace

TEST_CASE("greedy longest-match wordpiece") {
    auto tok = make_tok();
    CHECK(tok.wordpiece("the cat") == std::vector<std::string>{"the", "cat"});
    CHECK(tok.wordpiece("cats") == std::vector<std::string>{"cat", "##s"});
    CHECK(tok.wordpiece("unable") == std::vector<std::string>{"un", "##able"});
    // "able" alone prefers the whole-word entry over un-prefixed pieces
    CHECK(tok.wordpiece("able") == std::vector<std::string>{"able"});
    CHECK(tok.wordpiece("running") == std::vector<std::string>{"run", "##ning"});
}

TEST_CASE("unknown words collapse to [UNK] whole") {
    auto tok = make_tok();
    CHECK(tok.wordpiece("xyz") == std::vector<std::string>{"[UNK]"});
    // a partial match that dead-ends still yields a single [UNK]
    CHECK(tok.wordpiece("catzz") == std::vector<std::string>{"[UNK]"});
}

TEST_CASE("punctuation splits and lowercasing") {
    auto tok = make_tok();
    CHECK(tok.wordpiece("The cat, runs.") ==
          std::vector<std::string>{"the", "cat", ",", "run", "##s", "."});
    auto cased = make_tok(false);
    CHECK(cased.wordpiece("The") == std::vector<std::string>{"[UNK]"});
}

TEST_CASE("encode wraps with [CLS]/[SEP] and truncates") {
    auto tok = make_tok();
    auto ids = tok.encode("the cat");
    REQUIRE(ids.size() == 4);
    CHECK(ids.front() == tok.cls_id());
    CHECK(ids.back() == tok.sep_id());

    CHECK(tok.truncation_count() == 0);
    auto cut = tok.encode("the cat the cat the cat", 4);
    CHECK(cut.size() == 4);
    CHECK(cut.front() == tok.cls_id());
    CHECK(cut.back() == tok.sep_id());
    CHECK(tok.truncation_count() == 1);
}

TEST_CASE("special ids") {
    auto tok = make_tok();
    CHECK(tok.is_special(tok.pad_id()));
    CHECK(tok.is_special(tok.cls_id()));
    CHECK(tok.is_special(tok.sep_id()));
    // [MASK] and [UNK] are maskable content positions, not structural specials
    CHECK_FALSE(tok.is_special(tok.mask_id()));
    CHECK_FALSE(tok.is_special(tok.unk_id()));
}

TEST_CASE("vocab save/load round trip") {
    auto tok = make_tok();
    auto file = fs::temp_directory_path() / "tmft_vocab_test.txt";
    tok.save(file);
    auto back = WordPieceTokenizer::from_file(file, true);
    CHECK(back.vocab_size() == tok.vocab_size());
    CHECK(back.encode("the cats, unable.") == tok.encode("the cats, unable."));
}

TEST_CASE("vocab validation") {
    CHECK_THROWS_AS(WordPieceTokenizer({"[PAD]", "[PAD]"}, true), DataError);
    CHECK_THROWS_AS(WordPieceTokenizer({"[PAD]", "[CLS]", "[SEP]", "[UNK]"}, true), DataError);
}
