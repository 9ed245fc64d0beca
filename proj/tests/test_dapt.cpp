#include "tmft/dapt.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>

using namespace tmft;

namespace {

ModelConfig tiny_config(int layers = 1) {
    ModelConfig c;
    c.model_id = "toy";
    c.vocab_size = 36;
    c.embedding_size = 8;
    c.hidden_size = 8;
    c.num_layers = layers;
    c.num_heads = 2;
    c.intermediate_size = 16;
    c.max_position = 24;
    c.dropout = 0.1;
    c.attention_dropout = 0.1;
    return c;
}

EncoderBundle tiny_bundle(std::uint64_t seed, int layers = 1) {
    ModelConfig cfg = tiny_config(layers);
    TruncatedEncoder enc(cfg, cfg.num_layers);
    enc.random_initialize(seed);
    std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    for (char c = 'a'; c <= 'z' && static_cast<int>(vocab.size()) < cfg.vocab_size; ++c)
        vocab.emplace_back(1, c);
    while (static_cast<int>(vocab.size()) < cfg.vocab_size)
        vocab.push_back("x" + std::to_string(vocab.size()));
    return EncoderBundle{std::move(enc), WordPieceTokenizer(std::move(vocab), true)};
}

SentenceCorpus tiny_corpus(int n) {
    SentenceCorpus corpus;
    for (int i = 0; i < n; ++i) {
        std::string s;
        for (int j = 0; j < 4; ++j) {
            if (j) s += ' ';
            s += static_cast<char>('a' + (i * 3 + j * 7) % 26);
        }
        corpus.sentences.push_back(s);
    }
    return corpus;
}

}  // namespace

TEST_CASE("masking rate is 0.15 +- 0.02 over 10,000 tokens") {
    auto bundle = tiny_bundle(1);
    std::vector<int> ids;
    ids.push_back(bundle.tokenizer.cls_id());
    Rng token_rng(5);
    while (ids.size() < 10001) ids.push_back(5 + static_cast<int>(token_rng() % 26));
    ids.push_back(bundle.tokenizer.sep_id());

    auto masked = mask_tokens(ids, 0.15, /*seed=*/42, bundle.tokenizer);
    double rate = static_cast<double>(masked.n_selected) / 10001.0;
    CHECK(rate > 0.13);
    CHECK(rate < 0.17);
}

TEST_CASE("corruption respects the 80/10/10 split and label contract") {
    auto bundle = tiny_bundle(1);
    std::vector<int> ids(50001, 7);
    ids[0] = bundle.tokenizer.cls_id();
    ids.back() = bundle.tokenizer.sep_id();
    auto masked = mask_tokens(ids, 0.5, /*seed=*/3, bundle.tokenizer);

    int n_mask = 0, n_keep = 0, n_random = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (masked.labels[i] == kIgnoreLabel) {
            CHECK(masked.corrupted[i] == ids[i]);  // untouched positions
            continue;
        }
        CHECK(masked.labels[i] == ids[i]);  // labels carry the original id
        if (masked.corrupted[i] == bundle.tokenizer.mask_id())
            ++n_mask;
        else if (masked.corrupted[i] == ids[i])
            ++n_keep;
        else
            ++n_random;
    }
    double total = n_mask + n_keep + n_random;
    CHECK(n_mask / total == doctest::Approx(0.8).epsilon(0.05));
    // "keep" includes the 10% random draws that happen to hit the original id
    CHECK(n_keep / total == doctest::Approx(0.1).epsilon(0.15));
    CHECK(n_random / total == doctest::Approx(0.1).epsilon(0.1));

    // specials are never selected
    CHECK(masked.labels.front() == kIgnoreLabel);
    CHECK(masked.labels.back() == kIgnoreLabel);
    CHECK(masked.corrupted.front() == bundle.tokenizer.cls_id());
}

TEST_CASE("mask probability edge cases") {
    auto bundle = tiny_bundle(1);
    std::vector<int> ids = {bundle.tokenizer.cls_id(), 7, 8, bundle.tokenizer.sep_id()};
    auto none = mask_tokens(ids, 0.0, /*seed=*/1, bundle.tokenizer);
    CHECK(none.n_selected == 0);
    CHECK(none.corrupted == ids);
    CHECK_THROWS_AS(mask_tokens(ids, 1.0, 1, bundle.tokenizer), ConfigError);
    CHECK_THROWS_AS(mask_tokens(ids, -0.1, 1, bundle.tokenizer), ConfigError);
}

TEST_CASE("DAPT requires the full-depth encoder") {
    ModelConfig cfg = tiny_config(2);
    TruncatedEncoder enc(cfg, 1);
    enc.random_initialize(1);
    auto donor = tiny_bundle(1, 2);
    EncoderBundle bundle{std::move(enc), std::move(donor.tokenizer)};
    DaptConfig dc;
    dc.epochs = 1;
    CHECK_THROWS_WITH_AS(dapt_pretrain(std::move(bundle), tiny_corpus(4), dc, 1),
                         doctest::Contains("full"), ConfigError);
}

TEST_CASE("DAPT smoke test: MLM loss decreases") {
    DaptConfig dc;
    dc.batch_size = 8;
    dc.grad_accum_steps = 2;
    dc.epochs = 4;
    dc.learning_rate = 1e-3;
    auto result = dapt_pretrain(tiny_bundle(11), tiny_corpus(100), dc, 5);
    REQUIRE(result.history.epoch_mean_loss.size() == 4);
    CHECK_FALSE(result.history.diverged);
    CHECK(result.history.optimizer_steps > 0);
    CHECK(result.history.epoch_mean_loss.back() < result.history.epoch_mean_loss.front());
}

TEST_CASE("gradient accumulation equals one large batch") {
    auto corpus = tiny_corpus(6);
    DaptConfig accum;
    accum.batch_size = 2;
    accum.grad_accum_steps = 3;
    accum.epochs = 2;
    accum.learning_rate = 1e-3;
    DaptConfig big = accum;
    big.batch_size = 6;
    big.grad_accum_steps = 1;

    auto ra = dapt_pretrain(tiny_bundle(8), corpus, accum, 33);
    auto rb = dapt_pretrain(tiny_bundle(8), corpus, big, 33);
    CHECK(ra.history.optimizer_steps == rb.history.optimizer_steps);
    const auto& ta = ra.bundle.encoder.params().tensors();
    const auto& tb = rb.bundle.encoder.params().tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CAPTURE(ta[i].name);
        CHECK((ta[i].value - tb[i].value).cwiseAbs().maxCoeff() < 1e-5);
    }
    CHECK(ra.history.epoch_mean_loss[0] ==
          doctest::Approx(rb.history.epoch_mean_loss[0]).epsilon(1e-10));
}

TEST_CASE("DAPT is deterministic per seed") {
    DaptConfig dc;
    dc.batch_size = 3;
    dc.epochs = 1;
    auto r1 = dapt_pretrain(tiny_bundle(2), tiny_corpus(6), dc, 77);
    auto r2 = dapt_pretrain(tiny_bundle(2), tiny_corpus(6), dc, 77);
    auto r3 = dapt_pretrain(tiny_bundle(2), tiny_corpus(6), dc, 78);
    CHECK(r1.history.epoch_mean_loss == r2.history.epoch_mean_loss);
    CHECK(r1.history.epoch_mean_loss != r3.history.epoch_mean_loss);
}

TEST_CASE("adapted checkpoint records the corpus and config") {
    DaptConfig dc;
    dc.epochs = 1;
    auto corpus = tiny_corpus(4);
    auto result = dapt_pretrain(tiny_bundle(3), corpus, dc, 1);
    auto dir = fs::temp_directory_path() / "tmft_dapt_ckpt";
    fs::remove_all(dir);
    save_dapt_checkpoint(result, corpus, dc, dir);

    auto manifest = nlohmann::json::parse(read_file(dir / "dapt_manifest.json"));
    CHECK(manifest["corpus_sentences"] == corpus.sentences.size());
    CHECK(manifest["config"]["mask_probability"] == 0.15);
    CHECK(manifest["epoch_mean_loss"].size() == 1);
    // reloads as a regular encoder checkpoint, truncatable below the cut
    auto back = load_bundle(dir, 1);
    CHECK(back.encoder.cut_layer() == 1);
}
