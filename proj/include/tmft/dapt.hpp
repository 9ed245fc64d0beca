#pragma once

#include "tmft/corpus.hpp"
#include "tmft/encoder.hpp"
#include "tmft/train.hpp"

#include <vector>

namespace tmft {

struct DaptConfig {
    int batch_size = 32;
    int grad_accum_steps = 8;
    int epochs = 10;
    double mask_probability = 0.15;
    double learning_rate = 2e-5;
    double weight_decay = 1e-2;
    double clip_norm = 1.0;
};

constexpr int kIgnoreLabel = -1;

struct MaskedSequence {
    std::vector<int> corrupted;
    std::vector<int> labels;  // original id at selected positions, kIgnoreLabel elsewhere
    int n_selected = 0;
};

// Each non-special position is selected with mask_probability; of the
// selected, 80% become [MASK], 10% a uniform random vocabulary token and 10%
// stay unchanged. Labels carry the original ids at selected positions.
MaskedSequence mask_tokens(const std::vector<int>& ids, double mask_probability, Rng& rng,
                           const WordPieceTokenizer& tok);
MaskedSequence mask_tokens(const std::vector<int>& ids, double mask_probability,
                           std::uint64_t seed, const WordPieceTokenizer& tok);

// MLM head over the final layer: transform to embedding width, gelu, layer
// norm, then a decoder tied to the word-embedding table plus an output bias.
struct MlmHead {
    ParameterStore params;
    explicit MlmHead(const ModelConfig& config);
    void random_initialize(std::uint64_t seed);
};

struct DaptHistory {
    std::vector<double> epoch_mean_loss;  // per masked token
    bool diverged = false;
    long optimizer_steps = 0;
};

struct DaptResult {
    EncoderBundle bundle;  // adapted full-depth encoder, head discarded
    DaptHistory history;
};

// MLM on the full (untruncated) encoder with gradient accumulation. The
// gradient is normalized by the number of masked tokens in the effective
// batch, so k accumulated micro-batches step exactly like one large batch.
DaptResult dapt_pretrain(EncoderBundle bundle, const SentenceCorpus& corpus,
                         const DaptConfig& config, std::uint64_t seed);

void save_dapt_checkpoint(const DaptResult& result, const SentenceCorpus& corpus,
                          const DaptConfig& config, const fs::path& dir);

}  // namespace tmft
