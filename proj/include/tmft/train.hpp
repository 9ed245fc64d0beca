#pragma once

#include "tmft/corpus.hpp"
#include "tmft/encoder.hpp"
#include "tmft/metrics.hpp"
#include "tmft/objectives.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tmft {

enum class Task { STS, WordSim, Paraphrase, Entailment };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

struct TrainConfig {
    Task task = Task::STS;
    double learning_rate = 2e-5;
    double weight_decay = 1e-2;
    double clip_norm = 1.0;
    int batch_size = 32;
    int epochs = 10;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    int cut_layer = 0;

    // STS/Paraphrase/Entailment: batch 32, 10 epochs. WordSim: batch 128, 50 epochs.
    static TrainConfig defaults(Task t, int cut_layer);
    std::string canonical() const;  // stable string for run hashing
};

struct EpochRecord {
    double train_loss = 0.0;
    double val_metric = 0.0;
};

struct StageHistory {
    std::string stage;  // "sts", "word_sim", "dapt", ...
    int epochs = 0;
    std::vector<EpochRecord> records;
    int best_epoch = -1;   // 0-based, into records
    double best_val = 0.0;
    bool diverged = false;
};

struct TrainedModel {
    TruncatedEncoder encoder;
    WordPieceTokenizer tokenizer;
    std::optional<ParaphraseHead> paraphrase_head;
    std::optional<EntailmentHead> entailment_head;
    std::vector<StageHistory> history;
};

// A flat view over every optimized parameter (encoder tensors plus any head).
struct ParamView {
    double* value;
    double* grad;
    std::size_t n;
    bool decay;
};

std::vector<ParamView> views_of(ParameterStore& params);

class AdamW {
  public:
    AdamW(std::vector<ParamView> views, double lr, double weight_decay);

    void zero_grad();
    void scale_grad(double factor);
    double grad_norm() const;
    void clip_grad(double max_norm);
    void step();

  private:
    std::vector<ParamView> views_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, wd_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
};

// Uniform training example: two texts (or words) and a target. For STS the
// target is the raw gold score in [0,5]; for WordSim the normalized score;
// for classification the integer label.
struct Example {
    std::string text_a;
    std::string text_b;
    double target = 0.0;
};

std::vector<Example> to_examples(const std::vector<SentencePair>& pairs);
std::vector<Example> to_examples(const std::vector<WordPair>& pairs);

struct ExampleSplits {
    std::vector<Example> train, validation, test;
};

ExampleSplits to_examples(const SplitSet<SentencePair>& s);
ExampleSplits to_examples(const SplitSet<WordPair>& s);

// One TMFT run: AdamW over all retained encoder parameters plus the task
// head, per-step global-norm clipping, per-epoch validation, best-validation
// checkpoint retention. One seed controls every stochastic source of the run.
TrainedModel train(EncoderBundle bundle, const ExampleSplits& data, const TrainConfig& config,
                   std::uint64_t seed);

// Stage 1: word similarity at config.cut_layer with WordSim hyperparameters;
// stage 2 continues from the stage-1 best weights on STS at the same layer.
TrainedModel chain_word_sim_then_sts(EncoderBundle bundle, const ExampleSplits& word_data,
                                     const ExampleSplits& sts_data,
                                     const TrainConfig& sts_config,
                                     const TrainConfig& word_config, std::uint64_t seed);

EvalReport evaluate_sts(const TrainedModel& model, const std::vector<Example>& split);
// Paraphrase: cosine scores thresholded, threshold fitted on the validation
// split. Entailment: macro-F1 of argmax predictions.
EvalReport evaluate_classification(const TrainedModel& model, Task task,
                                   const std::vector<Example>& split,
                                   const std::vector<Example>& validation);

std::string history_json(const std::vector<StageHistory>& history);

}  // namespace tmft
