#pragma once

#include "tmft/dapt.hpp"
#include "tmft/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tmft {

enum class Stage { None, WordSim, Dapt };
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// One (layer, seed) fine-tuning run. metric is Spearman for STS/WordSim and
// F1 for classification; metric2 is Pearson where applicable.
struct LayerResult {
    int layer = 0;
    std::uint64_t seed = 0;
    double val_metric = 0.0;
    double val_metric2 = 0.0;
    double test_metric = 0.0;
    double test_metric2 = 0.0;
    std::size_t param_count = 0;
    std::string run_id;
    bool failed = false;
    std::string error;
};

struct LayerAggregate {
    int layer = 0;
    std::size_t param_count = 0;
    int n_seeds = 0;
    double val_mean = 0.0, val_std = 0.0;
    double test_mean = 0.0, test_std = 0.0;
    double val2_mean = 0.0, val2_std = 0.0;
    double test2_mean = 0.0, test2_std = 0.0;
};

struct SweepResult {
    std::string model_id;
    Stage stage = Stage::None;
    std::string metric_name;  // "spearman" or "f1"
    std::string profile;
    std::vector<LayerResult> runs;
    std::vector<LayerAggregate> per_layer;  // successful runs only, sorted by layer
    int best_layer = -1;  // argmax mean validation metric, ties to the lower layer
};

struct SweepConfig {
    TruncationSpec base;  // cut_layer is taken from `layers` per run
    std::vector<int> layers;
    Task task = Task::STS;
    TrainConfig train_template;
    TrainConfig word_template;  // stage 1 hyperparameters for WordSim chaining
    DaptConfig dapt;
    Stage stage = Stage::None;
    std::vector<std::uint64_t> seeds = {0, 1};
    fs::path out_dir;
    fs::path checkpoint_root;
    int workers = 1;
    std::string profile = "paper";
    bool save_checkpoints = false;
    // Test hook: stop after this many newly executed runs (simulates a kill).
    int abort_after_runs = -1;
};

struct SweepData {
    ExampleSplits task_data;
    std::optional<ExampleSplits> word_data;
    std::optional<SentenceCorpus> mlm_corpus;
    std::string manifest_hash;  // content hash of all inputs, part of run ids
};

std::string data_manifest_hash(const SweepData& data);

// Trains and evaluates every (layer, seed) pair on a worker pool. Each
// completed run is persisted atomically under out_dir/runs/<run_id>/ and
// skipped on resume. Individual failures are recorded; the sweep throws only
// if every run failed.
SweepResult run_layer_sweep(const SweepConfig& config, const SweepData& data);

const LayerAggregate& select_best(const SweepResult& sweep);

struct ParetoPoint {
    std::string id;  // model+layer
    std::size_t params = 0;
    double test_spearman = 0.0;
};

// Points not dominated by any other (dominated: other has <= params and
// >= spearman, one strict), sorted by parameter count ascending.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

struct DropReport {
    int best_layer = 0;
    double max_mean_test = 0.0;
    int last_layer = 0;
    double last_mean_test = 0.0;
    double gap = 0.0;  // max - last
    std::optional<bool> cka_drop_flag;
};

DropReport drop_report(const SweepResult& sweep,
                       std::optional<bool> cka_drop_flag = std::nullopt);

std::string sweep_result_json(const SweepResult& sweep);
SweepResult sweep_result_from_json(const std::string& text);
std::string drop_report_json(const DropReport& report);

}  // namespace tmft
