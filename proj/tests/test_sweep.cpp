#include "tmft/sweep.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace tmft;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.model_id = "toy";
    c.vocab_size = 36;
    c.embedding_size = 8;
    c.hidden_size = 8;
    c.num_layers = 2;
    c.num_heads = 2;
    c.intermediate_size = 16;
    c.max_position = 16;
    c.dropout = 0.1;
    c.attention_dropout = 0.1;
    return c;
}

// synthetic full-depth checkpoint acting as the "pretrained" base model
fs::path toy_checkpoint() {
    static fs::path dir = [] {
        ModelConfig cfg = tiny_config();
        TruncatedEncoder enc(cfg, cfg.num_layers);
        enc.random_initialize(101);
        std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
        for (char c = 'a'; c <= 'z' && static_cast<int>(vocab.size()) < cfg.vocab_size; ++c)
            vocab.emplace_back(1, c);
        while (static_cast<int>(vocab.size()) < cfg.vocab_size)
            vocab.push_back("x" + std::to_string(vocab.size()));
        WordPieceTokenizer tok(std::move(vocab), true);
        fs::path d = fs::temp_directory_path() / "tmft_sweep_base";
        fs::remove_all(d);
        save_bundle(enc, tok, d, "random");
        return d;
    }();
    return dir;
}

SweepData tiny_data() {
    SweepData data;
    const char* words[] = {"a b", "c d", "e f", "g h", "i j", "k l"};
    for (int i = 0; i < 6; ++i) {
        data.task_data.train.push_back({words[i], words[i], 5.0});
        data.task_data.train.push_back({words[i], words[(i + 1) % 6], 0.0});
    }
    for (int i = 0; i < 3; ++i) {
        data.task_data.validation.push_back({words[i], words[i], 5.0});
        data.task_data.validation.push_back({words[i], "m n", 0.5});
        data.task_data.test.push_back({words[i], words[i], 4.5});
        data.task_data.test.push_back({words[i], "o p", 0.5});
    }
    data.manifest_hash = data_manifest_hash(data);
    return data;
}

SweepConfig tiny_sweep(const fs::path& out_dir) {
    SweepConfig cfg;
    cfg.base = {toy_checkpoint().string(), 0, false, 0};
    cfg.layers = {0, 1};
    cfg.task = Task::STS;
    cfg.train_template = TrainConfig::defaults(Task::STS, 0);
    cfg.train_template.epochs = 2;
    cfg.train_template.batch_size = 4;
    cfg.train_template.learning_rate = 1e-3;
    cfg.seeds = {1, 2};
    cfg.out_dir = out_dir;
    cfg.workers = 2;
    cfg.profile = "desk";
    return cfg;
}

fs::path fresh_out(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "tmft_sweep_test" / name;
    fs::remove_all(dir);
    return dir;
}

bool same_results(const SweepResult& a, const SweepResult& b) {
    if (a.runs.size() != b.runs.size() || a.best_layer != b.best_layer) return false;
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        const auto& x = a.runs[i];
        const auto& y = b.runs[i];
        if (x.run_id != y.run_id || x.layer != y.layer || x.seed != y.seed ||
            x.val_metric != y.val_metric || x.test_metric != y.test_metric)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("stage names round trip") {
    for (Stage s : {Stage::None, Stage::WordSim, Stage::Dapt})
        CHECK(stage_from_name(stage_name(s)) == s);
    CHECK_THROWS_AS(stage_from_name("rtd"), ConfigError);
}

TEST_CASE("pareto front matches brute force on 200 random point sets") {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 200; ++it) {
        int n = 1 + static_cast<int>(rng() % 20);
        std::vector<ParetoPoint> points;
        for (int i = 0; i < n; ++i)
            points.push_back({"p" + std::to_string(i), rng() % 50,
                              static_cast<double>(rng() % 10) / 10.0});
        auto front = pareto_front(points);

        // brute force: p is on the front iff no q dominates it
        std::vector<std::string> expected;
        for (const auto& p : points) {
            bool dominated = false;
            for (const auto& q : points)
                if (q.params <= p.params && q.test_spearman >= p.test_spearman &&
                    (q.params < p.params || q.test_spearman > p.test_spearman))
                    dominated = true;
            if (!dominated) expected.push_back(p.id);
        }
        CHECK(front.size() == expected.size());
        for (const auto& f : front) {
            CHECK(std::find(expected.begin(), expected.end(), f.id) != expected.end());
        }
        // sorted by parameter count
        for (std::size_t i = 1; i < front.size(); ++i)
            CHECK(front[i - 1].params <= front[i].params);
    }
}

TEST_CASE("published best-layer points give the published front") {
    // (model@layer, params, test spearman); last-layer points included where
    // they differ from the best layer
    std::vector<ParetoPoint> points = {
        {"bert_tiny@l2", 4370000, 69.80},       {"bert_mini@l4", 11100000, 75.55},
        {"bert_small@l4", 28500000, 79.13},     {"bert_medium@l8", 41110000, 80.74},
        {"bert_base@l12", 107720000, 82.74},    {"bert_large@l24", 332530000, 85.47},
        {"electra_d_small@l1", 4760000, 68.88}, {"electra_d_small@l12(last)", 13450000, 66.72},
        {"electra_d_base@l3", 45100000, 75.29}, {"electra_d_base@l12(last)", 108890000, 66.82},
        {"electra_d_large@l12", 182940000, 80.90},
        {"electra_d_large@l24(last)", 334090000, 25.84},
        {"electra_g_small@l12", 13450000, 81.55},
        {"electra_g_base@l12", 33310000, 82.57},
        {"electra_g_large@l24", 50740000, 84.63},
    };
    auto front = pareto_front(points);
    auto on_front = [&](const std::string& id) {
        return std::any_of(front.begin(), front.end(),
                           [&](const ParetoPoint& p) { return p.id == id; });
    };
    CHECK(on_front("electra_g_small@l12"));
    CHECK(on_front("electra_g_base@l12"));
    CHECK(on_front("electra_g_large@l24"));
    CHECK(on_front("bert_tiny@l2"));
    CHECK(on_front("bert_mini@l4"));
    CHECK(on_front("bert_large@l24"));
    CHECK_FALSE(on_front("electra_d_base@l12(last)"));
    CHECK(front.size() == 6);
}

TEST_CASE("layer sweep runs, persists, and aggregates") {
    auto out = fresh_out("basic");
    auto cfg = tiny_sweep(out);
    auto data = tiny_data();
    auto sweep = run_layer_sweep(cfg, data);

    CHECK(sweep.runs.size() == 4);
    CHECK(sweep.metric_name == "spearman");
    CHECK(sweep.profile == "desk");
    REQUIRE(sweep.per_layer.size() == 2);
    CHECK(sweep.per_layer[0].layer == 0);
    CHECK(sweep.per_layer[1].layer == 1);

    // aggregates recompute from the raw runs (mean, sample std)
    for (const auto& agg : sweep.per_layer) {
        std::vector<double> vals;
        for (const auto& r : sweep.runs)
            if (r.layer == agg.layer) vals.push_back(r.val_metric);
        REQUIRE(vals.size() == 2);
        double mean = (vals[0] + vals[1]) / 2.0;
        double sd = std::sqrt((vals[0] - mean) * (vals[0] - mean) +
                              (vals[1] - mean) * (vals[1] - mean));  // n-1 = 1
        CHECK(agg.n_seeds == 2);
        CHECK(agg.val_mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(agg.val_std == doctest::Approx(sd).epsilon(1e-12));
    }

    // best layer is the argmax of the mean validation metric
    const auto& best = select_best(sweep);
    for (const auto& agg : sweep.per_layer) CHECK(best.val_mean >= agg.val_mean);

    // persisted layout: out/runs/<id>/{config,history,result}.json
    for (const auto& r : sweep.runs) {
        CHECK(fs::exists(out / "runs" / r.run_id / "config.json"));
        CHECK(fs::exists(out / "runs" / r.run_id / "history.json"));
        CHECK(fs::exists(out / "runs" / r.run_id / "result.json"));
    }

    // distinct run ids per (layer, seed)
    std::set<std::string> ids;
    for (const auto& r : sweep.runs) ids.insert(r.run_id);
    CHECK(ids.size() == 4);

    // serialization round trip
    auto back = sweep_result_from_json(sweep_result_json(sweep));
    CHECK(same_results(sweep, back));
    CHECK(back.per_layer.size() == sweep.per_layer.size());
    CHECK(back.per_layer[0].val_mean == sweep.per_layer[0].val_mean);

    // drop report sees the last layer
    auto rep = drop_report(sweep);
    CHECK(rep.last_layer == 1);
    CHECK(rep.gap == doctest::Approx(rep.max_mean_test - rep.last_mean_test));
}

TEST_CASE("completed runs are not re-executed on resume") {
    auto out = fresh_out("resume");
    auto cfg = tiny_sweep(out);
    auto data = tiny_data();
    auto first = run_layer_sweep(cfg, data);

    // tag one result file; an untouched tag proves the run was not redone
    auto tag_file = out / "runs" / first.runs[0].run_id / "history.json";
    auto stamp_before = fs::last_write_time(tag_file);
    auto second = run_layer_sweep(cfg, data);
    CHECK(fs::last_write_time(tag_file) == stamp_before);
    CHECK(same_results(first, second));
}

TEST_CASE("an interrupted sweep resumes to the identical result") {
    auto out = fresh_out("abort");
    auto cfg = tiny_sweep(out);
    auto data = tiny_data();

    // simulate a kill after 2 of 4 runs
    cfg.abort_after_runs = 2;
    auto partial = run_layer_sweep(cfg, data);
    CHECK(partial.runs.size() >= 2);
    CHECK(partial.runs.size() < 4);

    cfg.abort_after_runs = -1;
    auto resumed = run_layer_sweep(cfg, data);
    CHECK(resumed.runs.size() == 4);

    auto uninterrupted = run_layer_sweep(tiny_sweep(fresh_out("abort_ref")), data);
    CHECK(same_results(resumed, uninterrupted));
    for (std::size_t i = 0; i < resumed.per_layer.size(); ++i) {
        CHECK(resumed.per_layer[i].val_mean == uninterrupted.per_layer[i].val_mean);
        CHECK(resumed.per_layer[i].test_mean == uninterrupted.per_layer[i].test_mean);
    }
}

TEST_CASE("run ids depend on data and configuration") {
    auto data1 = tiny_data();
    auto data2 = tiny_data();
    data2.task_data.train[0].target = 4.0;
    data2.manifest_hash = data_manifest_hash(data2);
    CHECK(data1.manifest_hash != data2.manifest_hash);
}

TEST_CASE("sweep input validation") {
    auto cfg = tiny_sweep(fresh_out("invalid"));
    auto data = tiny_data();
    cfg.layers.clear();
    CHECK_THROWS_AS(run_layer_sweep(cfg, data), ConfigError);
    cfg = tiny_sweep(fresh_out("invalid2"));
    cfg.seeds.clear();
    CHECK_THROWS_AS(run_layer_sweep(cfg, data), ConfigError);
    cfg = tiny_sweep(fresh_out("invalid3"));
    cfg.stage = Stage::Dapt;  // no MLM corpus provided
    CHECK_THROWS_AS(run_layer_sweep(cfg, data), ConfigError);
}

TEST_CASE("every run failing raises, partial failure does not") {
    auto cfg = tiny_sweep(fresh_out("allfail"));
    SweepData bad;  // empty splits fail inside train()
    bad.manifest_hash = data_manifest_hash(bad);
    CHECK_THROWS(run_layer_sweep(cfg, bad));
}

TEST_CASE("drop report flags a synthetic late drop") {
    SweepResult sweep;
    sweep.metric_name = "spearman";
    for (int l = 0; l <= 4; ++l) {
        LayerAggregate agg;
        agg.layer = l;
        agg.val_mean = agg.test_mean = l < 4 ? 0.80 : 0.60;
        sweep.per_layer.push_back(agg);
    }
    auto rep = drop_report(sweep, true);
    CHECK(rep.best_layer == 0);
    CHECK(rep.last_layer == 4);
    CHECK(rep.gap == doctest::Approx(0.20));
    REQUIRE(rep.cka_drop_flag.has_value());
    CHECK(*rep.cka_drop_flag);
    std::string j = drop_report_json(rep);
    CHECK(j.find("\"gap\"") != std::string::npos);
    CHECK(j.find("\"cka_drop_flag\": true") != std::string::npos);
}
