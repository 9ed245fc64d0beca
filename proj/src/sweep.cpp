#include "tmft/sweep.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

using nlohmann::json;

namespace tmft {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::None: return "none";
        case Stage::WordSim: return "word_sim";
        case Stage::Dapt: return "dapt";
    }
    return "?";
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::None, Stage::WordSim, Stage::Dapt})
        if (name == stage_name(s)) return s;
    throw ConfigError("unknown stage: " + name);
}

std::string data_manifest_hash(const SweepData& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](const std::vector<Example>& part) {
        for (const auto& ex : part) {
            h = fnv1a64(ex.text_a, h);
            h = fnv1a64("\t", h);
            h = fnv1a64(ex.text_b, h);
            h = fnv1a64("\t" + std::to_string(ex.target) + "\n", h);
        }
    };
    mix(data.task_data.train);
    mix(data.task_data.validation);
    mix(data.task_data.test);
    if (data.word_data) {
        mix(data.word_data->train);
        mix(data.word_data->validation);
        mix(data.word_data->test);
    }
    if (data.mlm_corpus)
        for (const auto& s : data.mlm_corpus->sentences) h = fnv1a64(s + "\n", h);
    return to_hex(h);
}

namespace {

std::string run_identifier(const SweepConfig& config, int layer, std::uint64_t seed,
                           const std::string& manifest_hash) {
    std::ostringstream ss;
    ss << config.base.base_model << "|" << (config.base.random_init ? "random" : "pretrained")
       << "|l=" << layer << "|seed=" << seed << "|" << config.train_template.canonical() << "|"
       << stage_name(config.stage) << "|" << manifest_hash << "|" << config.profile;
    return to_hex(fnv1a64(ss.str()));
}

std::string result_json(const LayerResult& r) {
    json j;
    j["layer"] = r.layer;
    j["seed"] = r.seed;
    j["val_metric"] = r.val_metric;
    j["val_metric2"] = r.val_metric2;
    j["test_metric"] = r.test_metric;
    j["test_metric2"] = r.test_metric2;
    j["param_count"] = r.param_count;
    j["run_id"] = r.run_id;
    return j.dump(2) + "\n";
}

LayerResult result_from_json(const std::string& text) {
    json j = json::parse(text);
    LayerResult r;
    r.layer = j.at("layer");
    r.seed = j.at("seed");
    r.val_metric = j.at("val_metric");
    r.val_metric2 = j.at("val_metric2");
    r.test_metric = j.at("test_metric");
    r.test_metric2 = j.at("test_metric2");
    r.param_count = j.at("param_count");
    r.run_id = j.at("run_id");
    return r;
}

// Prepares the DAPT-adapted checkpoint once per sweep, reusing a previously
// persisted one when the key matches.
fs::path ensure_dapt_checkpoint(const SweepConfig& config, const SweepData& data) {
    if (!data.mlm_corpus) throw ConfigError("stage=dapt requires an MLM corpus");
    std::ostringstream key;
    key << config.base.base_model << "|" << config.dapt.batch_size << "x"
        << config.dapt.grad_accum_steps << "|ep=" << config.dapt.epochs
        << "|p=" << config.dapt.mask_probability << "|" << data.manifest_hash;
    fs::path dir = config.out_dir / "dapt" / to_hex(fnv1a64(key.str()));
    if (fs::exists(dir / "dapt_manifest.json")) return dir;
    TruncationSpec full = config.base;
    full.cut_layer = -1;  // resolved to full depth below
    auto probe = build_truncated_encoder({config.base.base_model, 0, config.base.random_init,
                                          config.base.seed},
                                         config.checkpoint_root);
    full.cut_layer = probe.encoder.config().num_layers;
    auto bundle = build_truncated_encoder(full, config.checkpoint_root);
    auto result = dapt_pretrain(std::move(bundle), *data.mlm_corpus, config.dapt,
                                config.base.seed);
    if (result.history.diverged) throw NumericError("DAPT pre-training diverged");
    save_dapt_checkpoint(result, *data.mlm_corpus, config.dapt, dir);
    return dir;
}

LayerResult execute_run(const SweepConfig& config, const SweepData& data, int layer,
                        std::uint64_t seed, const std::string& run_id,
                        const fs::path& dapt_dir) {
    TrainConfig tc = config.train_template;
    tc.task = config.task;
    tc.cut_layer = layer;

    EncoderBundle bundle = [&] {
        if (config.stage == Stage::Dapt) return load_bundle(dapt_dir, layer);
        TruncationSpec spec = config.base;
        spec.cut_layer = layer;
        if (spec.random_init) spec.seed = seed;  // one seed per run drives everything
        return build_truncated_encoder(spec, config.checkpoint_root);
    }();

    std::size_t params = bundle.encoder.count_parameters();

    TrainedModel model = [&] {
        if (config.stage == Stage::WordSim) {
            if (!data.word_data) throw ConfigError("stage=word_sim requires word-pair data");
            TrainConfig wc = config.word_template;
            wc.task = Task::WordSim;
            wc.cut_layer = layer;
            return chain_word_sim_then_sts(std::move(bundle), *data.word_data, data.task_data,
                                           tc, wc, seed);
        }
        return train(std::move(bundle), data.task_data, tc, seed);
    }();

    LayerResult r;
    r.layer = layer;
    r.seed = seed;
    r.param_count = params;
    r.run_id = run_id;
    if (config.task == Task::STS || config.task == Task::WordSim) {
        EvalReport val = evaluate_sts(model, data.task_data.validation);
        EvalReport test = evaluate_sts(model, data.task_data.test);
        r.val_metric = val.spearman;
        r.val_metric2 = val.pearson;
        r.test_metric = test.spearman;
        r.test_metric2 = test.pearson;
    } else {
        EvalReport val = evaluate_classification(model, config.task, data.task_data.validation,
                                                 data.task_data.validation);
        EvalReport test = evaluate_classification(model, config.task, data.task_data.test,
                                                  data.task_data.validation);
        r.val_metric = *val.f1;
        r.test_metric = *test.f1;
    }

    fs::path run_dir = config.out_dir / "runs" / run_id;
    fs::create_directories(run_dir);
    json cfg;
    cfg["model"] = config.base.base_model;
    cfg["init_mode"] = config.base.random_init ? "random" : "pretrained";
    cfg["layer"] = layer;
    cfg["seed"] = seed;
    cfg["stage"] = stage_name(config.stage);
    cfg["train"] = tc.canonical();
    cfg["data_manifest"] = data.manifest_hash;
    cfg["profile"] = config.profile;
    atomic_write_file(run_dir / "config.json", cfg.dump(2) + "\n");
    atomic_write_file(run_dir / "history.json", history_json(model.history));
    if (config.save_checkpoints)
        save_bundle(model.encoder, model.tokenizer, run_dir / "checkpoint",
                    config.base.random_init ? "random" : "pretrained");
    // result.json last: its presence marks the run complete for resumption
    atomic_write_file(run_dir / "result.json", result_json(r));
    return r;
}

void aggregate(SweepResult& sweep) {
    sweep.per_layer.clear();
    std::vector<int> layers;
    for (const auto& r : sweep.runs)
        if (!r.failed && std::find(layers.begin(), layers.end(), r.layer) == layers.end())
            layers.push_back(r.layer);
    std::sort(layers.begin(), layers.end());
    for (int layer : layers) {
        LayerAggregate agg;
        agg.layer = layer;
        std::vector<const LayerResult*> rs;
        for (const auto& r : sweep.runs)
            if (!r.failed && r.layer == layer) rs.push_back(&r);
        agg.n_seeds = static_cast<int>(rs.size());
        agg.param_count = rs.front()->param_count;
        auto stats = [&](auto get, double& mean, double& sd) {
            double sum = 0.0;
            for (auto* r : rs) sum += get(*r);
            mean = sum / rs.size();
            double sq = 0.0;
            for (auto* r : rs) sq += (get(*r) - mean) * (get(*r) - mean);
            sd = rs.size() > 1 ? std::sqrt(sq / (rs.size() - 1)) : 0.0;
        };
        stats([](const LayerResult& r) { return r.val_metric; }, agg.val_mean, agg.val_std);
        stats([](const LayerResult& r) { return r.test_metric; }, agg.test_mean, agg.test_std);
        stats([](const LayerResult& r) { return r.val_metric2; }, agg.val2_mean, agg.val2_std);
        stats([](const LayerResult& r) { return r.test_metric2; }, agg.test2_mean, agg.test2_std);
        sweep.per_layer.push_back(agg);
    }
    sweep.best_layer = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& agg : sweep.per_layer) {
        if (agg.val_mean > best) {  // strict: ties keep the lower layer
            best = agg.val_mean;
            sweep.best_layer = agg.layer;
        }
    }
}

}  // namespace

SweepResult run_layer_sweep(const SweepConfig& config, const SweepData& data) {
    if (config.layers.empty()) throw ConfigError("sweep: no layers configured");
    if (config.seeds.empty()) throw ConfigError("sweep: no seeds configured");

    fs::path dapt_dir;
    if (config.stage == Stage::Dapt) dapt_dir = ensure_dapt_checkpoint(config, data);

    struct Job {
        int layer;
        std::uint64_t seed;
        std::string run_id;
    };
    std::vector<Job> jobs;
    for (int layer : config.layers)
        for (std::uint64_t seed : config.seeds)
            jobs.push_back({layer, seed, run_identifier(config, layer, seed, data.manifest_hash)});

    std::vector<LayerResult> results(jobs.size());
    std::vector<char> done(jobs.size(), 0);

    // Completed runs are picked up from the store without retraining.
    std::size_t resumed = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        fs::path f = config.out_dir / "runs" / jobs[i].run_id / "result.json";
        if (fs::exists(f)) {
            results[i] = result_from_json(read_file(f));
            done[i] = 1;
            ++resumed;
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<int> executed{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            if (done[i]) continue;
            if (config.abort_after_runs >= 0 && executed.load() >= config.abort_after_runs)
                return;
            try {
                results[i] = execute_run(config, data, jobs[i].layer, jobs[i].seed,
                                         jobs[i].run_id, dapt_dir);
                done[i] = 1;
                executed.fetch_add(1);
                std::lock_guard lock(log_mutex);
                std::cerr << "run " << jobs[i].run_id << " (l=" << jobs[i].layer << ", seed="
                          << jobs[i].seed << "): val=" << results[i].val_metric
                          << " test=" << results[i].test_metric << "\n";
            } catch (const std::exception& e) {
                results[i].layer = jobs[i].layer;
                results[i].seed = jobs[i].seed;
                results[i].run_id = jobs[i].run_id;
                results[i].failed = true;
                results[i].error = e.what();
                done[i] = 1;
                executed.fetch_add(1);
                std::lock_guard lock(log_mutex);
                std::cerr << "run " << jobs[i].run_id << " failed: " << e.what() << "\n";
            }
        }
    };
    int n_workers = std::max(1, config.workers);
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    SweepResult sweep;
    sweep.model_id = config.base.base_model;
    sweep.stage = config.stage;
    sweep.profile = config.profile;
    sweep.metric_name =
        (config.task == Task::STS || config.task == Task::WordSim) ? "spearman" : "f1";
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (done[i]) sweep.runs.push_back(results[i]);

    bool any_ok = std::any_of(sweep.runs.begin(), sweep.runs.end(),
                              [](const LayerResult& r) { return !r.failed; });
    if (!any_ok && config.abort_after_runs < 0)
        throw NumericError("sweep: every run failed");
    if (any_ok) aggregate(sweep);
    return sweep;
}

const LayerAggregate& select_best(const SweepResult& sweep) {
    if (sweep.per_layer.empty()) throw ConfigError("select_best: empty sweep");
    for (const auto& agg : sweep.per_layer)
        if (agg.layer == sweep.best_layer) return agg;
    throw ConfigError("select_best: best layer missing from aggregates");
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
    if (points.empty()) throw ConfigError("pareto_front: no points");
    std::vector<ParetoPoint> front;
    for (const auto& p : points) {
        bool dominated = false;
        for (const auto& q : points) {
            if (q.params <= p.params && q.test_spearman >= p.test_spearman &&
                (q.params < p.params || q.test_spearman > p.test_spearman)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) front.push_back(p);
    }
    std::sort(front.begin(), front.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        return a.params < b.params || (a.params == b.params && a.test_spearman < b.test_spearman);
    });
    return front;
}

DropReport drop_report(const SweepResult& sweep, std::optional<bool> cka_drop_flag) {
    if (sweep.per_layer.empty()) throw ConfigError("drop_report: empty sweep");
    DropReport rep;
    rep.cka_drop_flag = cka_drop_flag;
    const LayerAggregate* best = &sweep.per_layer.front();
    for (const auto& agg : sweep.per_layer)
        if (agg.test_mean > best->test_mean) best = &agg;
    const LayerAggregate& last = sweep.per_layer.back();
    rep.best_layer = best->layer;
    rep.max_mean_test = best->test_mean;
    rep.last_layer = last.layer;
    rep.last_mean_test = last.test_mean;
    rep.gap = best->test_mean - last.test_mean;
    return rep;
}

std::string sweep_result_json(const SweepResult& sweep) {
    json j;
    j["model_id"] = sweep.model_id;
    j["stage"] = stage_name(sweep.stage);
    j["metric"] = sweep.metric_name;
    j["profile"] = sweep.profile;
    j["best_layer"] = sweep.best_layer;
    j["runs"] = json::array();
    for (const auto& r : sweep.runs) {
        json run = json::parse(result_json(r));
        run["failed"] = r.failed;
        if (r.failed) run["error"] = r.error;
        j["runs"].push_back(run);
    }
    j["per_layer"] = json::array();
    for (const auto& a : sweep.per_layer)
        j["per_layer"].push_back({{"layer", a.layer},
                                  {"param_count", a.param_count},
                                  {"n_seeds", a.n_seeds},
                                  {"val_mean", a.val_mean},
                                  {"val_std", a.val_std},
                                  {"test_mean", a.test_mean},
                                  {"test_std", a.test_std},
                                  {"val2_mean", a.val2_mean},
                                  {"val2_std", a.val2_std},
                                  {"test2_mean", a.test2_mean},
                                  {"test2_std", a.test2_std}});
    return j.dump(2) + "\n";
}

SweepResult sweep_result_from_json(const std::string& text) {
    json j = json::parse(text);
    SweepResult sweep;
    sweep.model_id = j.at("model_id");
    sweep.stage = stage_from_name(j.at("stage"));
    sweep.metric_name = j.at("metric");
    sweep.profile = j.at("profile");
    sweep.best_layer = j.at("best_layer");
    for (const auto& run : j.at("runs")) {
        LayerResult r = result_from_json(run.dump());
        r.failed = run.value("failed", false);
        r.error = run.value("error", "");
        sweep.runs.push_back(r);
    }
    for (const auto& a : j.at("per_layer")) {
        LayerAggregate agg;
        agg.layer = a.at("layer");
        agg.param_count = a.at("param_count");
        agg.n_seeds = a.at("n_seeds");
        agg.val_mean = a.at("val_mean");
        agg.val_std = a.at("val_std");
        agg.test_mean = a.at("test_mean");
        agg.test_std = a.at("test_std");
        agg.val2_mean = a.at("val2_mean");
        agg.val2_std = a.at("val2_std");
        agg.test2_mean = a.at("test2_mean");
        agg.test2_std = a.at("test2_std");
        sweep.per_layer.push_back(agg);
    }
    return sweep;
}

std::string drop_report_json(const DropReport& report) {
    json j;
    j["best_layer"] = report.best_layer;
    j["max_mean_test"] = report.max_mean_test;
    j["last_layer"] = report.last_layer;
    j["last_mean_test"] = report.last_mean_test;
    j["gap"] = report.gap;
    if (report.cka_drop_flag) j["cka_drop_flag"] = *report.cka_drop_flag;
    return j.dump(2) + "\n";
}

}  // namespace tmft
