// Command-line driver: sweep, train, dapt, evaluate, cka, pareto, report.
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include "tmft/cka.hpp"
#include "tmft/corpus.hpp"
#include "tmft/dapt.hpp"
#include "tmft/report.hpp"
#include "tmft/sweep.hpp"
#include "tmft/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>

using nlohmann::json;
using namespace tmft;

namespace {

fs::path env_or(const char* var, const fs::path& fallback) {
    const char* v = std::getenv(var);
    return v && *v ? fs::path(v) : fallback;
}

fs::path resolve_data_path(const std::string& p) {
    fs::path path(p);
    if (path.is_relative()) {
        fs::path root = env_or("TMFT_DATA_ROOT", "");
        if (!root.empty()) return root / path;
    }
    return path;
}

template <typename T>
T field(const json& j, const std::string& key, const char* what) {
    if (!j.contains(key)) throw ConfigError(std::string("missing config field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' is not a valid " + what);
    }
}

struct LoadedExperiment {
    std::string experiment;
    SweepConfig sweep;
    SweepData data;
    json canonical;  // parsed config, re-serialized beside results
};

TrainConfig parse_train_overrides(const json& j, TrainConfig base) {
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.clip_norm = j.value("clip_norm", base.clip_norm);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.epochs = j.value("epochs", base.epochs);
    if (base.batch_size <= 0) throw ConfigError("config field 'train.batch_size' must be > 0");
    if (base.epochs <= 0) throw ConfigError("config field 'train.epochs' must be > 0");
    return base;
}

LoadedExperiment load_experiment(const fs::path& config_file, const std::string& out_override,
                                 int workers_override, const std::string& profile_override) {
    json j;
    try {
        j = json::parse(read_file(config_file));
    } catch (const json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }

    LoadedExperiment exp;
    exp.experiment = field<std::string>(j, "experiment", "string");
    SweepConfig& cfg = exp.sweep;

    cfg.base.base_model = field<std::string>(j, "model", "string");
    std::string init = j.value("init", "pretrained");
    if (init != "pretrained" && init != "random")
        throw ConfigError("config field 'init' must be 'pretrained' or 'random'");
    cfg.base.random_init = init == "random";
    cfg.base.seed = j.value("seed", 0);

    cfg.task = task_from_name(j.value("task", "sts"));
    cfg.stage = stage_from_name(j.value("stage", "none"));
    cfg.layers = field<std::vector<int>>(j, "layers", "integer array");
    if (cfg.layers.empty()) throw ConfigError("config field 'layers' must be non-empty");

    cfg.profile = profile_override.empty() ? j.value("profile", "paper") : profile_override;
    if (cfg.profile != "paper" && cfg.profile != "desk")
        throw ConfigError("config field 'profile' must be 'paper' or 'desk'");

    cfg.train_template = TrainConfig::defaults(cfg.task, 0);
    cfg.word_template = TrainConfig::defaults(Task::WordSim, 0);
    if (j.contains("train")) cfg.train_template = parse_train_overrides(j["train"], cfg.train_template);
    if (j.contains("word_train")) cfg.word_template = parse_train_overrides(j["word_train"], cfg.word_template);
    if (j.contains("dapt")) {
        const json& d = j["dapt"];
        cfg.dapt.batch_size = d.value("batch_size", cfg.dapt.batch_size);
        cfg.dapt.grad_accum_steps = d.value("grad_accum_steps", cfg.dapt.grad_accum_steps);
        cfg.dapt.epochs = d.value("epochs", cfg.dapt.epochs);
        cfg.dapt.mask_probability = d.value("mask_probability", cfg.dapt.mask_probability);
        if (cfg.dapt.mask_probability < 0.0 || cfg.dapt.mask_probability >= 1.0)
            throw ConfigError("config field 'dapt.mask_probability' must be in [0,1)");
    }

    cfg.seeds.clear();
    for (auto s : j.value("seeds", std::vector<std::uint64_t>{0, 1, 2, 3, 4}))
        cfg.seeds.push_back(s);
    if (cfg.profile == "desk") {
        // reduced protocol: 2 seeds, 5 epochs; always labeled in outputs
        if (cfg.seeds.size() > 2) cfg.seeds.resize(2);
        cfg.train_template.epochs = std::min(cfg.train_template.epochs, 5);
        cfg.word_template.epochs = std::min(cfg.word_template.epochs, 5);
        cfg.dapt.epochs = std::min(cfg.dapt.epochs, 2);
    }

    cfg.checkpoint_root =
        env_or("TMFT_CHECKPOINT_ROOT", fs::path(j.value("checkpoint_root", "")));
    fs::path out = out_override.empty() ? env_or("TMFT_OUT", fs::path(j.value("out", "out")))
                                        : fs::path(out_override);
    cfg.out_dir = out / exp.experiment;
    cfg.workers = workers_override > 0 ? workers_override : j.value("workers", 1);
    cfg.save_checkpoints = j.value("save_checkpoints", false);

    if (!j.contains("datasets")) throw ConfigError("missing config field 'datasets'");
    const json& ds = j["datasets"];
    switch (cfg.task) {
        case Task::STS: {
            auto splits = load_sts(resolve_data_path(field<std::string>(ds, "task", "path")),
                                   ds.value("language", "en"));
            exp.data.task_data = to_examples(splits);
            break;
        }
        case Task::WordSim: {
            std::map<WordSource, fs::path> files;
            for (auto& [name, path] : field<json>(ds, "word_pairs", "object").items())
                files[word_source_from_name(name)] = resolve_data_path(path.get<std::string>());
            exp.data.task_data =
                to_examples(load_word_pairs(files, ds.value("word_split_seed", 13)));
            break;
        }
        case Task::Paraphrase:
        case Task::Entailment: {
            auto splits = load_pair_classification(
                cfg.task == Task::Paraphrase ? ClassificationTask::MRPC : ClassificationTask::SICKE,
                resolve_data_path(field<std::string>(ds, "task", "path")));
            exp.data.task_data = to_examples(splits);
            break;
        }
    }
    if (cfg.stage == Stage::WordSim) {
        std::map<WordSource, fs::path> files;
        for (auto& [name, path] : field<json>(ds, "word_pairs", "object").items())
            files[word_source_from_name(name)] = resolve_data_path(path.get<std::string>());
        exp.data.word_data =
            to_examples(load_word_pairs(files, ds.value("word_split_seed", 13)));
    }
    if (cfg.stage == Stage::Dapt) {
        std::vector<fs::path> files;
        for (const auto& p : field<std::vector<std::string>>(ds, "mlm", "path array"))
            files.push_back(resolve_data_path(p));
        exp.data.mlm_corpus = load_mlm_corpus(files);
    }
    exp.data.manifest_hash = data_manifest_hash(exp.data);

    // Validate the model reference early so bad ids fail before training.
    if (!registry_has(cfg.base.base_model) &&
        !fs::exists(fs::path(cfg.base.base_model) / "config.json") &&
        !(cfg.checkpoint_root.empty()
              ? false
              : fs::exists(cfg.checkpoint_root / cfg.base.base_model / "config.json")))
        throw ConfigError("config field 'model': unknown model id or checkpoint path '" +
                          cfg.base.base_model + "'");

    exp.canonical = j;
    return exp;
}

void write_sweep_outputs(const SweepConfig& cfg, const SweepResult& sweep, const json& canonical) {
    atomic_write_file(cfg.out_dir / "config.json", canonical.dump(2) + "\n");
    atomic_write_file(cfg.out_dir / "sweep_result.json", sweep_result_json(sweep));
    if (!sweep.per_layer.empty()) {
        atomic_write_file(cfg.out_dir / "aggregates.csv", aggregates_csv(sweep));
        atomic_write_file(cfg.out_dir / "layer_plot.svg", layer_plot_svg(sweep));
        atomic_write_file(cfg.out_dir / "drop_report.json", drop_report_json(drop_report(sweep)));
    }
}

int cmd_sweep(const fs::path& config_file, const std::string& out, int workers,
              const std::string& profile) {
    auto exp = load_experiment(config_file, out, workers, profile);
    SweepResult sweep = run_layer_sweep(exp.sweep, exp.data);
    write_sweep_outputs(exp.sweep, sweep, exp.canonical);
    std::cout << "sweep '" << exp.experiment << "' complete: " << sweep.runs.size()
              << " runs, best layer " << sweep.best_layer << "\n";
    return 0;
}

int cmd_train(const fs::path& config_file, const std::string& out, const std::string& profile) {
    auto exp = load_experiment(config_file, out, 1, profile);
    exp.sweep.layers.resize(1);
    exp.sweep.seeds.resize(1);
    exp.sweep.save_checkpoints = true;
    SweepResult sweep = run_layer_sweep(exp.sweep, exp.data);
    write_sweep_outputs(exp.sweep, sweep, exp.canonical);
    if (!sweep.runs.empty() && sweep.runs.front().failed) {
        std::cerr << "run failed: " << sweep.runs.front().error << "\n";
        return 1;
    }
    std::cout << "run complete: val=" << sweep.runs.front().val_metric
              << " test=" << sweep.runs.front().test_metric << "\n";
    return 0;
}

int cmd_dapt(const fs::path& config_file, const std::string& out, const std::string& profile) {
    auto exp = load_experiment(config_file, out, 1, profile);
    if (!exp.data.mlm_corpus)
        throw ConfigError("dapt requires 'datasets.mlm' sources (set stage to 'dapt')");
    TruncationSpec spec = exp.sweep.base;
    auto probe = build_truncated_encoder({spec.base_model, 0, spec.random_init, spec.seed},
                                         exp.sweep.checkpoint_root);
    spec.cut_layer = probe.encoder.config().num_layers;
    auto bundle = build_truncated_encoder(spec, exp.sweep.checkpoint_root);
    auto result =
        dapt_pretrain(std::move(bundle), *exp.data.mlm_corpus, exp.sweep.dapt, spec.seed);
    fs::path dir = exp.sweep.out_dir / "dapt_model";
    save_dapt_checkpoint(result, *exp.data.mlm_corpus, exp.sweep.dapt, dir);
    std::cout << "adapted checkpoint written to " << dir << "\n";
    return result.history.diverged ? 1 : 0;
}

int cmd_evaluate(const std::string& model_dir, const std::string& dataset,
                 const std::string& task_str, int layer, const std::string& out) {
    Task task = task_from_name(task_str);
    auto bundle = load_bundle(model_dir, layer);
    TrainedModel model{std::move(bundle.encoder), std::move(bundle.tokenizer), {}, {}, {}};
    ExampleSplits data;
    if (task == Task::STS)
        data = to_examples(load_sts(resolve_data_path(dataset)));
    else if (task == Task::Paraphrase)
        data = to_examples(load_pair_classification(ClassificationTask::MRPC,
                                                    resolve_data_path(dataset)));
    else
        throw ConfigError("evaluate supports tasks 'sts' and 'paraphrase'");
    json j;
    if (task == Task::STS) {
        EvalReport rep = evaluate_sts(model, data.test);
        j = {{"spearman", rep.spearman}, {"pearson", rep.pearson}, {"n", rep.n}};
    } else {
        model.paraphrase_head.emplace();
        EvalReport rep = evaluate_classification(model, task, data.test, data.validation);
        j = {{"f1", *rep.f1}, {"threshold", *rep.threshold}, {"n", rep.n},
             {"f1_convention", "no gold positives and none predicted counts as 1.0"}};
    }
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) atomic_write_file(out, j.dump(2) + "\n");
    return 0;
}

int cmd_cka(const std::string& model_a, const std::string& model_b, const std::string& dataset,
            const std::string& out_dir, int max_sentences, int window, double delta) {
    auto a = load_bundle(model_a);
    auto b = load_bundle(model_b);
    auto splits = load_sts(resolve_data_path(dataset));

    std::vector<std::string> sentences;
    for (const auto& p : splits.test) {
        sentences.push_back(p.text_a);
        sentences.push_back(p.text_b);
    }
    if (max_sentences > 0 && static_cast<int>(sentences.size()) > max_sentences)
        sentences.resize(max_sentences);
    if (sentences.size() < 2) throw DataError("cka: need at least 2 sentences");

    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : sentences) h = fnv1a64(s + "\n", h);

    int shared = std::min(a.encoder.cut_layer(), b.encoder.cut_layer());
    auto pooled_per_layer = [&](const EncoderBundle& bundle) {
        std::vector<Mat> mats(static_cast<std::size_t>(shared) + 1);
        for (int l = 0; l <= shared; ++l)
            mats[static_cast<std::size_t>(l)] =
                Mat(sentences.size(), bundle.encoder.config().hidden_size);
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            auto states = bundle.encoder.encode(
                bundle.tokenizer.encode(sentences[i], bundle.encoder.config().max_position));
            for (int l = 0; l <= shared; ++l)
                mats[static_cast<std::size_t>(l)].row(static_cast<Eigen::Index>(i)) =
                    mean_pool(states, l).transpose();
        }
        return mats;
    };
    auto reps_a = pooled_per_layer(a);
    auto reps_b = pooled_per_layer(b);

    CKACurve curve;
    curve.model_a = a.encoder.config().model_id;
    curve.model_b = b.encoder.config().model_id;
    curve.sentence_checksum = to_hex(h);
    for (int l = 0; l <= shared; ++l)
        curve.values.push_back({l, linear_cka(reps_a[static_cast<std::size_t>(l)],
                                              reps_b[static_cast<std::size_t>(l)])});

    fs::path dir(out_dir);
    atomic_write_file(dir / "cka_curve.json", cka_curve_json(curve, window, delta));
    atomic_write_file(dir / "cka_curve.svg", cka_plot_svg(curve));
    std::cout << "CKA curve over " << curve.values.size() << " layers written to " << dir << "\n";
    return 0;
}

std::vector<SweepResult> load_sweeps(const fs::path& results_dir) {
    std::vector<SweepResult> sweeps;
    if (!fs::is_directory(results_dir))
        throw ConfigError("results dir does not exist: " + results_dir.string());
    for (const auto& entry : fs::recursive_directory_iterator(results_dir))
        if (entry.is_regular_file() && entry.path().filename() == "sweep_result.json")
            sweeps.push_back(sweep_result_from_json(read_file(entry.path())));
    std::sort(sweeps.begin(), sweeps.end(),
              [](const SweepResult& x, const SweepResult& y) { return x.model_id < y.model_id; });
    if (sweeps.empty())
        throw ConfigError("no sweep_result.json found under " + results_dir.string());
    return sweeps;
}

int cmd_pareto(const std::string& results_dir, const std::string& out_dir,
               const std::vector<std::string>& exclude) {
    auto sweeps = load_sweeps(results_dir);
    auto points = pareto_points(sweeps, /*include_last_layer=*/true, exclude);
    if (points.empty()) throw ConfigError("no completed sweeps with aggregates");
    auto front = pareto_front(points);
    fs::path dir(out_dir);
    atomic_write_file(dir / "pareto.csv", pareto_csv(points, front));
    atomic_write_file(dir / "pareto.svg", pareto_plot_svg(points, front));
    std::cout << points.size() << " points, " << front.size() << " on the front\n";
    return 0;
}

int cmd_report(const std::string& results_dir, const std::string& out_dir) {
    auto sweeps = load_sweeps(results_dir);
    fs::path dir = out_dir.empty() ? fs::path(results_dir) / "report" : fs::path(out_dir);
    atomic_write_file(dir / "overview.md", overview_markdown(sweeps));
    for (const auto& sweep : sweeps) {
        if (sweep.per_layer.empty()) continue;
        std::string base = sweep.model_id + "_" + stage_name(sweep.stage);
        atomic_write_file(dir / (base + ".csv"), aggregates_csv(sweep));
        atomic_write_file(dir / (base + ".svg"), layer_plot_svg(sweep));
    }
    std::cout << "report for " << sweeps.size() << " sweeps written to " << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Truncated model fine-tuning toolkit"};
    app.require_subcommand(1);

    std::string config_file, out, profile;
    int workers = 0;

    auto add_common = [&](CLI::App* sub, bool with_workers) {
        sub->add_option("--config", config_file, "experiment config (JSON)")->required();
        sub->add_option("--out", out, "results root (default: config 'out' or $TMFT_OUT)");
        sub->add_option("--profile", profile, "paper|desk");
        if (with_workers) sub->add_option("--workers", workers, "worker pool size");
    };

    auto* sweep_cmd = app.add_subcommand("sweep", "layer-wise TMFT sweep");
    add_common(sweep_cmd, true);
    auto* train_cmd = app.add_subcommand("train", "single fine-tuning run with checkpoint");
    add_common(train_cmd, false);
    auto* dapt_cmd = app.add_subcommand("dapt", "domain-adaptive MLM pre-training");
    add_common(dapt_cmd, false);

    std::string model_dir, dataset, task_str = "sts", model_b, results_dir;
    int layer = -1, max_sentences = 0, window = 3;
    double delta = 0.1;
    std::vector<std::string> exclude;

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--model", model_dir, "checkpoint directory")->required();
    eval_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    eval_cmd->add_option("--task", task_str, "sts|paraphrase");
    eval_cmd->add_option("--layer", layer, "cut layer (default: full depth)");
    eval_cmd->add_option("--out", out, "write the report JSON here");

    auto* cka_cmd = app.add_subcommand("cka", "layer-wise CKA between two models");
    cka_cmd->add_option("--model-a", model_dir, "first checkpoint directory")->required();
    cka_cmd->add_option("--model-b", model_b, "second checkpoint directory")->required();
    cka_cmd->add_option("--dataset", dataset, "STS dataset directory (test split is used)")
        ->required();
    cka_cmd->add_option("--out", out, "output directory")->required();
    cka_cmd->add_option("--max-sentences", max_sentences, "cap the sentence count");
    cka_cmd->add_option("--window", window, "drop diagnostic window");
    cka_cmd->add_option("--delta", delta, "drop diagnostic threshold");

    auto* pareto_cmd = app.add_subcommand("pareto", "parameter/performance Pareto front");
    pareto_cmd->add_option("--results", results_dir, "directory with sweep results")->required();
    pareto_cmd->add_option("--out", out, "output directory")->required();
    pareto_cmd->add_option("--exclude", exclude, "point ids to exclude (model@lN)");

    auto* report_cmd = app.add_subcommand("report", "tables and figures from stored results");
    report_cmd->add_option("--results", results_dir, "directory with sweep results")->required();
    report_cmd->add_option("--out", out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // usage problems are configuration errors; --help and friends exit 0
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sweep_cmd->parsed()) return cmd_sweep(config_file, out, workers, profile);
        if (train_cmd->parsed()) return cmd_train(config_file, out, profile);
        if (dapt_cmd->parsed()) return cmd_dapt(config_file, out, profile);
        if (eval_cmd->parsed()) return cmd_evaluate(model_dir, dataset, task_str, layer, out);
        if (cka_cmd->parsed())
            return cmd_cka(model_dir, model_b, dataset, out, max_sentences, window, delta);
        if (pareto_cmd->parsed()) return cmd_pareto(results_dir, out, exclude);
        if (report_cmd->parsed()) return cmd_report(results_dir, out);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
