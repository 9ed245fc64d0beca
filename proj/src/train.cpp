#include "tmft/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_map>

using nlohmann::json;

namespace tmft {

const char* task_name(Task t) {
    switch (t) {
        case Task::STS: return "sts";
        case Task::WordSim: return "word_sim";
        case Task::Paraphrase: return "paraphrase";
        case Task::Entailment: return "entailment";
    }
    return "?";
}

Task task_from_name(const std::string& name) {
    for (Task t : {Task::STS, Task::WordSim, Task::Paraphrase, Task::Entailment})
        if (name == task_name(t)) return t;
    throw ConfigError("unknown task: " + name);
}

TrainConfig TrainConfig::defaults(Task t, int cut_layer) {
    TrainConfig c;
    c.task = t;
    c.cut_layer = cut_layer;
    if (t == Task::WordSim) {
        c.batch_size = 128;
        c.epochs = 50;
    }
    return c;
}

std::string TrainConfig::canonical() const {
    std::ostringstream ss;
    ss << task_name(task) << "|lr=" << learning_rate << "|wd=" << weight_decay
       << "|clip=" << clip_norm << "|bs=" << batch_size << "|ep=" << epochs
       << "|l=" << cut_layer;
    return ss.str();
}

std::vector<ParamView> views_of(ParameterStore& params) {
    std::vector<ParamView> views;
    for (auto& t : params.tensors())
        views.push_back({t.value.data(), t.grad.data(), static_cast<std::size_t>(t.value.size()),
                         t.decay});
    return views;
}

AdamW::AdamW(std::vector<ParamView> views, double lr, double weight_decay)
    : views_(std::move(views)), lr_(lr), wd_(weight_decay) {
    for (const auto& v : views_) {
        m_.emplace_back(v.n, 0.0);
        v_.emplace_back(v.n, 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& v : views_) std::fill(v.grad, v.grad + v.n, 0.0);
}

void AdamW::scale_grad(double factor) {
    for (auto& v : views_)
        for (std::size_t i = 0; i < v.n; ++i) v.grad[i] *= factor;
}

double AdamW::grad_norm() const {
    double sq = 0.0;
    for (const auto& v : views_)
        for (std::size_t i = 0; i < v.n; ++i) sq += v.grad[i] * v.grad[i];
    return std::sqrt(sq);
}

void AdamW::clip_grad(double max_norm) {
    double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) scale_grad(max_norm / norm);
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < views_.size(); ++k) {
        auto& view = views_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < view.n; ++i) {
            double g = view.grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            if (view.decay) update += wd_ * view.value[i];  // decoupled decay
            view.value[i] -= lr_ * update;
        }
    }
}

std::vector<Example> to_examples(const std::vector<SentencePair>& pairs) {
    std::vector<Example> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.text_a, p.text_b, p.gold});
    return out;
}

std::vector<Example> to_examples(const std::vector<WordPair>& pairs) {
    std::vector<Example> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.word_a, p.word_b, p.score});
    return out;
}

ExampleSplits to_examples(const SplitSet<SentencePair>& s) {
    return {to_examples(s.train), to_examples(s.validation), to_examples(s.test)};
}

ExampleSplits to_examples(const SplitSet<WordPair>& s) {
    return {to_examples(s.train), to_examples(s.validation), to_examples(s.test)};
}

namespace {

class TokenCache {
  public:
    TokenCache(const WordPieceTokenizer& tok, int max_len) : tok_(tok), max_len_(max_len) {}
    const std::vector<int>& ids(const std::string& text) {
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(text, tok_.encode(text, max_len_)).first->second;
    }

  private:
    const WordPieceTokenizer& tok_;
    int max_len_;
    std::unordered_map<std::string, std::vector<int>> cache_;
};

Vec pool_rows(const Mat& top) {
    return top.colwise().mean().transpose();
}

PairObjectiveResult objective_for(TrainedModel& model, Task task, const Vec& u, const Vec& v,
                                  double target) {
    switch (task) {
        case Task::STS: return sts_objective(u, v, target);
        case Task::WordSim: return word_similarity_objective(u, v, target);
        case Task::Paraphrase:
            return model.paraphrase_head->loss(u, v, static_cast<int>(target));
        case Task::Entailment:
            return model.entailment_head->loss(u, v, static_cast<int>(target));
    }
    throw ConfigError("bad task");
}

double validation_metric(const TrainedModel& model, Task task,
                         const std::vector<Example>& validation, TokenCache& tokens) {
    std::vector<double> scores;
    std::vector<double> targets;
    std::vector<int> labels, preds;
    for (const auto& ex : validation) {
        auto ua = model.encoder.encode(tokens.ids(ex.text_a));
        auto vb = model.encoder.encode(tokens.ids(ex.text_b));
        Vec u = mean_pool(ua, model.encoder.cut_layer());
        Vec v = mean_pool(vb, model.encoder.cut_layer());
        if (task == Task::Entailment) {
            preds.push_back(model.entailment_head->predict(u, v));
            labels.push_back(static_cast<int>(ex.target));
        } else {
            scores.push_back(cosine_similarity(u, v));
            targets.push_back(ex.target);
            labels.push_back(static_cast<int>(ex.target));
        }
    }
    try {
        switch (task) {
            case Task::STS:
            case Task::WordSim:
                return spearman(scores, targets);
            case Task::Paraphrase:
                return f1_with_threshold(scores, labels, scores, labels).first;
            case Task::Entailment:
                return macro_f1(preds, labels, 3);
        }
    } catch (const NumericError& e) {
        std::cerr << "warning: validation metric undefined (" << e.what() << "), using 0\n";
        return 0.0;
    }
    return 0.0;
}

struct Snapshot {
    std::vector<Mat> encoder_values;
    std::optional<ParaphraseHead> para;
    std::optional<EntailmentHead> entail;
};

Snapshot take_snapshot(const TrainedModel& m) {
    return {m.encoder.params().snapshot_values(), m.paraphrase_head, m.entailment_head};
}

void restore_snapshot(TrainedModel& m, const Snapshot& s) {
    m.encoder.params().restore_values(s.encoder_values);
    m.paraphrase_head = s.para;
    m.entailment_head = s.entail;
}

// Runs one fine-tuning stage in place, appending to model.history.
void train_stage(TrainedModel& model, const ExampleSplits& data, const TrainConfig& config,
                 std::uint64_t seed, const std::string& stage_name) {
    if (config.cut_layer != model.encoder.cut_layer())
        throw ConfigError("config.cut_layer " + std::to_string(config.cut_layer) +
                          " does not match encoder cut layer " +
                          std::to_string(model.encoder.cut_layer()));
    if (data.train.empty() || data.validation.empty())
        throw ConfigError("train: empty train or validation split");

    Rng rng(seed);
    TokenCache tokens(model.tokenizer, model.encoder.config().max_position);

    std::vector<ParamView> views = views_of(model.encoder.params());
    if (config.task == Task::Paraphrase) {
        if (!model.paraphrase_head) model.paraphrase_head.emplace();
        views.push_back({&model.paraphrase_head->a, &model.paraphrase_head->da, 1, false});
        views.push_back({&model.paraphrase_head->b, &model.paraphrase_head->db, 1, false});
    }
    if (config.task == Task::Entailment) {
        if (!model.entailment_head) {
            model.entailment_head.emplace(model.encoder.config().hidden_size);
            model.entailment_head->random_initialize(seed);
        }
        views.push_back({model.entailment_head->w.data(), model.entailment_head->dw.data(),
                         static_cast<std::size_t>(model.entailment_head->w.size()), true});
        views.push_back({model.entailment_head->bias.data(), model.entailment_head->dbias.data(),
                         static_cast<std::size_t>(model.entailment_head->bias.size()), false});
    }
    AdamW opt(views, config.learning_rate, config.weight_decay);

    StageHistory hist;
    hist.stage = stage_name;
    hist.epochs = config.epochs;

    std::optional<Snapshot> best;
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs && !hist.diverged; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < order.size() && !hist.diverged;
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            opt.zero_grad();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const Example& ex = data.train[order[i]];
                TruncatedEncoder::Cache ca, cb;
                Mat top_a = model.encoder.forward(tokens.ids(ex.text_a), ca, true, &rng);
                Mat top_b = model.encoder.forward(tokens.ids(ex.text_b), cb, true, &rng);
                Vec u = pool_rows(top_a);
                Vec v = pool_rows(top_b);
                auto res = objective_for(model, config.task, u, v, ex.target);
                batch_loss += res.loss;
                Mat da = Mat::Zero(top_a.rows(), top_a.cols());
                da.rowwise() = (res.du / static_cast<double>(top_a.rows())).transpose();
                Mat db = Mat::Zero(top_b.rows(), top_b.cols());
                db.rowwise() = (res.dv / static_cast<double>(top_b.rows())).transpose();
                model.encoder.backward(da, ca);
                model.encoder.backward(db, cb);
            }
            double k = static_cast<double>(end - start);
            batch_loss /= k;
            if (!std::isfinite(batch_loss)) {
                std::cerr << "training diverged (non-finite loss), aborting stage\n";
                hist.diverged = true;
                break;
            }
            opt.scale_grad(1.0 / k);
            opt.clip_grad(config.clip_norm);
            opt.step();
            loss_sum += batch_loss;
            ++loss_count;
        }
        if (hist.diverged) break;
        EpochRecord rec;
        rec.train_loss = loss_count ? loss_sum / loss_count : 0.0;
        rec.val_metric = validation_metric(model, config.task, data.validation, tokens);
        hist.records.push_back(rec);
        if (hist.best_epoch < 0 || rec.val_metric > hist.best_val) {
            hist.best_epoch = epoch;
            hist.best_val = rec.val_metric;
            best = take_snapshot(model);
        }
    }
    if (best) restore_snapshot(model, *best);
    model.history.push_back(std::move(hist));
}

}  // namespace

TrainedModel train(EncoderBundle bundle, const ExampleSplits& data, const TrainConfig& config,
                   std::uint64_t seed) {
    TrainedModel model{std::move(bundle.encoder), std::move(bundle.tokenizer), {}, {}, {}};
    train_stage(model, data, config, seed, task_name(config.task));
    return model;
}

TrainedModel chain_word_sim_then_sts(EncoderBundle bundle, const ExampleSplits& word_data,
                                     const ExampleSplits& sts_data,
                                     const TrainConfig& sts_config,
                                     const TrainConfig& word_config, std::uint64_t seed) {
    if (word_config.cut_layer != sts_config.cut_layer)
        throw ConfigError("chained stages must fine-tune the same layer: word stage l=" +
                          std::to_string(word_config.cut_layer) + ", sts stage l=" +
                          std::to_string(sts_config.cut_layer));
    if (word_config.task != Task::WordSim || sts_config.task != Task::STS)
        throw ConfigError("chain_word_sim_then_sts: stage tasks must be word_sim then sts");
    TrainedModel model{std::move(bundle.encoder), std::move(bundle.tokenizer), {}, {}, {}};
    train_stage(model, word_data, word_config, seed, "word_sim");
    train_stage(model, sts_data, sts_config, seed, "sts");
    return model;
}

EvalReport evaluate_sts(const TrainedModel& model, const std::vector<Example>& split) {
    TokenCache tokens(model.tokenizer, model.encoder.config().max_position);
    std::vector<double> scores, targets;
    for (const auto& ex : split) {
        Vec u = mean_pool(model.encoder.encode(tokens.ids(ex.text_a)), model.encoder.cut_layer());
        Vec v = mean_pool(model.encoder.encode(tokens.ids(ex.text_b)), model.encoder.cut_layer());
        scores.push_back(cosine_similarity(u, v));
        targets.push_back(ex.target);
    }
    EvalReport report;
    report.n = split.size();
    report.spearman = spearman(scores, targets);
    report.pearson = pearson(scores, targets);
    return report;
}

EvalReport evaluate_classification(const TrainedModel& model, Task task,
                                   const std::vector<Example>& split,
                                   const std::vector<Example>& validation) {
    TokenCache tokens(model.tokenizer, model.encoder.config().max_position);
    EvalReport report;
    report.n = split.size();
    if (task == Task::Entailment) {
        std::vector<int> preds, labels;
        for (const auto& ex : split) {
            Vec u = mean_pool(model.encoder.encode(tokens.ids(ex.text_a)),
                              model.encoder.cut_layer());
            Vec v = mean_pool(model.encoder.encode(tokens.ids(ex.text_b)),
                              model.encoder.cut_layer());
            preds.push_back(model.entailment_head->predict(u, v));
            labels.push_back(static_cast<int>(ex.target));
        }
        report.f1 = macro_f1(preds, labels, 3);  // macro averaging (documented choice)
        return report;
    }
    auto score_split = [&](const std::vector<Example>& part, std::vector<double>& scores,
                           std::vector<int>& labels) {
        for (const auto& ex : part) {
            Vec u = mean_pool(model.encoder.encode(tokens.ids(ex.text_a)),
                              model.encoder.cut_layer());
            Vec v = mean_pool(model.encoder.encode(tokens.ids(ex.text_b)),
                              model.encoder.cut_layer());
            scores.push_back(cosine_similarity(u, v));
            labels.push_back(static_cast<int>(ex.target));
        }
    };
    std::vector<double> scores, val_scores;
    std::vector<int> labels, val_labels;
    score_split(split, scores, labels);
    score_split(validation, val_scores, val_labels);
    auto [f1, thr] = f1_with_threshold(scores, labels, val_scores, val_labels);
    report.f1 = f1;
    report.threshold = thr;
    return report;
}

std::string history_json(const std::vector<StageHistory>& history) {
    json j = json::array();
    for (const auto& h : history) {
        json stage;
        stage["stage"] = h.stage;
        stage["epochs"] = h.epochs;
        stage["best_epoch"] = h.best_epoch;
        stage["best_val"] = h.best_val;
        stage["diverged"] = h.diverged;
        for (const auto& r : h.records)
            stage["records"].push_back({{"train_loss", r.train_loss},
                                        {"val_metric", r.val_metric}});
        if (h.records.empty()) stage["records"] = json::array();
        j.push_back(stage);
    }
    return j.dump(2) + "\n";
}

}  // namespace tmft
