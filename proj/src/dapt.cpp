#include "tmft/dapt.hpp"

#include "tmft/nn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

using nlohmann::json;

namespace tmft {

MaskedSequence mask_tokens(const std::vector<int>& ids, double mask_probability, Rng& rng,
                           const WordPieceTokenizer& tok) {
    if (mask_probability < 0.0 || mask_probability >= 1.0)
        throw ConfigError("mask_probability must be in [0,1)");
    MaskedSequence out;
    out.corrupted = ids;
    out.labels.assign(ids.size(), kIgnoreLabel);
    if (mask_probability == 0.0) return out;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> random_token(0, tok.vocab_size() - 1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (tok.is_special(ids[i])) continue;
        if (unit(rng) >= mask_probability) continue;
        out.labels[i] = ids[i];
        ++out.n_selected;
        double r = unit(rng);
        if (r < 0.8)
            out.corrupted[i] = tok.mask_id();
        else if (r < 0.9)
            out.corrupted[i] = random_token(rng);
        // else: keep the original token
    }
    return out;
}

MaskedSequence mask_tokens(const std::vector<int>& ids, double mask_probability,
                           std::uint64_t seed, const WordPieceTokenizer& tok) {
    Rng rng(seed);
    return mask_tokens(ids, mask_probability, rng, tok);
}

MlmHead::MlmHead(const ModelConfig& config) {
    const int d = config.hidden_size, e = config.embedding_size;
    params.add("mlm.transform_w", d, e, true);
    params.add("mlm.transform_b", 1, e, false);
    params.add("mlm.ln_gamma", 1, e, false);
    params.add("mlm.ln_beta", 1, e, false);
    params.add("mlm.out_bias", 1, config.vocab_size, false);
}

void MlmHead::random_initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    auto& w = params.at("mlm.transform_w").value;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = normal(rng);
    params.at("mlm.ln_gamma").value.setOnes();
}

namespace {

// Cross-entropy over the selected positions; logits decoded against the tied
// word-embedding table. Returns summed loss; accumulates head gradients and
// the tied-embedding gradient, and fills d_top for the encoder backward.
double mlm_loss_backward(TruncatedEncoder& encoder, MlmHead& head, const Mat& top,
                         const MaskedSequence& masked, Mat& d_top) {
    const Mat& word = encoder.params().at("embeddings.word").value;
    Mat& dword = encoder.params().at("embeddings.word").grad;
    auto& tw = head.params.at("mlm.transform_w");
    auto& tb = head.params.at("mlm.transform_b");
    auto& lg = head.params.at("mlm.ln_gamma");
    auto& lb = head.params.at("mlm.ln_beta");
    auto& ob = head.params.at("mlm.out_bias");

    std::vector<int> rows;
    for (std::size_t i = 0; i < masked.labels.size(); ++i)
        if (masked.labels[i] != kIgnoreLabel) rows.push_back(static_cast<int>(i));
    d_top = Mat::Zero(top.rows(), top.cols());
    if (rows.empty()) return 0.0;

    const int m = static_cast<int>(rows.size());
    Mat hs(m, top.cols());
    for (int r = 0; r < m; ++r) hs.row(r) = top.row(rows[static_cast<std::size_t>(r)]);

    Mat pre = hs * tw.value;
    pre.rowwise() += tb.value.row(0);
    Mat act = pre.unaryExpr([](double v) { return gelu(v); });
    Mat xhat;
    Vec rstd;
    Mat z = layer_norm(act, lg.value, lb.value, 1e-12, xhat, rstd);
    Mat logits = z * word.transpose();
    logits.rowwise() += ob.value.row(0);

    double loss = 0.0;
    Mat dlogits(m, logits.cols());
    for (int r = 0; r < m; ++r) {
        int target = masked.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
        double mx = logits.row(r).maxCoeff();
        Eigen::RowVectorXd ez = (logits.row(r).array() - mx).exp();
        double sum = ez.sum();
        loss += -(logits(r, target) - mx - std::log(sum));
        dlogits.row(r) = ez / sum;
        dlogits(r, target) -= 1.0;
    }

    Mat dz = dlogits * word;
    dword += dlogits.transpose() * z;
    ob.grad.row(0) += dlogits.colwise().sum();
    Mat dact = layer_norm_backward(dz, xhat, rstd, lg.value, lg.grad, lb.grad);
    Mat dpre = dact.cwiseProduct(pre.unaryExpr([](double v) { return dgelu(v); }));
    tw.grad += hs.transpose() * dpre;
    tb.grad.row(0) += dpre.colwise().sum();
    Mat dhs = dpre * tw.value.transpose();
    for (int r = 0; r < m; ++r) d_top.row(rows[static_cast<std::size_t>(r)]) = dhs.row(r);
    return loss;
}

}  // namespace

DaptResult dapt_pretrain(EncoderBundle bundle, const SentenceCorpus& corpus,
                         const DaptConfig& config, std::uint64_t seed) {
    TruncatedEncoder& encoder = bundle.encoder;
    if (encoder.cut_layer() != encoder.config().num_layers)
        throw ConfigError("DAPT requires the full (untruncated) encoder");
    MlmHead head(encoder.config());
    head.random_initialize(seed ^ 0x9e3779b97f4a7c15ull);

    Rng rng(seed);
    std::vector<std::vector<int>> sequences;
    sequences.reserve(corpus.sentences.size());
    for (const auto& s : corpus.sentences)
        sequences.push_back(bundle.tokenizer.encode(s, encoder.config().max_position));

    std::vector<ParamView> views = views_of(encoder.params());
    for (auto v : views_of(head.params)) views.push_back(v);
    AdamW opt(views, config.learning_rate, config.weight_decay);

    DaptResult result{std::move(bundle), {}};
    TruncatedEncoder& enc = result.bundle.encoder;

    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs && !result.history.diverged; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t epoch_tokens = 0;
        double window_loss = 0.0;
        std::size_t window_tokens = 0;
        int micro_in_window = 0;
        opt.zero_grad();

        auto do_step = [&] {
            if (window_tokens > 0) {
                if (!std::isfinite(window_loss)) {
                    std::cerr << "DAPT diverged (non-finite loss), aborting\n";
                    result.history.diverged = true;
                    return;
                }
                opt.scale_grad(1.0 / static_cast<double>(window_tokens));
                opt.clip_grad(config.clip_norm);
                opt.step();
                ++result.history.optimizer_steps;
            }
            opt.zero_grad();
            window_loss = 0.0;
            window_tokens = 0;
            micro_in_window = 0;
        };

        const std::size_t bs = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0; start < order.size() && !result.history.diverged;
             start += bs) {
            std::size_t end = std::min(order.size(), start + bs);
            for (std::size_t i = start; i < end; ++i) {
                const auto& ids = sequences[order[i]];
                auto masked = mask_tokens(ids, config.mask_probability, rng,
                                          result.bundle.tokenizer);
                if (masked.n_selected == 0) continue;
                TruncatedEncoder::Cache cache;
                Mat top = enc.forward(masked.corrupted, cache, true, &rng);
                Mat d_top;
                double loss = mlm_loss_backward(enc, head, top, masked, d_top);
                enc.backward(d_top, cache);
                window_loss += loss;
                epoch_loss += loss;
                window_tokens += static_cast<std::size_t>(masked.n_selected);
                epoch_tokens += static_cast<std::size_t>(masked.n_selected);
            }
            if (++micro_in_window == config.grad_accum_steps) do_step();
        }
        if (!result.history.diverged && micro_in_window > 0) do_step();
        result.history.epoch_mean_loss.push_back(
            epoch_tokens ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0);
    }
    return result;
}

void save_dapt_checkpoint(const DaptResult& result, const SentenceCorpus& corpus,
                          const DaptConfig& config, const fs::path& dir) {
    save_bundle(result.bundle.encoder, result.bundle.tokenizer, dir, "dapt");
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : corpus.sentences) {
        h = fnv1a64(s, h);
        h = fnv1a64("\n", h);
    }
    json manifest;
    manifest["corpus_checksum"] = to_hex(h);
    manifest["corpus_sentences"] = corpus.sentences.size();
    manifest["config"] = {{"batch_size", config.batch_size},
                          {"grad_accum_steps", config.grad_accum_steps},
                          {"epochs", config.epochs},
                          {"mask_probability", config.mask_probability},
                          {"learning_rate", config.learning_rate},
                          {"weight_decay", config.weight_decay},
                          {"clip_norm", config.clip_norm}};
    manifest["epoch_mean_loss"] = result.history.epoch_mean_loss;
    manifest["diverged"] = result.history.diverged;
    manifest["optimizer_steps"] = result.history.optimizer_steps;
    atomic_write_file(dir / "dapt_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace tmft
