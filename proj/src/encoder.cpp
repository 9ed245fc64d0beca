#include "tmft/encoder.hpp"

#include "tmft/nn.hpp"

#include <json.hpp>

#include <cmath>
#include <iostream>

using nlohmann::json;

namespace tmft {

namespace {

constexpr double kMaskScore = -1e30;

struct RegistryEntry {
    const char* name;
    int layers, hidden, intermediate, heads, embedding, vocab;
    bool lower_case;
};

// BERT base/large are the cased checkpoints (28996-token vocab); all other
// entries use the uncased 30522-token vocab. ELECTRA generators keep the
// discriminator's embedding width and project down to 256-wide blocks.
const RegistryEntry kRegistry[] = {
    {"bert_tiny", 2, 128, 512, 2, 128, 30522, true},
    {"bert_mini", 4, 256, 1024, 4, 256, 30522, true},
    {"bert_small", 4, 512, 2048, 8, 512, 30522, true},
    {"bert_medium", 8, 512, 2048, 8, 512, 30522, true},
    {"bert_base", 12, 768, 3072, 12, 768, 28996, false},
    {"bert_large", 24, 1024, 4096, 16, 1024, 28996, false},
    {"electra_d_small", 12, 256, 1024, 4, 128, 30522, true},
    {"electra_d_base", 12, 768, 3072, 12, 768, 30522, true},
    {"electra_d_large", 24, 1024, 4096, 16, 1024, 30522, true},
    {"electra_g_small", 12, 256, 1024, 4, 128, 30522, true},
    {"electra_g_base", 12, 256, 1024, 4, 768, 30522, true},
    {"electra_g_large", 24, 256, 1024, 4, 1024, 30522, true},
};

std::string block_prefix(int i) { return "block" + std::to_string(i) + "."; }

}  // namespace

std::string ModelConfig::to_json() const {
    json j;
    j["model_id"] = model_id;
    j["vocab_size"] = vocab_size;
    j["embedding_size"] = embedding_size;
    j["hidden_size"] = hidden_size;
    j["num_layers"] = num_layers;
    j["num_heads"] = num_heads;
    j["intermediate_size"] = intermediate_size;
    j["max_position"] = max_position;
    j["type_vocab"] = type_vocab;
    j["dropout"] = dropout;
    j["attention_dropout"] = attention_dropout;
    j["layer_norm_eps"] = layer_norm_eps;
    j["lower_case"] = lower_case;
    return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.model_id = j.at("model_id");
    c.vocab_size = j.at("vocab_size");
    c.embedding_size = j.at("embedding_size");
    c.hidden_size = j.at("hidden_size");
    c.num_layers = j.at("num_layers");
    c.num_heads = j.at("num_heads");
    c.intermediate_size = j.at("intermediate_size");
    c.max_position = j.value("max_position", 512);
    c.type_vocab = j.value("type_vocab", 2);
    c.dropout = j.value("dropout", 0.1);
    c.attention_dropout = j.value("attention_dropout", 0.1);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
    c.lower_case = j.value("lower_case", true);
    return c;
}

bool registry_has(const std::string& name) {
    for (const auto& e : kRegistry)
        if (name == e.name) return true;
    return false;
}

std::vector<std::string> registry_names() {
    std::vector<std::string> out;
    for (const auto& e : kRegistry) out.push_back(e.name);
    return out;
}

ModelConfig registry_config(const std::string& name) {
    for (const auto& e : kRegistry) {
        if (name != e.name) continue;
        ModelConfig c;
        c.model_id = e.name;
        c.vocab_size = e.vocab;
        c.embedding_size = e.embedding;
        c.hidden_size = e.hidden;
        c.num_layers = e.layers;
        c.num_heads = e.heads;
        c.intermediate_size = e.intermediate;
        c.lower_case = e.lower_case;
        return c;
    }
    throw ConfigError("unknown model id: " + name);
}

Vec mean_pool(const HiddenStates& states, int l) {
    if (l < 0 || l >= states.n_layers())
        throw ConfigError("mean_pool: layer " + std::to_string(l) + " not in [0, " +
                          std::to_string(states.n_layers() - 1) + "]");
    const Mat& x = states.layers[l];
    Vec sum = Vec::Zero(x.cols());
    int count = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (!states.mask[static_cast<std::size_t>(i)]) continue;
        sum += x.row(i).transpose();
        ++count;
    }
    if (count == 0) throw NumericError("mean_pool: all positions masked (empty sentence)");
    return sum / count;
}

TruncatedEncoder::TruncatedEncoder(const ModelConfig& config, int cut_layer)
    : config_(config), cut_layer_(cut_layer) {
    if (cut_layer < 0 || cut_layer > config.num_layers)
        throw ConfigError("cut_layer " + std::to_string(cut_layer) + " out of range [0, " +
                          std::to_string(config.num_layers) + "] for " + config.model_id);
    if (config.hidden_size % config.num_heads != 0)
        throw ConfigError("hidden size not divisible by head count");
    const int e = config.embedding_size, d = config.hidden_size, f = config.intermediate_size;
    params_.add("embeddings.word", config.vocab_size, e, true);
    params_.add("embeddings.position", config.max_position, e, true);
    params_.add("embeddings.token_type", config.type_vocab, e, true);
    params_.add("embeddings.ln_gamma", 1, e, false);
    params_.add("embeddings.ln_beta", 1, e, false);
    if (config.has_projection()) {
        params_.add("embeddings.project_w", e, d, true);
        params_.add("embeddings.project_b", 1, d, false);
    }
    for (int i = 1; i <= cut_layer; ++i) {
        const std::string p = block_prefix(i);
        params_.add(p + "attn.wq", d, d, true);
        params_.add(p + "attn.bq", 1, d, false);
        params_.add(p + "attn.wk", d, d, true);
        params_.add(p + "attn.bk", 1, d, false);
        params_.add(p + "attn.wv", d, d, true);
        params_.add(p + "attn.bv", 1, d, false);
        params_.add(p + "attn.wo", d, d, true);
        params_.add(p + "attn.bo", 1, d, false);
        params_.add(p + "ln1_gamma", 1, d, false);
        params_.add(p + "ln1_beta", 1, d, false);
        params_.add(p + "ffn.w1", d, f, true);
        params_.add(p + "ffn.b1", 1, f, false);
        params_.add(p + "ffn.w2", f, d, true);
        params_.add(p + "ffn.b2", 1, d, false);
        params_.add(p + "ln2_gamma", 1, d, false);
        params_.add(p + "ln2_beta", 1, d, false);
    }
}

void TruncatedEncoder::random_initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& t : params_.tensors()) {
        if (t.name.find("gamma") != std::string::npos) {
            t.value.setOnes();
        } else if (t.name.find("beta") != std::string::npos ||
                   t.name.find(".b") != std::string::npos) {
            t.value.setZero();
        } else {
            for (Eigen::Index r = 0; r < t.value.rows(); ++r)
                for (Eigen::Index c = 0; c < t.value.cols(); ++c) t.value(r, c) = normal(rng);
        }
    }
}

void TruncatedEncoder::load_weights(const fs::path& safetensors_file) {
    load_safetensors(safetensors_file, params_);
}

std::size_t TruncatedEncoder::count_parameters() const {
    std::size_t n = 0;
    for (const auto& t : params_.tensors()) {
        if (t.name.rfind("embeddings.project", 0) == 0) continue;
        n += static_cast<std::size_t>(t.value.size());
    }
    return n;
}

Mat TruncatedEncoder::forward(const std::vector<int>& ids, Cache& cache, bool training,
                              Rng* rng, int n_valid) const {
    const int n = static_cast<int>(ids.size());
    if (n == 0) throw DataError("forward: empty token sequence");
    if (n > config_.max_position)
        throw DataError("forward: sequence length " + std::to_string(n) +
                        " exceeds model maximum " + std::to_string(config_.max_position));
    if (n_valid < 0) n_valid = n;
    if (training && rng == nullptr) throw ConfigError("forward: training requires an rng");

    cache.ids = ids;
    cache.n_valid = n_valid;
    cache.training = training;
    cache.blocks.clear();

    const int e = config_.embedding_size, d = config_.hidden_size;
    const int heads = config_.num_heads, dh = d / heads;
    const double drop = training ? config_.dropout : 0.0;
    const double attn_drop = training ? config_.attention_dropout : 0.0;

    const Mat& word = params_.at("embeddings.word").value;
    const Mat& pos = params_.at("embeddings.position").value;
    const Mat& type = params_.at("embeddings.token_type").value;

    Mat emb(n, e);
    for (int i = 0; i < n; ++i) {
        int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= config_.vocab_size)
            throw DataError("token id out of range: " + std::to_string(id));
        emb.row(i) = word.row(id) + pos.row(i) + type.row(0);
    }
    Mat ln_out = layer_norm(emb, params_.at("embeddings.ln_gamma").value,
                            params_.at("embeddings.ln_beta").value, config_.layer_norm_eps,
                            cache.emb_ln_xhat, cache.emb_ln_rstd);
    if (drop > 0.0) {
        cache.emb_drop = dropout_mask(n, e, drop, *rng);
        ln_out = ln_out.cwiseProduct(cache.emb_drop);
    } else {
        cache.emb_drop.resize(0, 0);
    }
    if (config_.has_projection()) {
        cache.proj_in = ln_out;
        cache.x0 = ln_out * params_.at("embeddings.project_w").value;
        cache.x0.rowwise() += params_.at("embeddings.project_b").value.row(0);
    } else {
        cache.x0 = std::move(ln_out);
    }

    Mat x = cache.x0;
    for (int b = 1; b <= cut_layer_; ++b) {
        const std::string p = block_prefix(b);
        Cache::Block bc;
        bc.x = x;

        bc.q = x * params_.at(p + "attn.wq").value;
        bc.q.rowwise() += params_.at(p + "attn.bq").value.row(0);
        bc.k = x * params_.at(p + "attn.wk").value;
        bc.k.rowwise() += params_.at(p + "attn.bk").value.row(0);
        bc.v = x * params_.at(p + "attn.wv").value;
        bc.v.rowwise() += params_.at(p + "attn.bv").value.row(0);

        bc.ctx.resize(n, d);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < heads; ++h) {
            Mat s = bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose();
            s *= scale;
            for (int j = n_valid; j < n; ++j) s.col(j).setConstant(kMaskScore);
            softmax_rows(s);
            bc.probs.push_back(s);
            if (attn_drop > 0.0) {
                bc.probs_drop.push_back(dropout_mask(n, n, attn_drop, *rng));
                s = s.cwiseProduct(bc.probs_drop.back());
            }
            bc.ctx.middleCols(h * dh, dh) = s * bc.v.middleCols(h * dh, dh);
        }

        Mat a = bc.ctx * params_.at(p + "attn.wo").value;
        a.rowwise() += params_.at(p + "attn.bo").value.row(0);
        if (drop > 0.0) {
            bc.attn_drop = dropout_mask(n, d, drop, *rng);
            a = a.cwiseProduct(bc.attn_drop);
        }
        Mat r1 = x + a;
        bc.h1 = layer_norm(r1, params_.at(p + "ln1_gamma").value, params_.at(p + "ln1_beta").value,
                           config_.layer_norm_eps, bc.ln1_xhat, bc.ln1_rstd);

        bc.ffn_pre = bc.h1 * params_.at(p + "ffn.w1").value;
        bc.ffn_pre.rowwise() += params_.at(p + "ffn.b1").value.row(0);
        bc.ffn_act = bc.ffn_pre.unaryExpr([](double v) { return gelu(v); });
        Mat g = bc.ffn_act * params_.at(p + "ffn.w2").value;
        g.rowwise() += params_.at(p + "ffn.b2").value.row(0);
        if (drop > 0.0) {
            bc.ffn_drop = dropout_mask(n, d, drop, *rng);
            g = g.cwiseProduct(bc.ffn_drop);
        }
        Mat r2 = bc.h1 + g;
        bc.out = layer_norm(r2, params_.at(p + "ln2_gamma").value, params_.at(p + "ln2_beta").value,
                            config_.layer_norm_eps, bc.ln2_xhat, bc.ln2_rstd);
        x = bc.out;
        cache.blocks.push_back(std::move(bc));
    }
    return x;
}

HiddenStates TruncatedEncoder::encode(const std::vector<int>& ids, int n_valid) const {
    Cache cache;
    forward(ids, cache, /*training=*/false, nullptr, n_valid);
    HiddenStates hs;
    hs.layers.push_back(cache.x0);
    for (const auto& b : cache.blocks) hs.layers.push_back(b.out);
    hs.mask.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) hs.mask[i] = static_cast<int>(i) < cache.n_valid;
    return hs;
}

void TruncatedEncoder::backward(const Mat& d_top, const Cache& cache) {
    const int n = static_cast<int>(cache.ids.size());
    const int d = config_.hidden_size;
    const int heads = config_.num_heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat dx = d_top;
    for (int b = cut_layer_; b >= 1; --b) {
        const std::string p = block_prefix(b);
        const auto& bc = cache.blocks[static_cast<std::size_t>(b - 1)];

        Mat dr2 = layer_norm_backward(dx, bc.ln2_xhat, bc.ln2_rstd,
                                      params_.at(p + "ln2_gamma").value,
                                      params_.at(p + "ln2_gamma").grad,
                                      params_.at(p + "ln2_beta").grad);
        Mat dh1 = dr2;
        Mat dg = bc.ffn_drop.size() ? dr2.cwiseProduct(bc.ffn_drop).eval() : dr2;
        params_.at(p + "ffn.w2").grad += bc.ffn_act.transpose() * dg;
        params_.at(p + "ffn.b2").grad.row(0) += dg.colwise().sum();
        Mat dact = dg * params_.at(p + "ffn.w2").value.transpose();
        Mat dpre = dact.cwiseProduct(bc.ffn_pre.unaryExpr([](double v) { return dgelu(v); }));
        params_.at(p + "ffn.w1").grad += bc.h1.transpose() * dpre;
        params_.at(p + "ffn.b1").grad.row(0) += dpre.colwise().sum();
        dh1 += dpre * params_.at(p + "ffn.w1").value.transpose();

        Mat dr1 = layer_norm_backward(dh1, bc.ln1_xhat, bc.ln1_rstd,
                                      params_.at(p + "ln1_gamma").value,
                                      params_.at(p + "ln1_gamma").grad,
                                      params_.at(p + "ln1_beta").grad);
        dx = dr1;
        Mat da = bc.attn_drop.size() ? dr1.cwiseProduct(bc.attn_drop).eval() : dr1;
        params_.at(p + "attn.wo").grad += bc.ctx.transpose() * da;
        params_.at(p + "attn.bo").grad.row(0) += da.colwise().sum();
        Mat dctx = da * params_.at(p + "attn.wo").value.transpose();

        Mat dq = Mat::Zero(n, d), dk = Mat::Zero(n, d), dv = Mat::Zero(n, d);
        for (int h = 0; h < heads; ++h) {
            Mat dctx_h = dctx.middleCols(h * dh, dh);
            Mat probs = bc.probs[static_cast<std::size_t>(h)];
            Mat probs_dropped = bc.probs_drop.empty()
                                    ? probs
                                    : probs.cwiseProduct(bc.probs_drop[static_cast<std::size_t>(h)]).eval();
            Mat dpd = dctx_h * bc.v.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh) += probs_dropped.transpose() * dctx_h;
            Mat dp = bc.probs_drop.empty()
                         ? dpd
                         : dpd.cwiseProduct(bc.probs_drop[static_cast<std::size_t>(h)]).eval();
            Mat ds(n, n);
            for (int i = 0; i < n; ++i) {
                double dot = dp.row(i).dot(probs.row(i));
                ds.row(i) = probs.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
            }
            dq.middleCols(h * dh, dh) += scale * (ds * bc.k.middleCols(h * dh, dh));
            dk.middleCols(h * dh, dh) += scale * (ds.transpose() * bc.q.middleCols(h * dh, dh));
        }
        params_.at(p + "attn.wq").grad += bc.x.transpose() * dq;
        params_.at(p + "attn.bq").grad.row(0) += dq.colwise().sum();
        params_.at(p + "attn.wk").grad += bc.x.transpose() * dk;
        params_.at(p + "attn.bk").grad.row(0) += dk.colwise().sum();
        params_.at(p + "attn.wv").grad += bc.x.transpose() * dv;
        params_.at(p + "attn.bv").grad.row(0) += dv.colwise().sum();
        dx += dq * params_.at(p + "attn.wq").value.transpose() +
              dk * params_.at(p + "attn.wk").value.transpose() +
              dv * params_.at(p + "attn.wv").value.transpose();
    }

    Mat d_ln_out;
    if (config_.has_projection()) {
        params_.at("embeddings.project_w").grad += cache.proj_in.transpose() * dx;
        params_.at("embeddings.project_b").grad.row(0) += dx.colwise().sum();
        d_ln_out = dx * params_.at("embeddings.project_w").value.transpose();
    } else {
        d_ln_out = std::move(dx);
    }
    if (cache.emb_drop.size()) d_ln_out = d_ln_out.cwiseProduct(cache.emb_drop);
    Mat d_emb = layer_norm_backward(d_ln_out, cache.emb_ln_xhat, cache.emb_ln_rstd,
                                    params_.at("embeddings.ln_gamma").value,
                                    params_.at("embeddings.ln_gamma").grad,
                                    params_.at("embeddings.ln_beta").grad);
    Mat& dword = params_.at("embeddings.word").grad;
    Mat& dpos = params_.at("embeddings.position").grad;
    Mat& dtype = params_.at("embeddings.token_type").grad;
    for (int i = 0; i < n; ++i) {
        dword.row(cache.ids[static_cast<std::size_t>(i)]) += d_emb.row(i);
        dpos.row(i) += d_emb.row(i);
        dtype.row(0) += d_emb.row(i);
    }
}

void TruncatedEncoder::save(const fs::path& dir, const std::string& init_mode) const {
    fs::create_directories(dir);
    write_file(dir / "config.json", config_.to_json());
    save_safetensors(dir / "model.safetensors", params_);
    json manifest;
    manifest["base_model"] = config_.model_id;
    manifest["cut_layer"] = cut_layer_;
    manifest["init_mode"] = init_mode;
    manifest["parameter_count"] = count_parameters();
    atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

EncoderBundle load_bundle(const fs::path& dir, int cut_layer) {
    if (!fs::exists(dir / "config.json"))
        throw ConfigError("not a checkpoint directory (no config.json): " + dir.string());
    ModelConfig cfg = ModelConfig::from_json(read_file(dir / "config.json"));
    if (cut_layer < 0) {
        cut_layer = cfg.num_layers;
        // truncated checkpoints only store blocks up to their cut
        if (fs::exists(dir / "manifest.json")) {
            try {
                cut_layer = nlohmann::json::parse(read_file(dir / "manifest.json"))
                                .value("cut_layer", cut_layer);
            } catch (const nlohmann::json::exception&) {
            }
        }
    }
    TruncatedEncoder enc(cfg, cut_layer);
    enc.load_weights(dir / "model.safetensors");
    auto tok = WordPieceTokenizer::from_file(dir / "vocab.txt", cfg.lower_case);
    if (tok.vocab_size() != cfg.vocab_size)
        throw DataError("vocab size mismatch: vocab.txt has " +
                        std::to_string(tok.vocab_size()) + ", config says " +
                        std::to_string(cfg.vocab_size));
    return EncoderBundle{std::move(enc), std::move(tok)};
}

void save_bundle(const TruncatedEncoder& encoder, const WordPieceTokenizer& tokenizer,
                 const fs::path& dir, const std::string& init_mode) {
    encoder.save(dir, init_mode);
    tokenizer.save(dir / "vocab.txt");
}

namespace {

// Char-level fallback vocabulary for random-init runs without a checkpoint.
std::vector<std::string> placeholder_vocab(int size) {
    std::vector<std::string> v = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    for (char c = 'a'; c <= 'z' && static_cast<int>(v.size()) < size; ++c)
        v.emplace_back(1, c);
    for (char c = '0'; c <= '9' && static_cast<int>(v.size()) < size; ++c)
        v.emplace_back(1, c);
    for (char c = 'a'; c <= 'z' && static_cast<int>(v.size()) < size; ++c)
        v.push_back(std::string("##") + c);
    for (char c = '0'; c <= '9' && static_cast<int>(v.size()) < size; ++c)
        v.push_back(std::string("##") + c);
    for (const char* p = "'.,;:!?-()"; *p && static_cast<int>(v.size()) < size; ++p)
        v.emplace_back(1, *p);
    int i = 0;
    while (static_cast<int>(v.size()) < size) v.push_back("unused" + std::to_string(i++));
    return v;
}

}  // namespace

EncoderBundle build_truncated_encoder(const TruncationSpec& spec,
                                      const fs::path& checkpoint_root) {
    fs::path dir = spec.base_model;
    if (!fs::exists(dir / "config.json") && !checkpoint_root.empty())
        dir = checkpoint_root / spec.base_model;

    if (fs::exists(dir / "config.json")) {
        auto bundle = load_bundle(dir, spec.cut_layer);
        if (spec.random_init) bundle.encoder.random_initialize(spec.seed);
        return bundle;
    }

    if (!registry_has(spec.base_model))
        throw ConfigError("base_model: '" + spec.base_model +
                          "' is neither a checkpoint directory nor a known model id");
    if (!spec.random_init)
        throw ConfigError("base_model: no checkpoint found for '" + spec.base_model +
                          "' and init_mode is pretrained");
    ModelConfig cfg = registry_config(spec.base_model);
    TruncatedEncoder enc(cfg, spec.cut_layer);
    enc.random_initialize(spec.seed);
    WordPieceTokenizer tok(placeholder_vocab(cfg.vocab_size), cfg.lower_case);
    return EncoderBundle{std::move(enc), std::move(tok)};
}

Vec encode_pooled(const TruncatedEncoder& encoder, const WordPieceTokenizer& tok,
                  const std::string& text) {
    auto ids = tok.encode(text, encoder.config().max_position);
    auto states = encoder.encode(ids);
    return mean_pool(states, encoder.cut_layer());
}

}  // namespace tmft
