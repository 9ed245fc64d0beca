#pragma once

#include "tmft/common.hpp"
#include "tmft/params.hpp"
#include "tmft/tokenizer.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tmft {

struct ModelConfig {
    std::string model_id;
    int vocab_size = 0;
    int embedding_size = 0;  // width of the embedding tables
    int hidden_size = 0;     // width of the transformer blocks
    int num_layers = 0;      // L, transformer blocks in the full model
    int num_heads = 0;
    int intermediate_size = 0;
    int max_position = 512;
    int type_vocab = 2;
    double dropout = 0.1;
    double attention_dropout = 0.1;
    double layer_norm_eps = 1e-12;
    bool lower_case = true;

    bool has_projection() const { return embedding_size != hidden_size; }
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// Architecture presets for the model families under study. BERT base/large
// are the cased checkpoints; ELECTRA small and all generators project a
// narrower embedding table up to the block width.
ModelConfig registry_config(const std::string& name);
std::vector<std::string> registry_names();
bool registry_has(const std::string& name);

struct TruncationSpec {
    std::string base_model;  // registry name or checkpoint directory
    int cut_layer = 0;       // l in [0, L]; 0 keeps only the input embeddings
    bool random_init = false;
    std::uint64_t seed = 0;
};

// E tensor of one sequence: cut_layer+1 entries of N x d, plus the token mask.
struct HiddenStates {
    std::vector<Mat> layers;
    std::vector<bool> mask;  // true = real token, false = padding

    int n_layers() const { return static_cast<int>(layers.size()); }
};

// Arithmetic mean over non-masked positions of layer l.
Vec mean_pool(const HiddenStates& states, int l);

class TruncatedEncoder {
  public:
    // Allocates parameters (zeroed) for embeddings plus blocks 1..cut_layer.
    TruncatedEncoder(const ModelConfig& config, int cut_layer);

    void random_initialize(std::uint64_t seed);
    void load_weights(const fs::path& safetensors_file);

    const ModelConfig& config() const { return config_; }
    int cut_layer() const { return cut_layer_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    // Reported count: embeddings plus retained blocks. The embedding-width
    // projection and any task heads are excluded, matching how truncated
    // model sizes are published.
    std::size_t count_parameters() const;

    // Deterministic eval-mode forward returning all cut_layer+1 layer outputs.
    // Padding is assumed to trail the real tokens; n_valid <= ids.size().
    HiddenStates encode(const std::vector<int>& ids, int n_valid = -1) const;

    struct Cache;
    // Forward to the cut layer. With training=true, dropout is applied using
    // rng and every intermediate needed by backward() is kept in the cache.
    Mat forward(const std::vector<int>& ids, Cache& cache, bool training, Rng* rng,
                int n_valid = -1) const;
    // Accumulates parameter gradients from d(loss)/d(top layer output).
    void backward(const Mat& d_top, const Cache& cache);

    void save(const fs::path& dir, const std::string& init_mode) const;

  private:
    ModelConfig config_;
    int cut_layer_;
    ParameterStore params_;
};

struct TruncatedEncoder::Cache {
    std::vector<int> ids;
    int n_valid = 0;
    bool training = false;
    Mat emb_ln_xhat;
    Vec emb_ln_rstd;
    Mat emb_drop;  // inverted-dropout scale factors, empty in eval
    Mat proj_in;   // embedding output fed to the projection (post dropout)
    Mat x0;        // layer-0 state, N x hidden
    struct Block {
        Mat x;
        std::vector<Mat> probs;      // per-head attention, N x N
        std::vector<Mat> probs_drop;
        Mat q, k, v, ctx;
        Mat attn_drop;
        Mat ln1_xhat;
        Vec ln1_rstd;
        Mat h1;
        Mat ffn_pre, ffn_act;
        Mat ffn_drop;
        Mat ln2_xhat;
        Vec ln2_rstd;
        Mat out;
    };
    std::vector<Block> blocks;
};

// Checkpoint archive = directory with config.json, model.safetensors,
// vocab.txt and a truncation manifest.
struct EncoderBundle {
    TruncatedEncoder encoder;
    WordPieceTokenizer tokenizer;
};

// cut_layer = -1 loads the full depth. Blocks above the cut are ignored.
EncoderBundle load_bundle(const fs::path& dir, int cut_layer = -1);
void save_bundle(const TruncatedEncoder& encoder, const WordPieceTokenizer& tokenizer,
                 const fs::path& dir, const std::string& init_mode);

// Resolves a TruncationSpec: checkpoint directory (pretrained) or registry
// architecture (random init). Pretrained from a bare registry name is a
// configuration error unless `checkpoint_root`/name exists.
EncoderBundle build_truncated_encoder(const TruncationSpec& spec,
                                      const fs::path& checkpoint_root = {});

// Convenience: encode a sentence and mean-pool its top retained layer.
Vec encode_pooled(const TruncatedEncoder& encoder, const WordPieceTokenizer& tok,
                  const std::string& text);

}  // namespace tmft
