#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazeformer/tensor.hpp"
#include "gazeformer/types.hpp"

namespace gazeformer {

enum class Variant { Full, NoDur, NoReg, RandomTargetEmbed };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    int d = 512;
    int n_enc = 6;
    int n_dec = 6;
    int heads = 8;
    int L = 7;   // max scanpath length, initial fixation included
    int h = 20;
    int w = 32;
    int C = 2048;
    int d_text = 768;
    double t_max_ms = 5000.0;  // duration normalization scale
    Variant variant = Variant::Full;

    void validate() const;
    // Small configuration used throughout the test suite.
    static ModelConfig tiny();
};

struct FeatureBundle {
    Tensor image_features;   // [C, h, w]
    Tensor target_embedding; // [d_text]
    std::string image_id;
    std::string target_name;
};

struct FixationQuerySet {
    Tensor queries;  // [L x d], learnable
    double x0 = 0.5; // normalized initial fixation
    double y0 = 0.5;
};

struct FixationOutput {
    // Each [L x 1]; normalized coordinate / duration scale.
    Tensor mu_x, mu_y, mu_t;
    Tensor lambda_x, lambda_y, lambda_t;
    Tensor valid_prob;        // [L x 1], valid-class probability
    Tensor patch_probs;       // [L x hw], NoReg only
};

struct EncoderLayerWeights {
    MhaWeights self_attn;
    Linear ff1, ff2;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct DecoderLayerWeights {
    MhaWeights self_attn, cross_attn;
    Linear ff1, ff2;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
};

struct Mlp2 {
    Linear l1, l2;  // d -> d -> out, ReLU between
};

struct ModelWeights {
    ModelConfig cfg;
    Linear input_proj;       // C -> d
    std::vector<EncoderLayerWeights> enc;
    Linear target_proj;      // d_text -> d
    Linear image_mod_proj;   // d -> d
    Linear joint_proj;       // 2d -> d
    Tensor queries;          // [L x d]
    std::vector<DecoderLayerWeights> dec;
    Mlp2 head_mu_x, head_mu_y, head_mu_t;
    Mlp2 head_lambda_x, head_lambda_y, head_lambda_t;
    Mlp2 head_valid;         // out = 2
    Mlp2 head_patch;         // out = h*w, NoReg only

    static ModelWeights init(const ModelConfig& cfg, uint64_t seed);

    // Stable-order traversal of every learnable parameter.
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    std::vector<Tensor> parameters();
};

// Fixed sinusoidal 2D positional encoding over an h x w grid.
Tensor positional_encoding_2d(int h, int w, int d);
// Same construction at a single (possibly fractional) grid position.
Tensor positional_encoding_point(double row, double col, int d);

class TargetEmbeddingProvider {
public:
    virtual ~TargetEmbeddingProvider() = default;
    virtual Tensor embed(const std::string& name) = 0;
};

// Deterministic seeded-hash embeddings; accepts any non-empty string.
class HashEmbeddingProvider : public TargetEmbeddingProvider {
public:
    HashEmbeddingProvider(int d_text, uint64_t seed);
    Tensor embed(const std::string& name) override;

private:
    int d_text_;
    uint64_t seed_;
};

// Table of precomputed language-model vectors loaded from a JSON file
// ({"name": [floats], ...}); optionally falls back to hash embeddings.
class FileEmbeddingProvider : public TargetEmbeddingProvider {
public:
    FileEmbeddingProvider(const std::string& path, int d_text,
                          bool hash_fallback, uint64_t fallback_seed = 0);
    Tensor embed(const std::string& name) override;
    std::vector<std::string> known_targets() const;

private:
    std::map<std::string, std::vector<double>> table_;
    int d_text_;
    bool hash_fallback_;
    uint64_t fallback_seed_;
};

Tensor embed_target(const std::string& name, TargetEmbeddingProvider& provider,
                    const ModelConfig& cfg);

Tensor encode_image(const Tensor& raw, ModelWeights& w, const ModelConfig& cfg);
Tensor joint_embed(const Tensor& f_image, const Tensor& f_target, ModelWeights& w);
// n_queries <= L restricts decoding to the first queries (sequential mode).
Tensor decode_fixations(const Tensor& f_joint, const FixationQuerySet& qs,
                        ModelWeights& w, const ModelConfig& cfg,
                        int n_queries = -1);
FixationOutput predict_heads(const Tensor& f_dec, ModelWeights& w,
                             const ModelConfig& cfg);
FixationOutput model_forward(const FeatureBundle& bundle, ModelWeights& w,
                             const ModelConfig& cfg, double x0 = 0.5,
                             double y0 = 0.5);

struct SampleOptions {
    double img_w = 1680.0;
    double img_h = 1050.0;
    bool deterministic = false;
    double x0 = 0.5;
    double y0 = 0.5;
};

Scanpath sample_scanpath(const FixationOutput& out, std::mt19937_64& rng,
                         const ModelConfig& cfg, const SampleOptions& opt);

std::vector<Scanpath> predict(const FeatureBundle& bundle, ModelWeights& w,
                              const ModelConfig& cfg, int n_samples,
                              uint64_t seed, const SampleOptions& opt);

// Sequential reference mode: re-runs the decoder per emitted fixation.
// Exists to measure latency scaling, not to match parallel-mode samples.
Scanpath predict_autoregressive(const FeatureBundle& bundle, ModelWeights& w,
                                const ModelConfig& cfg, uint64_t seed,
                                const SampleOptions& opt);

void save_checkpoint(const std::string& path, ModelWeights& w);
ModelWeights load_checkpoint(const std::string& path);

}  // namespace gazeformer
