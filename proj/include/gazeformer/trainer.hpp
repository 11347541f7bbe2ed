#pragma once

#include <array>
#include <string>
#include <vector>

#include "gazeformer/data.hpp"
#include "gazeformer/model.hpp"
#include "gazeformer/tensor.hpp"

namespace gazeformer {

struct TrainConfig {
    int batch_size = 8;
    double lr = 1e-3;
    int steps = 2000;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int checkpoint_every = 0;  // 0: final checkpoint only
};

// Per-step Gaussian noise for the reparameterized draw, one epsilon per
// fixation slot. All zero in deterministic evaluation.
struct NoiseDraw {
    std::vector<double> ex, ey, et;  // length L
};

NoiseDraw draw_noise(int L, std::mt19937_64& rng);
NoiseDraw zero_noise(int L);

// x = mu + eps * exp(0.5 * lambda), per slot, gradient through mu and lambda.
struct SampledCoords {
    Tensor x, y, t;  // each [L x 1]; t undefined for noDur
};

SampledCoords reparam_sample(const FixationOutput& out, const NoiseDraw& noise,
                             const ModelConfig& cfg);

// Masked L1 over the first l ground-truth slots, mean over l.
Tensor loss_xyt(const SampledCoords& pred, const PaddedSample& gt,
                const ModelConfig& cfg);
// NoReg: cross-entropy over the patch grid plus the duration L1 term.
Tensor loss_xyt_patch(const FixationOutput& out, const SampledCoords& pred,
                      const PaddedSample& gt, const ModelConfig& cfg);
// Mean binary NLL over all L slots, probabilities clamped at 1e-7.
Tensor loss_val(const Tensor& valid_prob, const std::vector<int>& valid_gt);

struct BatchItem {
    FeatureBundle bundle;
    PaddedSample gt;
};

struct BatchLoss {
    Tensor total;  // scalar graph node
    double xyt = 0.0;
    double val = 0.0;
};

BatchLoss total_loss(const std::vector<BatchItem>& batch, ModelWeights& w,
                     const ModelConfig& cfg, const std::vector<NoiseDraw>& noise);

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long t = 0;
};

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const TrainConfig& cfg);

struct LogRow {
    int step;
    double xyt, val, total;
};

struct TrainResult {
    ModelWeights weights;
    std::vector<LogRow> log;
    double final_loss = 0.0;
};

// Minibatch training over seeded shuffles. Weights are rounded to 32-bit
// float precision after every step so in-memory state matches the
// checkpoint representation exactly.
TrainResult train(const Dataset& ds, FeatureProvider& features,
                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::string& loss_csv_path = "",
                  const std::string& checkpoint_path = "");

void write_loss_csv(const std::string& path, const std::vector<LogRow>& log);

}  // namespace gazeformer
