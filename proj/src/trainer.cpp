#include "gazeformer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "gazeformer/detail/hash.hpp"

namespace gazeformer {

NoiseDraw draw_noise(int L, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    NoiseDraw n;
    n.ex.resize(L);
    n.ey.resize(L);
    n.et.resize(L);
    for (int i = 0; i < L; ++i) {
        n.ex[i] = normal(rng);
        n.ey[i] = normal(rng);
        n.et[i] = normal(rng);
    }
    return n;
}

NoiseDraw zero_noise(int L) {
    NoiseDraw n;
    n.ex.assign(L, 0.0);
    n.ey.assign(L, 0.0);
    n.et.assign(L, 0.0);
    return n;
}

namespace {

Tensor apply_reparam(const Tensor& mu, const Tensor& lambda,
                     const std::vector<double>& eps) {
    const int L = mu.rows();
    Tensor eps_t({L, 1}, std::vector<double>(eps.begin(), eps.begin() + L));
    return add(mu, mul(eps_t, exp_op(scale(lambda, 0.5))));
}

}  // namespace

SampledCoords reparam_sample(const FixationOutput& out, const NoiseDraw& noise,
                             const ModelConfig& cfg) {
    SampledCoords s;
    if (cfg.variant != Variant::NoReg) {
        s.x = apply_reparam(out.mu_x, out.lambda_x, noise.ex);
        s.y = apply_reparam(out.mu_y, out.lambda_y, noise.ey);
    }
    if (cfg.variant != Variant::NoDur)
        s.t = apply_reparam(out.mu_t, out.lambda_t, noise.et);
    return s;
}

Tensor loss_xyt(const SampledCoords& pred, const PaddedSample& gt,
                const ModelConfig& cfg) {
    if (gt.l == 0)
        throw std::logic_error("loss_xyt: ground truth scanpath is empty");
    const int l = gt.l;
    Tensor gx({l, 1}, std::vector<double>(gt.xs.begin(), gt.xs.begin() + l));
    Tensor gy({l, 1}, std::vector<double>(gt.ys.begin(), gt.ys.begin() + l));
    Tensor acc = add(sum(abs_val(sub(slice_rows(pred.x, 0, l), gx))),
                     sum(abs_val(sub(slice_rows(pred.y, 0, l), gy))));
    if (cfg.variant != Variant::NoDur) {
        Tensor gtt({l, 1}, std::vector<double>(gt.ts.begin(), gt.ts.begin() + l));
        acc = add(acc, sum(abs_val(sub(slice_rows(pred.t, 0, l), gtt))));
    }
    return scale(acc, 1.0 / l);
}

Tensor loss_xyt_patch(const FixationOutput& out, const SampledCoords& pred,
                      const PaddedSample& gt, const ModelConfig& cfg) {
    if (gt.l == 0)
        throw std::logic_error("loss_xyt_patch: ground truth scanpath is empty");
    const int l = gt.l;
    Tensor acc = Tensor::scalar(0.0);
    for (int i = 0; i < l; ++i) {
        const int col = std::min(cfg.w - 1, static_cast<int>(gt.xs[i] * cfg.w));
        const int row = std::min(cfg.h - 1, static_cast<int>(gt.ys[i] * cfg.h));
        const int idx = row * cfg.w + col;
        Tensor p = slice_cols(slice_rows(out.patch_probs, i, i + 1), idx, idx + 1);
        acc = add(acc, scale(sum(log_op(clamp(p, 1e-7, 1.0))), -1.0));
    }
    if (cfg.variant != Variant::NoDur) {
        Tensor gtt({l, 1}, std::vector<double>(gt.ts.begin(), gt.ts.begin() + l));
        acc = add(acc, sum(abs_val(sub(slice_rows(pred.t, 0, l), gtt))));
    }
    return scale(acc, 1.0 / l);
}

Tensor loss_val(const Tensor& valid_prob, const std::vector<int>& valid_gt) {
    const int L = valid_prob.rows();
    if (static_cast<int>(valid_gt.size()) != L)
        throw std::invalid_argument("loss_val: length mismatch");
    std::vector<double> g(valid_gt.begin(), valid_gt.end());
    Tensor gt({L, 1}, g);
    Tensor one_minus_gt({L, 1}, [&] {
        std::vector<double> v(g.size());
        for (size_t i = 0; i < v.size(); ++i) v[i] = 1.0 - g[i];
        return v;
    }());
    Tensor v = clamp(valid_prob, 1e-7, 1.0 - 1e-7);
    Tensor one_minus_v = add_scalar(scale(v, -1.0), 1.0);
    Tensor ll = add(mul(gt, log_op(v)), mul(one_minus_gt, log_op(one_minus_v)));
    return scale(sum(ll), -1.0 / L);
}

BatchLoss total_loss(const std::vector<BatchItem>& batch, ModelWeights& w,
                     const ModelConfig& cfg, const std::vector<NoiseDraw>& noise) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    if (noise.size() != batch.size())
        throw std::invalid_argument("total_loss: need one noise draw per sample");
    BatchLoss out;
    Tensor acc = Tensor::scalar(0.0);
    for (size_t j = 0; j < batch.size(); ++j) {
        FixationOutput fo = model_forward(batch[j].bundle, w, cfg);
        SampledCoords pred = reparam_sample(fo, noise[j], cfg);
        Tensor lx = cfg.variant == Variant::NoReg
                        ? loss_xyt_patch(fo, pred, batch[j].gt, cfg)
                        : loss_xyt(pred, batch[j].gt, cfg);
        Tensor lv = loss_val(fo.valid_prob, batch[j].gt.valid);
        out.xyt += lx.item();
        out.val += lv.item();
        acc = add(acc, add(lx, lv));
    }
    out.total = scale(acc, 1.0 / double(batch.size()));
    out.xyt /= double(batch.size());
    out.val /= double(batch.size());
    return out;
}

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const TrainConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].data().size(), 0.0);
            state.v[i].assign(params[i].data().size(), 0.0);
        }
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].data();
        auto& g = params[i].grad();
        if (g.size() != p.size())
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (size_t k = 0; k < p.size(); ++k) {
            state.m[i][k] = cfg.beta1 * state.m[i][k] + (1.0 - cfg.beta1) * g[k];
            state.v[i][k] = cfg.beta2 * state.v[i][k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double mhat = state.m[i][k] / bc1;
            const double vhat = state.v[i][k] / bc2;
            p[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

TrainResult train(const Dataset& ds, FeatureProvider& features,
                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::string& loss_csv_path,
                  const std::string& checkpoint_path) {
    if (ds.samples.empty())
        throw std::invalid_argument("train: empty training set");
    if (tcfg.batch_size < 1 || tcfg.lr <= 0.0)
        throw std::invalid_argument("train: bad batch size or learning rate");
    TrainResult res;
    res.weights = ModelWeights::init(mcfg, tcfg.seed);
    std::vector<Tensor> params = res.weights.parameters();
    AdamState state;

    std::map<std::pair<std::string, std::string>, FeatureBundle> cache;
    auto bundle_for = [&](const DatasetSample& s) -> const FeatureBundle& {
        auto key = std::make_pair(s.path.image_id, s.path.target_name);
        auto it = cache.find(key);
        if (it == cache.end())
            it = cache.emplace(key, features.get(key.first, key.second)).first;
        return it->second;
    };

    std::vector<size_t> order;
    size_t cursor = 0;
    int epoch = 0;
    auto refill = [&]() {
        order.resize(ds.samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(detail::splitmix64(tcfg.seed) +
                            static_cast<uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
        ++epoch;
    };
    refill();

    for (int step = 0; step < tcfg.steps; ++step) {
        std::vector<BatchItem> batch;
        for (int b = 0; b < tcfg.batch_size; ++b) {
            if (cursor >= order.size()) refill();
            const auto& s = ds.samples[order[cursor++]];
            batch.push_back({bundle_for(s),
                             pad_scanpath(s.path, mcfg.L, s.img_w, s.img_h,
                                          mcfg.t_max_ms)});
        }
        // Fresh epsilon per step, derived from (seed, step) so a resumed run
        // reproduces the same draw.
        std::mt19937_64 noise_rng(
            detail::splitmix64(detail::splitmix64(tcfg.seed) ^
                               (0x9e3779b97f4a7c15ULL * (step + 1))));
        std::vector<NoiseDraw> noise;
        for (int b = 0; b < tcfg.batch_size; ++b)
            noise.push_back(draw_noise(mcfg.L, noise_rng));

        zero_grad(params);
        BatchLoss loss = total_loss(batch, res.weights, mcfg, noise);
        backward(loss.total);
        adam_step(params, state, tcfg);
        // Keep weights at 32-bit precision so checkpoints round-trip exactly.
        for (auto& p : params)
            for (auto& v : p.data()) v = static_cast<double>(static_cast<float>(v));

        res.log.push_back({step, loss.xyt, loss.val, loss.total.item()});
        res.final_loss = loss.total.item();
        if (!checkpoint_path.empty() && tcfg.checkpoint_every > 0 &&
            (step + 1) % tcfg.checkpoint_every == 0)
            save_checkpoint(checkpoint_path, res.weights);
    }
    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, res.weights);
    if (!loss_csv_path.empty()) write_loss_csv(loss_csv_path, res.log);
    return res;
}

void write_loss_csv(const std::string& path, const std::vector<LogRow>& log) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write loss csv: " + path);
    os << "step,loss_xyt,loss_val,total\n";
    os.precision(17);
    for (const auto& r : log)
        os << r.step << "," << r.xyt << "," << r.val << "," << r.total << "\n";
}

}  // namespace gazeformer
