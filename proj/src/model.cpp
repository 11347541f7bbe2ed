#include "gazeformer/model.hpp"

#include <cmath>
#include <cstring>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "gazeformer/detail/hash.hpp"

namespace gazeformer {

using detail::hash_string;
using detail::splitmix64;
using detail::u64_to_unit;

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoDur: return "noDur";
        case Variant::NoReg: return "noReg";
        case Variant::RandomTargetEmbed: return "randEmbed";
    }
    throw std::logic_error("variant_name: bad variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "noDur") return Variant::NoDur;
    if (name == "noReg") return Variant::NoReg;
    if (name == "randEmbed") return Variant::RandomTargetEmbed;
    throw std::invalid_argument("unknown variant: " + name);
}

void ModelConfig::validate() const {
    if (d % heads != 0)
        throw std::invalid_argument("ModelConfig: d must be divisible by heads");
    if (d % 4 != 0)
        throw std::invalid_argument("ModelConfig: d must be divisible by 4");
    if (L < 1) throw std::invalid_argument("ModelConfig: L must be >= 1");
    if (h < 1 || w < 1 || C < 1 || d_text < 1)
        throw std::invalid_argument("ModelConfig: bad feature dimensions");
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.d = 16;
    c.n_enc = 1;
    c.n_dec = 1;
    c.heads = 2;
    c.L = 3;
    c.h = 4;
    c.w = 4;
    c.C = 8;
    c.d_text = 16;
    return c;
}

Tensor positional_encoding_2d(int h, int w, int d) {
    if (d % 4 != 0)
        throw std::invalid_argument("positional_encoding_2d: d must be divisible by 4");
    std::vector<double> data(static_cast<size_t>(h) * w * d);
    const int n_freq = d / 4;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t base = (static_cast<size_t>(r) * w + c) * d;
            for (int j = 0; j < n_freq; ++j) {
                const double freq = std::pow(10000.0, -double(j) / n_freq);
                data[base + 2 * j] = std::sin(r * freq);
                data[base + 2 * j + 1] = std::cos(r * freq);
                data[base + d / 2 + 2 * j] = std::sin(c * freq);
                data[base + d / 2 + 2 * j + 1] = std::cos(c * freq);
            }
        }
    return Tensor({h * w, d}, std::move(data));
}

Tensor positional_encoding_point(double row, double col, int d) {
    if (d % 4 != 0)
        throw std::invalid_argument("positional_encoding_point: d must be divisible by 4");
    std::vector<double> data(static_cast<size_t>(d));
    const int n_freq = d / 4;
    for (int j = 0; j < n_freq; ++j) {
        const double freq = std::pow(10000.0, -double(j) / n_freq);
        data[2 * j] = std::sin(row * freq);
        data[2 * j + 1] = std::cos(row * freq);
        data[d / 2 + 2 * j] = std::sin(col * freq);
        data[d / 2 + 2 * j + 1] = std::cos(col * freq);
    }
    return Tensor({1, d}, std::move(data));
}

namespace {

Linear init_linear(int in, int out, std::mt19937_64& rng) {
    const double std = std::sqrt(2.0 / (in + out));
    return {Tensor::randn({in, out}, rng, std, true),
            Tensor::zeros({out}, true)};
}

MhaWeights init_mha(int d, std::mt19937_64& rng) {
    return {init_linear(d, d, rng), init_linear(d, d, rng),
            init_linear(d, d, rng), init_linear(d, d, rng)};
}

Mlp2 init_mlp2(int d, int out, std::mt19937_64& rng) {
    return {init_linear(d, d, rng), init_linear(d, out, rng)};
}

Tensor ones_param(int d) { return Tensor::full({d}, 1.0, true); }
Tensor zeros_param(int d) { return Tensor::zeros({d}, true); }

}  // namespace

ModelWeights ModelWeights::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelWeights w;
    w.cfg = cfg;
    w.input_proj = init_linear(cfg.C, cfg.d, rng);
    for (int i = 0; i < cfg.n_enc; ++i) {
        EncoderLayerWeights l;
        l.self_attn = init_mha(cfg.d, rng);
        l.ff1 = init_linear(cfg.d, cfg.d, rng);
        l.ff2 = init_linear(cfg.d, cfg.d, rng);
        l.ln1_g = ones_param(cfg.d);
        l.ln1_b = zeros_param(cfg.d);
        l.ln2_g = ones_param(cfg.d);
        l.ln2_b = zeros_param(cfg.d);
        w.enc.push_back(std::move(l));
    }
    w.target_proj = init_linear(cfg.d_text, cfg.d, rng);
    w.image_mod_proj = init_linear(cfg.d, cfg.d, rng);
    w.joint_proj = init_linear(2 * cfg.d, cfg.d, rng);
    w.queries = Tensor::randn({cfg.L, cfg.d}, rng, 1.0 / std::sqrt(double(cfg.d)), true);
    for (int i = 0; i < cfg.n_dec; ++i) {
        DecoderLayerWeights l;
        l.self_attn = init_mha(cfg.d, rng);
        l.cross_attn = init_mha(cfg.d, rng);
        l.ff1 = init_linear(cfg.d, cfg.d, rng);
        l.ff2 = init_linear(cfg.d, cfg.d, rng);
        l.ln1_g = ones_param(cfg.d);
        l.ln1_b = zeros_param(cfg.d);
        l.ln2_g = ones_param(cfg.d);
        l.ln2_b = zeros_param(cfg.d);
        l.ln3_g = ones_param(cfg.d);
        l.ln3_b = zeros_param(cfg.d);
        w.dec.push_back(std::move(l));
    }
    const bool reg_xy = cfg.variant != Variant::NoReg;
    const bool has_dur = cfg.variant != Variant::NoDur;
    if (reg_xy) {
        w.head_mu_x = init_mlp2(cfg.d, 1, rng);
        w.head_mu_y = init_mlp2(cfg.d, 1, rng);
        w.head_lambda_x = init_mlp2(cfg.d, 1, rng);
        w.head_lambda_y = init_mlp2(cfg.d, 1, rng);
        // Start with a tight sampling distribution.
        w.head_lambda_x.l2.b.data()[0] = -8.0;
        w.head_lambda_y.l2.b.data()[0] = -8.0;
    } else {
        w.head_patch = init_mlp2(cfg.d, cfg.h * cfg.w, rng);
    }
    if (has_dur) {
        w.head_mu_t = init_mlp2(cfg.d, 1, rng);
        w.head_lambda_t = init_mlp2(cfg.d, 1, rng);
        w.head_lambda_t.l2.b.data()[0] = -8.0;
    }
    w.head_valid = init_mlp2(cfg.d, 2, rng);
    return w;
}

namespace {

using VisitFn = std::function<void(const std::string&, Tensor&)>;

void visit_linear(const std::string& name, Linear& l, const VisitFn& fn) {
    fn(name + ".w", l.w);
    fn(name + ".b", l.b);
}

void visit_mha(const std::string& name, MhaWeights& m, const VisitFn& fn) {
    visit_linear(name + ".q", m.q, fn);
    visit_linear(name + ".k", m.k, fn);
    visit_linear(name + ".v", m.v, fn);
    visit_linear(name + ".out", m.out, fn);
}

void visit_mlp2(const std::string& name, Mlp2& m, const VisitFn& fn) {
    if (!m.l1.w.defined()) return;
    visit_linear(name + ".l1", m.l1, fn);
    visit_linear(name + ".l2", m.l2, fn);
}

}  // namespace

void ModelWeights::visit(const VisitFn& fn) {
    visit_linear("input_proj", input_proj, fn);
    for (size_t i = 0; i < enc.size(); ++i) {
        const std::string p = "enc." + std::to_string(i);
        visit_mha(p + ".self", enc[i].self_attn, fn);
        visit_linear(p + ".ff1", enc[i].ff1, fn);
        visit_linear(p + ".ff2", enc[i].ff2, fn);
        fn(p + ".ln1_g", enc[i].ln1_g);
        fn(p + ".ln1_b", enc[i].ln1_b);
        fn(p + ".ln2_g", enc[i].ln2_g);
        fn(p + ".ln2_b", enc[i].ln2_b);
    }
    visit_linear("target_proj", target_proj, fn);
    visit_linear("image_mod_proj", image_mod_proj, fn);
    visit_linear("joint_proj", joint_proj, fn);
    fn("queries", queries);
    for (size_t i = 0; i < dec.size(); ++i) {
        const std::string p = "dec." + std::to_string(i);
        visit_mha(p + ".self", dec[i].self_attn, fn);
        visit_mha(p + ".cross", dec[i].cross_attn, fn);
        visit_linear(p + ".ff1", dec[i].ff1, fn);
        visit_linear(p + ".ff2", dec[i].ff2, fn);
        fn(p + ".ln1_g", dec[i].ln1_g);
        fn(p + ".ln1_b", dec[i].ln1_b);
        fn(p + ".ln2_g", dec[i].ln2_g);
        fn(p + ".ln2_b", dec[i].ln2_b);
        fn(p + ".ln3_g", dec[i].ln3_g);
        fn(p + ".ln3_b", dec[i].ln3_b);
    }
    visit_mlp2("head_mu_x", head_mu_x, fn);
    visit_mlp2("head_mu_y", head_mu_y, fn);
    visit_mlp2("head_mu_t", head_mu_t, fn);
    visit_mlp2("head_lambda_x", head_lambda_x, fn);
    visit_mlp2("head_lambda_y", head_lambda_y, fn);
    visit_mlp2("head_lambda_t", head_lambda_t, fn);
    visit_mlp2("head_valid", head_valid, fn);
    visit_mlp2("head_patch", head_patch, fn);
}

std::vector<Tensor> ModelWeights::parameters() {
    std::vector<Tensor> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

HashEmbeddingProvider::HashEmbeddingProvider(int d_text, uint64_t seed)
    : d_text_(d_text), seed_(seed) {}

Tensor HashEmbeddingProvider::embed(const std::string& name) {
    if (name.empty())
        throw std::invalid_argument("embed: target name must be non-empty");
    const uint64_t base = hash_string(name, seed_);
    std::vector<double> v(static_cast<size_t>(d_text_));
    for (int i = 0; i < d_text_; i += 2) {
        const double u1 = std::max(u64_to_unit(splitmix64(base + 2 * i)), 1e-12);
        const double u2 = u64_to_unit(splitmix64(base + 2 * i + 1));
        const double r = std::sqrt(-2.0 * std::log(u1));
        v[i] = r * std::cos(2.0 * M_PI * u2);
        if (i + 1 < d_text_) v[i + 1] = r * std::sin(2.0 * M_PI * u2);
    }
    return Tensor({d_text_}, std::move(v));
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::string& path, int d_text,
                                             bool hash_fallback,
                                             uint64_t fallback_seed)
    : d_text_(d_text), hash_fallback_(hash_fallback), fallback_seed_(fallback_seed) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding table: " + path);
    nlohmann::json j;
    in >> j;
    for (auto& [name, arr] : j.items()) {
        std::vector<double> v = arr.get<std::vector<double>>();
        if (static_cast<int>(v.size()) != d_text)
            throw std::runtime_error("embedding table entry '" + name +
                                     "' has wrong dimension");
        table_[name] = std::move(v);
    }
}

Tensor FileEmbeddingProvider::embed(const std::string& name) {
    if (name.empty())
        throw std::invalid_argument("embed: target name must be non-empty");
    auto it = table_.find(name);
    if (it != table_.end()) return Tensor({d_text_}, it->second);
    if (hash_fallback_)
        return HashEmbeddingProvider(d_text_, fallback_seed_).embed(name);
    std::string known;
    for (const auto& [k, _] : table_) known += (known.empty() ? "" : ", ") + k;
    throw std::runtime_error("unknown target '" + name +
                             "'; available targets: " + known);
}

std::vector<std::string> FileEmbeddingProvider::known_targets() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : table_) out.push_back(k);
    return out;
}

Tensor embed_target(const std::string& name, TargetEmbeddingProvider& provider,
                    const ModelConfig& cfg) {
    Tensor e = provider.embed(name);
    if (e.size() != cfg.d_text)
        throw std::runtime_error("target embedding dimension mismatch");
    return e;
}

Tensor encode_image(const Tensor& raw, ModelWeights& w, const ModelConfig& cfg) {
    if (raw.shape() != Shape{cfg.C, cfg.h, cfg.w})
        throw std::invalid_argument("encode_image: feature shape mismatch");
    const int hw = cfg.h * cfg.w;
    Tensor x = linear(transpose(reshape(raw, {cfg.C, hw})), w.input_proj);
    const Tensor pos = positional_encoding_2d(cfg.h, cfg.w, cfg.d);
    for (auto& layer : w.enc) {
        Tensor qk = add(x, pos);
        Tensor attn = multi_head_attention(qk, qk, x, cfg.heads, layer.self_attn);
        x = layer_norm(add(x, attn), layer.ln1_g, layer.ln1_b);
        Tensor ff = linear(relu(linear(x, layer.ff1)), layer.ff2);
        x = layer_norm(add(x, ff), layer.ln2_g, layer.ln2_b);
    }
    return x;
}

Tensor joint_embed(const Tensor& f_image, const Tensor& f_target, ModelWeights& w) {
    const int hw = f_image.rows();
    Tensor tgt = linear(reshape(f_target, {1, f_target.size()}), w.target_proj);
    Tensor img = linear(f_image, w.image_mod_proj);
    Tensor tiled = concat_rows(std::vector<Tensor>(static_cast<size_t>(hw), tgt));
    return relu(linear(concat_cols({img, tiled}), w.joint_proj));
}

Tensor decode_fixations(const Tensor& f_joint, const FixationQuerySet& qs,
                        ModelWeights& w, const ModelConfig& cfg, int n_queries) {
    if (qs.queries.rows() != cfg.L)
        throw std::invalid_argument("decode_fixations: query count != L");
    const int nq = n_queries < 0 ? cfg.L : n_queries;
    if (nq < 1 || nq > cfg.L)
        throw std::invalid_argument("decode_fixations: bad n_queries");
    // Initial-fixation encoding goes on query 0 only.
    Tensor pe0 = positional_encoding_point(qs.y0 * (cfg.h - 1), qs.x0 * (cfg.w - 1), cfg.d);
    Tensor q0 = add(row(qs.queries, 0), pe0);
    Tensor x = nq == 1 ? q0 : concat_rows({q0, slice_rows(qs.queries, 1, nq)});
    const Tensor pos = positional_encoding_2d(cfg.h, cfg.w, cfg.d);
    for (auto& layer : w.dec) {
        Tensor self = multi_head_attention(x, x, x, cfg.heads, layer.self_attn);
        x = layer_norm(add(x, self), layer.ln1_g, layer.ln1_b);
        Tensor keys = add(f_joint, pos);
        Tensor cross = multi_head_attention(x, keys, f_joint, cfg.heads, layer.cross_attn);
        x = layer_norm(add(x, cross), layer.ln2_g, layer.ln2_b);
        Tensor ff = linear(relu(linear(x, layer.ff1)), layer.ff2);
        x = layer_norm(add(x, ff), layer.ln3_g, layer.ln3_b);
    }
    return x;
}

namespace {

Tensor run_mlp2(const Tensor& x, Mlp2& m) {
    return linear(relu(linear(x, m.l1)), m.l2);
}

}  // namespace

FixationOutput predict_heads(const Tensor& f_dec, ModelWeights& w,
                             const ModelConfig& cfg) {
    FixationOutput out;
    if (cfg.variant != Variant::NoReg) {
        out.mu_x = run_mlp2(f_dec, w.head_mu_x);
        out.mu_y = run_mlp2(f_dec, w.head_mu_y);
        out.lambda_x = run_mlp2(f_dec, w.head_lambda_x);
        out.lambda_y = run_mlp2(f_dec, w.head_lambda_y);
    } else {
        out.patch_probs = softmax(run_mlp2(f_dec, w.head_patch), 1);
    }
    if (cfg.variant != Variant::NoDur) {
        out.mu_t = run_mlp2(f_dec, w.head_mu_t);
        out.lambda_t = run_mlp2(f_dec, w.head_lambda_t);
    } else {
        out.mu_t = Tensor::zeros({f_dec.rows(), 1});
        out.lambda_t = Tensor::zeros({f_dec.rows(), 1});
    }
    out.valid_prob = slice_cols(softmax(run_mlp2(f_dec, w.head_valid), 1), 0, 1);
    return out;
}

FixationOutput model_forward(const FeatureBundle& bundle, ModelWeights& w,
                             const ModelConfig& cfg, double x0, double y0) {
    Tensor f_image = encode_image(bundle.image_features, w, cfg);
    Tensor f_joint = joint_embed(f_image, bundle.target_embedding, w);
    FixationQuerySet qs{w.queries, x0, y0};
    Tensor f_dec = decode_fixations(f_joint, qs, w, cfg);
    return predict_heads(f_dec, w, cfg);
}

Scanpath sample_scanpath(const FixationOutput& out, std::mt19937_64& rng,
                         const ModelConfig& cfg, const SampleOptions& opt) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const int steps = out.valid_prob.rows();
    Scanpath sp;
    int stop = steps;
    std::vector<Fixation> fx;
    for (int i = 0; i < steps; ++i) {
        double nx, ny, nt = 0.0;
        if (cfg.variant != Variant::NoReg) {
            const double ex = opt.deterministic ? 0.0 : normal(rng);
            const double ey = opt.deterministic ? 0.0 : normal(rng);
            nx = out.mu_x.data()[i] + ex * std::exp(0.5 * out.lambda_x.data()[i]);
            ny = out.mu_y.data()[i] + ey * std::exp(0.5 * out.lambda_y.data()[i]);
        } else {
            // Sample a patch and emit its center.
            const int hw = cfg.h * cfg.w;
            int idx = 0;
            if (opt.deterministic) {
                double best = -1.0;
                for (int p = 0; p < hw; ++p)
                    if (out.patch_probs.at(i, p) > best) {
                        best = out.patch_probs.at(i, p);
                        idx = p;
                    }
            } else {
                double u = uniform(rng), acc = 0.0;
                idx = hw - 1;
                for (int p = 0; p < hw; ++p) {
                    acc += out.patch_probs.at(i, p);
                    if (u < acc) {
                        idx = p;
                        break;
                    }
                }
            }
            nx = (idx % cfg.w + 0.5) / cfg.w;
            ny = (idx / cfg.w + 0.5) / cfg.h;
        }
        if (cfg.variant != Variant::NoDur) {
            const double et = opt.deterministic ? 0.0 : normal(rng);
            nt = out.mu_t.data()[i] + et * std::exp(0.5 * out.lambda_t.data()[i]);
        }
        nx = std::min(1.0, std::max(0.0, nx));
        ny = std::min(1.0, std::max(0.0, ny));
        nt = std::max(0.0, nt);
        fx.push_back({nx * opt.img_w, ny * opt.img_h,
                      cfg.variant == Variant::NoDur ? 0.0 : nt * cfg.t_max_ms});
        if (out.valid_prob.data()[i] < 0.5 && stop == steps) stop = i;
    }
    if (stop == 0) {
        sp.fixations = {{opt.x0 * opt.img_w, opt.y0 * opt.img_h, 0.0}};
        sp.empty_prediction = true;
    } else {
        sp.fixations.assign(fx.begin(), fx.begin() + stop);
    }
    return sp;
}

std::vector<Scanpath> predict(const FeatureBundle& bundle, ModelWeights& w,
                              const ModelConfig& cfg, int n_samples,
                              uint64_t seed, const SampleOptions& opt) {
    if (n_samples < 1) throw std::invalid_argument("predict: n_samples must be >= 1");
    FixationOutput out = model_forward(bundle, w, cfg, opt.x0, opt.y0);
    std::mt19937_64 rng(seed);
    std::vector<Scanpath> paths;
    paths.reserve(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        Scanpath sp = sample_scanpath(out, rng, cfg, opt);
        sp.image_id = bundle.image_id;
        sp.target_name = bundle.target_name;
        paths.push_back(std::move(sp));
    }
    return paths;
}

Scanpath predict_autoregressive(const FeatureBundle& bundle, ModelWeights& w,
                                const ModelConfig& cfg, uint64_t seed,
                                const SampleOptions& opt) {
    Tensor f_image = encode_image(bundle.image_features, w, cfg);
    Tensor f_joint = joint_embed(f_image, bundle.target_embedding, w);
    FixationQuerySet qs{w.queries, opt.x0, opt.y0};
    std::mt19937_64 rng(seed);
    Scanpath sp;
    sp.image_id = bundle.image_id;
    sp.target_name = bundle.target_name;
    for (int i = 1; i <= cfg.L; ++i) {
        Tensor f_dec = decode_fixations(f_joint, qs, w, cfg, i);
        FixationOutput out = predict_heads(f_dec, w, cfg);
        // One-step view of the sampler over the newest embedding.
        std::normal_distribution<double> normal(0.0, 1.0);
        const int step = i - 1;
        if (out.valid_prob.data()[step] < 0.5) {
            if (step == 0) {
                sp.fixations = {{opt.x0 * opt.img_w, opt.y0 * opt.img_h, 0.0}};
                sp.empty_prediction = true;
            }
            return sp;
        }
        double nx, ny, nt = 0.0;
        if (cfg.variant != Variant::NoReg) {
            const double ex = opt.deterministic ? 0.0 : normal(rng);
            const double ey = opt.deterministic ? 0.0 : normal(rng);
            nx = out.mu_x.data()[step] + ex * std::exp(0.5 * out.lambda_x.data()[step]);
            ny = out.mu_y.data()[step] + ey * std::exp(0.5 * out.lambda_y.data()[step]);
        } else {
            std::uniform_real_distribution<double> uniform(0.0, 1.0);
            const int hw = cfg.h * cfg.w;
            double u = opt.deterministic ? 0.0 : uniform(rng);
            int idx = hw - 1;
            double acc = 0.0;
            for (int p = 0; p < hw; ++p) {
                acc += out.patch_probs.at(step, p);
                if (u < acc) {
                    idx = p;
                    break;
                }
            }
            nx = (idx % cfg.w + 0.5) / cfg.w;
            ny = (idx / cfg.w + 0.5) / cfg.h;
        }
        if (cfg.variant != Variant::NoDur) {
            const double et = opt.deterministic ? 0.0 : normal(rng);
            nt = out.mu_t.data()[step] + et * std::exp(0.5 * out.lambda_t.data()[step]);
        }
        nx = std::min(1.0, std::max(0.0, nx));
        ny = std::min(1.0, std::max(0.0, ny));
        nt = std::max(0.0, nt);
        sp.fixations.push_back({nx * opt.img_w, ny * opt.img_h,
                                cfg.variant == Variant::NoDur ? 0.0 : nt * cfg.t_max_ms});
    }
    return sp;
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[4] = {'G', 'Z', 'C', 'K'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

void write_f32(std::ostream& os, float f) {
    uint32_t bits;
    static_assert(sizeof(bits) == sizeof(f));
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    uint32_t bits = read_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"format_version", 1}, {"d", c.d},       {"n_enc", c.n_enc},
            {"n_dec", c.n_dec},    {"heads", c.heads}, {"L", c.L},
            {"h", c.h},            {"w", c.w},         {"C", c.C},
            {"d_text", c.d_text},  {"t_max_ms", c.t_max_ms},
            {"variant", variant_name(c.variant)}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d = j.at("d");
    c.n_enc = j.at("n_enc");
    c.n_dec = j.at("n_dec");
    c.heads = j.at("heads");
    c.L = j.at("L");
    c.h = j.at("h");
    c.w = j.at("w");
    c.C = j.at("C");
    c.d_text = j.at("d_text");
    c.t_max_ms = j.at("t_max_ms");
    c.variant = variant_from_name(j.at("variant"));
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelWeights& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    const std::string header = config_to_json(w.cfg).dump();
    write_u32(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    uint32_t n_blocks = 0;
    w.visit([&](const std::string&, Tensor&) { ++n_blocks; });
    write_u32(os, n_blocks);
    w.visit([&](const std::string& name, Tensor& t) {
        write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (int dim : t.shape()) write_u32(os, static_cast<uint32_t>(dim));
        for (double v : t.data()) write_f32(os, static_cast<float>(v));
    });
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelWeights load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const uint32_t hlen = read_u32(is);
    std::string header(hlen, '\0');
    is.read(header.data(), hlen);
    ModelConfig cfg = config_from_json(nlohmann::json::parse(header));
    ModelWeights w = ModelWeights::init(cfg, 0);
    std::map<std::string, Tensor> by_name;
    w.visit([&](const std::string& name, Tensor& t) { by_name[name] = t; });
    const uint32_t n_blocks = read_u32(is);
    for (uint32_t b = 0; b < n_blocks; ++b) {
        const uint32_t nlen = read_u32(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const uint32_t ndims = read_u32(is);
        Shape shape(ndims);
        for (auto& dim : shape) dim = static_cast<int>(read_u32(is));
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint block '" + name +
                                     "' does not match the model");
        if (it->second.shape() != shape)
            throw std::runtime_error("checkpoint block '" + name + "' shape mismatch");
        for (auto& v : it->second.data()) v = read_f32(is);
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return w;
}

}  // namespace gazeformer
