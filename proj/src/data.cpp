#include "gazeformer/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "gazeformer/detail/hash.hpp"

namespace gazeformer {

using detail::hash_string;
using detail::splitmix64;
using detail::u64_to_unit;

namespace {

// Two standard normals from consecutive hash outputs.
void hash_normal_pair(uint64_t base, uint64_t idx, double& n1, double& n2) {
    const double u1 = std::max(u64_to_unit(splitmix64(base + 2 * idx)), 1e-12);
    const double u2 = u64_to_unit(splitmix64(base + 2 * idx + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    n1 = r * std::cos(2.0 * M_PI * u2);
    n2 = r * std::sin(2.0 * M_PI * u2);
}

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

void write_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(uint16_t(b[0]) | (uint16_t(b[1]) << 8));
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

Dataset dataset_from_samples(std::vector<DatasetSample> samples) {
    Dataset ds;
    ds.samples = std::move(samples);
    for (const auto& s : ds.samples) ds.categories.insert(s.path.target_name);
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed dataset JSON in " + path + ": " + e.what());
    }
    if (!j.is_array())
        throw std::runtime_error("dataset " + path + ": top level must be an array");
    std::vector<DatasetSample> samples;
    for (size_t i = 0; i < j.size(); ++i) {
        const auto& rec = j[i];
        const std::string where = "record " + std::to_string(i);
        try {
            DatasetSample s;
            s.path.image_id = rec.at("name").get<std::string>();
            s.path.subject = rec.at("subject").get<std::string>();
            s.path.target_name = rec.at("task").get<std::string>();
            s.img_w = rec.at("img_w").get<double>();
            s.img_h = rec.at("img_h").get<double>();
            auto xs = rec.at("X").get<std::vector<double>>();
            auto ys = rec.at("Y").get<std::vector<double>>();
            auto ts = rec.at("T").get<std::vector<double>>();
            if (xs.size() != ys.size() || xs.size() != ts.size())
                throw std::runtime_error("X/Y/T lengths differ");
            if (xs.empty()) throw std::runtime_error("empty scanpath");
            for (size_t k = 0; k < xs.size(); ++k) {
                if (xs[k] < 0 || xs[k] > s.img_w || ys[k] < 0 || ys[k] > s.img_h)
                    throw std::runtime_error("fixation " + std::to_string(k) +
                                             " outside image bounds");
                if (ts[k] < 0) throw std::runtime_error("negative duration");
                s.path.fixations.push_back({xs[k], ys[k], ts[k]});
            }
            samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset " + path + ", " + where + ": " + e.what());
        }
    }
    return dataset_from_samples(std::move(samples));
}

void save_dataset(const std::string& path, const Dataset& ds) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : ds.samples) {
        nlohmann::json rec;
        rec["name"] = s.path.image_id;
        rec["subject"] = s.path.subject;
        rec["task"] = s.path.target_name;
        std::vector<double> xs, ys, ts;
        for (const auto& f : s.path.fixations) {
            xs.push_back(f.x);
            ys.push_back(f.y);
            ts.push_back(f.t);
        }
        rec["X"] = xs;
        rec["Y"] = ys;
        rec["T"] = ts;
        rec["img_w"] = s.img_w;
        rec["img_h"] = s.img_h;
        j.push_back(std::move(rec));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
    out << j.dump(1) << "\n";
}

std::pair<Dataset, Dataset> make_zerogaze_split(const Dataset& ds,
                                                const std::string& held_out) {
    if (!ds.categories.count(held_out))
        throw std::invalid_argument("unknown category: " + held_out);
    std::vector<DatasetSample> train, test;
    for (const auto& s : ds.samples)
        (s.path.target_name == held_out ? test : train).push_back(s);
    return {dataset_from_samples(std::move(train)),
            dataset_from_samples(std::move(test))};
}

PaddedSample pad_scanpath(const Scanpath& s, int L, double img_w, double img_h,
                          double t_max_ms) {
    PaddedSample p;
    p.l = static_cast<int>(s.fixations.size());
    if (p.l > L) {
        p.l = L;
        p.truncated = true;
    }
    p.xs.assign(L, 0.0);
    p.ys.assign(L, 0.0);
    p.ts.assign(L, 0.0);
    p.valid.assign(L, 0);
    for (int i = 0; i < p.l; ++i) {
        p.xs[i] = s.fixations[i].x / img_w;
        p.ys[i] = s.fixations[i].y / img_h;
        p.ts[i] = s.fixations[i].t / t_max_ms;
        p.valid[i] = 1;
    }
    return p;
}

Scanpath unpad_scanpath(const PaddedSample& p, double img_w, double img_h,
                        double t_max_ms) {
    Scanpath s;
    for (int i = 0; i < p.l; ++i)
        s.fixations.push_back({p.xs[i] * img_w, p.ys[i] * img_h, p.ts[i] * t_max_ms});
    return s;
}

SyntheticFeatureProvider::SyntheticFeatureProvider(const ModelConfig& cfg,
                                                   uint64_t seed)
    : cfg_(cfg), seed_(seed) {}

std::pair<int, int> SyntheticFeatureProvider::blob_location(
    const std::string& image_id) const {
    const uint64_t base = hash_string(image_id + "#blob", seed_);
    const int r = static_cast<int>(splitmix64(base) % static_cast<uint64_t>(cfg_.h));
    const int c = static_cast<int>(splitmix64(base + 1) % static_cast<uint64_t>(cfg_.w));
    return {r, c};
}

FeatureBundle SyntheticFeatureProvider::get(const std::string& image_id,
                                            const std::string& target_name) {
    const int C = cfg_.C, h = cfg_.h, w = cfg_.w;
    const uint64_t img_base = hash_string(image_id, seed_);
    std::vector<double> feat(static_cast<size_t>(C) * h * w);
    for (size_t i = 0; i + 1 < feat.size(); i += 2)
        hash_normal_pair(img_base, i / 2, feat[i], feat[i + 1]);
    if (feat.size() % 2) {
        double a, b;
        hash_normal_pair(img_base, feat.size() / 2, a, b);
        feat.back() = a;
    }
    // Target-correlated blob in a 3x3 neighborhood around a deterministic
    // center, so toy training has learnable localization signal.
    const auto [br, bc] = blob_location(image_id);
    const uint64_t tgt_base = hash_string(target_name + "#pattern", seed_);
    std::vector<double> pattern(static_cast<size_t>(C));
    for (size_t i = 0; i + 1 < pattern.size(); i += 2)
        hash_normal_pair(tgt_base, i / 2, pattern[i], pattern[i + 1]);
    if (pattern.size() % 2) {
        double a, b;
        hash_normal_pair(tgt_base, pattern.size() / 2, a, b);
        pattern.back() = a;
    }
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
            const int r = br + dr, c = bc + dc;
            if (r < 0 || r >= h || c < 0 || c >= w) continue;
            const double falloff = std::exp(-0.5 * (dr * dr + dc * dc));
            for (int ch = 0; ch < C; ++ch)
                feat[static_cast<size_t>(ch) * h * w + static_cast<size_t>(r) * w + c] +=
                    3.0 * falloff * pattern[ch];
        }
    FeatureBundle b;
    b.image_features = Tensor({C, h, w}, std::move(feat));
    b.target_embedding =
        HashEmbeddingProvider(cfg_.d_text, seed_).embed(target_name);
    b.image_id = image_id;
    b.target_name = target_name;
    return b;
}

FileFeatureProvider::FileFeatureProvider(std::string dir, const ModelConfig& cfg,
                                         TargetEmbeddingProvider& embeddings)
    : dir_(std::move(dir)), cfg_(cfg), embeddings_(embeddings) {}

FeatureBundle FileFeatureProvider::get(const std::string& image_id,
                                       const std::string& target_name) {
    auto [id, features] = read_feature_file(dir_ + "/" + image_id + ".feat");
    if (id != image_id)
        throw std::runtime_error("feature file image_id mismatch for " + image_id);
    if (features.shape() != Shape{cfg_.C, cfg_.h, cfg_.w})
        throw std::runtime_error("feature file shape mismatch for " + image_id);
    FeatureBundle b;
    b.image_features = std::move(features);
    b.target_embedding = embed_target(target_name, embeddings_, cfg_);
    b.image_id = image_id;
    b.target_name = target_name;
    return b;
}

namespace {
constexpr char kFeatMagic[4] = {'G', 'Z', 'F', 'F'};
constexpr char kLabelMagic[4] = {'G', 'Z', 'L', 'B'};
}  // namespace

void write_feature_file(const std::string& path, const std::string& image_id,
                        const Tensor& features) {
    if (features.rank() != 3)
        throw std::invalid_argument("write_feature_file: expected [C,h,w] tensor");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write feature file: " + path);
    os.write(kFeatMagic, 4);
    write_string(os, image_id);
    for (int dim : features.shape()) write_u32(os, static_cast<uint32_t>(dim));
    for (double v : features.data()) {
        const float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(os, bits);
    }
}

std::pair<std::string, Tensor> read_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open feature file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kFeatMagic, 4) != 0)
        throw std::runtime_error("not a feature file: " + path);
    std::string id = read_string(is);
    const int C = static_cast<int>(read_u32(is));
    const int h = static_cast<int>(read_u32(is));
    const int w = static_cast<int>(read_u32(is));
    std::vector<double> data(static_cast<size_t>(C) * h * w);
    for (auto& v : data) {
        const uint32_t bits = read_u32(is);
        float f;
        std::memcpy(&f, &bits, 4);
        v = f;
    }
    if (!is) throw std::runtime_error("truncated feature file: " + path);
    return {std::move(id), Tensor({C, h, w}, std::move(data))};
}

const std::string& LabelGrid::name_at(int r, int c) const {
    const int id = labels[static_cast<size_t>(r) * W + c];
    auto it = class_names.find(id);
    if (it == class_names.end())
        throw std::runtime_error("label id " + std::to_string(id) +
                                 " missing from class-name table");
    return it->second;
}

LabelLookup fixations_to_labels(const Scanpath& s, const LabelGrid& grid) {
    if (grid.H <= 0 || grid.W <= 0)
        throw std::invalid_argument("fixations_to_labels: empty grid");
    LabelLookup out;
    for (const auto& f : s.fixations) {
        int c = static_cast<int>(std::floor(f.x));
        int r = static_cast<int>(std::floor(f.y));
        const bool inside = r >= 0 && r < grid.H && c >= 0 && c < grid.W;
        if (!inside) ++out.clamped;
        r = std::min(grid.H - 1, std::max(0, r));
        c = std::min(grid.W - 1, std::max(0, c));
        out.labels.push_back(grid.name_at(r, c));
    }
    return out;
}

void write_label_file(const std::string& path, const std::string& image_id,
                      const LabelGrid& grid) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write label file: " + path);
    os.write(kLabelMagic, 4);
    write_string(os, image_id);
    write_u32(os, static_cast<uint32_t>(grid.H));
    write_u32(os, static_cast<uint32_t>(grid.W));
    for (uint16_t id : grid.labels) write_u16(os, id);
    write_u32(os, static_cast<uint32_t>(grid.class_names.size()));
    for (const auto& [id, name] : grid.class_names) {
        write_u16(os, static_cast<uint16_t>(id));
        write_string(os, name);
    }
}

std::pair<std::string, LabelGrid> read_label_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open label file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kLabelMagic, 4) != 0)
        throw std::runtime_error("not a label file: " + path);
    std::string id = read_string(is);
    LabelGrid g;
    g.H = static_cast<int>(read_u32(is));
    g.W = static_cast<int>(read_u32(is));
    g.labels.resize(static_cast<size_t>(g.H) * g.W);
    for (auto& v : g.labels) v = read_u16(is);
    const uint32_t n = read_u32(is);
    for (uint32_t i = 0; i < n; ++i) {
        const int cid = read_u16(is);
        g.class_names[cid] = read_string(is);
    }
    if (!is) throw std::runtime_error("truncated label file: " + path);
    return {std::move(id), std::move(g)};
}

}  // namespace gazeformer
