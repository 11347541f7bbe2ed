#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gazeformer/model.hpp"
#include "gazeformer/types.hpp"

namespace gazeformer {

struct DatasetSample {
    Scanpath path;   // subject/image/target carried on the scanpath
    double img_w = 1680.0;
    double img_h = 1050.0;
};

struct Dataset {
    std::vector<DatasetSample> samples;
    std::set<std::string> categories;

    size_t size() const { return samples.size(); }
};

// JSON schema: array of {"name","subject","task","X","Y","T","img_w","img_h"}.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset dataset_from_samples(std::vector<DatasetSample> samples);

// Leave-one-category-out split. Train keeps every other category.
std::pair<Dataset, Dataset> make_zerogaze_split(const Dataset& ds,
                                                const std::string& held_out);

struct PaddedSample {
    std::vector<double> xs, ys, ts;  // normalized, length L
    std::vector<int> valid;          // 1 iff slot < l
    int l = 0;                       // true (possibly truncated) length
    bool truncated = false;
};

PaddedSample pad_scanpath(const Scanpath& s, int L, double img_w, double img_h,
                          double t_max_ms = 5000.0);
Scanpath unpad_scanpath(const PaddedSample& p, double img_w, double img_h,
                        double t_max_ms = 5000.0);

// Feature provision -------------------------------------------------------

class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;
    virtual FeatureBundle get(const std::string& image_id,
                              const std::string& target_name) = 0;
};

// Deterministic pseudo-random features with a localized target blob whose
// position is recoverable for test oracles. Integer hash arithmetic keyed
// by (image_id, seed); no float seeding.
class SyntheticFeatureProvider : public FeatureProvider {
public:
    SyntheticFeatureProvider(const ModelConfig& cfg, uint64_t seed);
    FeatureBundle get(const std::string& image_id,
                      const std::string& target_name) override;
    // (row, col) of the planted blob in the h x w grid.
    std::pair<int, int> blob_location(const std::string& image_id) const;

private:
    ModelConfig cfg_;
    uint64_t seed_;
};

// Reads per-image binary feature files from a directory
// (<dir>/<image_id>.feat) and target embeddings from a provider.
class FileFeatureProvider : public FeatureProvider {
public:
    FileFeatureProvider(std::string dir, const ModelConfig& cfg,
                        TargetEmbeddingProvider& embeddings);
    FeatureBundle get(const std::string& image_id,
                      const std::string& target_name) override;

private:
    std::string dir_;
    ModelConfig cfg_;
    TargetEmbeddingProvider& embeddings_;
};

// Binary feature file: magic, image_id, C/h/w, row-major f32 little-endian.
void write_feature_file(const std::string& path, const std::string& image_id,
                        const Tensor& features);
std::pair<std::string, Tensor> read_feature_file(const std::string& path);

// Label grids -------------------------------------------------------------

struct LabelGrid {
    int H = 0, W = 0;
    std::vector<uint16_t> labels;  // row-major H x W
    std::map<int, std::string> class_names;

    const std::string& name_at(int r, int c) const;
};

struct LabelLookup {
    std::vector<std::string> labels;
    int clamped = 0;  // fixations outside the grid, clamped to the border
};

LabelLookup fixations_to_labels(const Scanpath& s, const LabelGrid& grid);

// Binary label file: magic, image_id, H/W, u16 ids, class-name table.
void write_label_file(const std::string& path, const std::string& image_id,
                      const LabelGrid& grid);
std::pair<std::string, LabelGrid> read_label_file(const std::string& path);

}  // namespace gazeformer
