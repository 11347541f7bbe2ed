#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazeformer/data.hpp"
#include "gazeformer/types.hpp"

namespace gazeformer {

struct FixationString {
    std::vector<int> symbols;
    bool duration_expanded = false;
};

// Mean-shift over the pooled fixations; returns one cluster id per fixation
// in pooled order. Ids are assigned by mode position (lower x, then lower y).
std::vector<int> cluster_fixations(const std::vector<Scanpath>& paths,
                                   double bandwidth);

// Needleman-Wunsch with match=1, mismatch=0, gap=0;
// score = matches / max(len(a), len(b)).
double sequence_score(const FixationString& a, const FixationString& b);

// Unit-cost Levenshtein distance.
int edit_distance(const FixationString& a, const FixationString& b);

// Token i repeated ceil(t_i / bin_ms) times, capped per fixation.
FixationString expand_duration(const Scanpath& s, const FixationString& str,
                               double bin_ms = 50.0, int cap = 20);

// Maps two label sequences onto a shared integer alphabet.
std::pair<FixationString, FixationString> semantic_strings(
    const std::vector<std::string>& a, const std::vector<std::string>& b);

struct MultiMatchResult {
    std::optional<double> shape, direction, length;
    double position = 0.0;
    double mean() const;
};

MultiMatchResult multimatch(const Scanpath& a, const Scanpath& b, double img_w,
                            double img_h);

struct FixationMap {
    int H = 0, W = 0;
    std::vector<double> grid;  // row-major
    double sigma = 0.0;

    double at(int r, int c) const { return grid[static_cast<size_t>(r) * W + c]; }
};

// Unit impulses convolved with an isotropic Gaussian truncated at 4 sigma.
FixationMap fixation_map(const std::vector<Scanpath>& paths, int H, int W,
                         double sigma);

// Pearson correlation of z-scored grids.
double cc(const FixationMap& pred, const FixationMap& human);

// Mean of the z-scored predicted map at the human fixation pixels.
double nss(const FixationMap& pred,
           const std::vector<std::pair<double, double>>& human_fixations);

// ---- full evaluation ----

using MetricRow = std::map<std::string, double>;

struct EvalConfig {
    double cluster_bandwidth = 60.0;  // px in the display frame
    double map_sigma = 30.0;          // px
    double duration_bin_ms = 50.0;
    int duration_cap = 20;
    bool with_duration = true;  // off for noDur checkpoints
    int n_threads = 1;
};

struct MetricReport {
    std::map<std::string, MetricRow> per_category;
    std::map<std::string, int> category_counts;  // test cases per category
    MetricRow aggregate;                         // weighted by test cases
    std::vector<std::string> unmatched;          // model paths with no human pair
    int label_clamped = 0;
};

MetricReport evaluate(const std::vector<Scanpath>& model_paths,
                      const std::vector<DatasetSample>& human,
                      const std::map<std::string, LabelGrid>& grids,
                      const EvalConfig& cfg);

std::string report_to_json(const MetricReport& report);
void write_report_json(const std::string& path, const MetricReport& report);
void write_report_csv(const std::string& path, const MetricReport& report);

}  // namespace gazeformer
