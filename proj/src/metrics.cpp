#include "gazeformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace gazeformer {

std::vector<int> cluster_fixations(const std::vector<Scanpath>& paths,
                                   double bandwidth) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : paths)
        for (const auto& f : p.fixations) pts.push_back({f.x, f.y});
    if (pts.empty())
        throw std::invalid_argument("cluster_fixations: no fixations");
    if (bandwidth <= 0.0)
        throw std::invalid_argument("cluster_fixations: bandwidth must be > 0");

    const double bw2 = bandwidth * bandwidth;
    std::vector<std::pair<double, double>> modes(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        double cx = pts[i].first, cy = pts[i].second;
        for (int iter = 0; iter < 200; ++iter) {
            double sx = 0.0, sy = 0.0;
            int n = 0;
            for (const auto& [px, py] : pts) {
                const double dx = px - cx, dy = py - cy;
                if (dx * dx + dy * dy <= bw2) {
                    sx += px;
                    sy += py;
                    ++n;
                }
            }
            const double nx = sx / n, ny = sy / n;
            const double shift = std::hypot(nx - cx, ny - cy);
            cx = nx;
            cy = ny;
            if (shift < 1e-3) break;
        }
        modes[i] = {cx, cy};
    }
    // Merge modes within bandwidth/2, ids ordered by mode position.
    std::vector<std::pair<double, double>> centers;
    std::vector<int> assignment(pts.size(), -1);
    for (size_t i = 0; i < pts.size(); ++i) {
        int found = -1;
        for (size_t c = 0; c < centers.size(); ++c) {
            const double dx = centers[c].first - modes[i].first;
            const double dy = centers[c].second - modes[i].second;
            if (dx * dx + dy * dy <= bw2 / 4.0) {
                found = static_cast<int>(c);
                break;
            }
        }
        if (found < 0) {
            centers.push_back(modes[i]);
            found = static_cast<int>(centers.size()) - 1;
        }
        assignment[i] = found;
    }
    // Relabel so ids follow (x, y) order of the cluster centers.
    std::vector<int> order(centers.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (centers[a].first != centers[b].first)
            return centers[a].first < centers[b].first;
        return centers[a].second < centers[b].second;
    });
    std::vector<int> relabel(centers.size());
    for (size_t rank = 0; rank < order.size(); ++rank)
        relabel[order[rank]] = static_cast<int>(rank);
    for (auto& a : assignment) a = relabel[a];
    return assignment;
}

double sequence_score(const FixationString& a, const FixationString& b) {
    if (a.symbols.empty() || b.symbols.empty())
        throw std::invalid_argument("sequence_score: empty string");
    const size_t n = a.symbols.size(), m = b.symbols.size();
    // match=1, mismatch=0, gap=0: DP for the max number of aligned matches.
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = 1; i <= n; ++i)
        for (size_t j = 1; j <= m; ++j) {
            const int diag = dp[i - 1][j - 1] + (a.symbols[i - 1] == b.symbols[j - 1] ? 1 : 0);
            dp[i][j] = std::max({diag, dp[i - 1][j], dp[i][j - 1]});
        }
    return double(dp[n][m]) / double(std::max(n, m));
}

int edit_distance(const FixationString& a, const FixationString& b) {
    const size_t n = a.symbols.size(), m = b.symbols.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a.symbols[i - 1] == b.symbols[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

FixationString expand_duration(const Scanpath& s, const FixationString& str,
                               double bin_ms, int cap) {
    if (bin_ms <= 0.0)
        throw std::invalid_argument("expand_duration: bin_ms must be > 0");
    if (s.fixations.size() != str.symbols.size())
        throw std::invalid_argument("expand_duration: string/scanpath length mismatch");
    FixationString out;
    out.duration_expanded = true;
    for (size_t i = 0; i < str.symbols.size(); ++i) {
        int reps = static_cast<int>(std::ceil(s.fixations[i].t / bin_ms));
        reps = std::max(1, std::min(cap, reps));
        for (int r = 0; r < reps; ++r) out.symbols.push_back(str.symbols[i]);
    }
    return out;
}

std::pair<FixationString, FixationString> semantic_strings(
    const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, int> dict;
    auto tokenize = [&](const std::vector<std::string>& labels) {
        FixationString s;
        for (const auto& l : labels) {
            auto [it, _] = dict.emplace(l, static_cast<int>(dict.size()));
            s.symbols.push_back(it->second);
        }
        return s;
    };
    FixationString sa = tokenize(a);
    FixationString sb = tokenize(b);
    return {sa, sb};
}

namespace {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

// Linear resampling of a sequence to m entries over its index range.
std::vector<Vec2> resample(const std::vector<Vec2>& v, size_t m) {
    std::vector<Vec2> out(m);
    if (v.size() == 1 || m == 1) {
        for (auto& o : out) o = v[0];
        return out;
    }
    for (size_t j = 0; j < m; ++j) {
        const double s = double(j) * double(v.size() - 1) / double(m - 1);
        const size_t k = std::min(v.size() - 2, static_cast<size_t>(s));
        const double f = s - double(k);
        out[j] = {v[k].x * (1 - f) + v[k + 1].x * f,
                  v[k].y * (1 - f) + v[k + 1].y * f};
    }
    return out;
}

double angle_between(const Vec2& u, const Vec2& v) {
    if ((u.x == 0.0 && u.y == 0.0) || (v.x == 0.0 && v.y == 0.0)) return 0.0;
    // atan2 of (|cross|, dot): exact zero for identical vectors and well
    // conditioned near 0 and pi, unlike acos of the normalized dot product.
    const double cross = u.x * v.y - u.y * v.x;
    const double dot = u.x * v.x + u.y * v.y;
    return std::atan2(std::abs(cross), dot);
}

}  // namespace

double MultiMatchResult::mean() const {
    double s = position;
    int n = 1;
    for (const auto& c : {shape, direction, length})
        if (c) {
            s += *c;
            ++n;
        }
    return s / n;
}

MultiMatchResult multimatch(const Scanpath& a, const Scanpath& b, double img_w,
                            double img_h) {
    if (a.fixations.empty() || b.fixations.empty())
        throw std::invalid_argument("multimatch: empty scanpath");
    const double diag = std::hypot(img_w, img_h);
    MultiMatchResult res;

    std::vector<Vec2> pa, pb;
    for (const auto& f : a.fixations) pa.push_back({f.x, f.y});
    for (const auto& f : b.fixations) pb.push_back({f.x, f.y});
    const size_t mp = std::max(pa.size(), pb.size());
    auto ra = resample(pa, mp), rb = resample(pb, mp);
    double pos = 0.0;
    for (size_t i = 0; i < mp; ++i)
        pos += std::hypot(ra[i].x - rb[i].x, ra[i].y - rb[i].y);
    res.position = 1.0 - pos / double(mp) / diag;

    if (pa.size() >= 2 && pb.size() >= 2) {
        std::vector<Vec2> va, vb;
        for (size_t i = 1; i < pa.size(); ++i)
            va.push_back({pa[i].x - pa[i - 1].x, pa[i].y - pa[i - 1].y});
        for (size_t i = 1; i < pb.size(); ++i)
            vb.push_back({pb[i].x - pb[i - 1].x, pb[i].y - pb[i - 1].y});
        const size_t mv = std::max(va.size(), vb.size());
        auto sa = resample(va, mv), sb = resample(vb, mv);
        double dshape = 0.0, ddir = 0.0, dlen = 0.0;
        for (size_t i = 0; i < mv; ++i) {
            dshape += std::hypot(sa[i].x - sb[i].x, sa[i].y - sb[i].y);
            ddir += angle_between(sa[i], sb[i]);
            dlen += std::abs(std::hypot(sa[i].x, sa[i].y) - std::hypot(sb[i].x, sb[i].y));
        }
        res.shape = 1.0 - dshape / double(mv) / (2.0 * diag);
        res.direction = 1.0 - ddir / double(mv) / M_PI;
        res.length = 1.0 - dlen / double(mv) / diag;
    }
    return res;
}

FixationMap fixation_map(const std::vector<Scanpath>& paths, int H, int W,
                         double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("fixation_map: sigma must be > 0");
    size_t total = 0;
    for (const auto& p : paths) total += p.fixations.size();
    if (total == 0) throw std::invalid_argument("fixation_map: no fixations");

    std::vector<double> impulses(static_cast<size_t>(H) * W, 0.0);
    for (const auto& p : paths)
        for (const auto& f : p.fixations) {
            const int c = std::min(W - 1, std::max(0, static_cast<int>(std::floor(f.x))));
            const int r = std::min(H - 1, std::max(0, static_cast<int>(std::floor(f.y))));
            impulses[static_cast<size_t>(r) * W + c] += 1.0;
        }

    // Separable Gaussian, truncated at 4 sigma, discrete mass 1.
    const int rad = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(2 * rad + 1);
    double ksum = 0.0;
    for (int j = -rad; j <= rad; ++j) {
        kernel[j + rad] = std::exp(-0.5 * j * j / (sigma * sigma));
        ksum += kernel[j + rad];
    }
    for (auto& k : kernel) k /= ksum;

    std::vector<double> tmp(impulses.size(), 0.0);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double v = impulses[static_cast<size_t>(r) * W + c];
            if (v == 0.0) continue;
            for (int j = std::max(0, c - rad); j <= std::min(W - 1, c + rad); ++j)
                tmp[static_cast<size_t>(r) * W + j] += v * kernel[j - c + rad];
        }
    FixationMap map;
    map.H = H;
    map.W = W;
    map.sigma = sigma;
    map.grid.assign(impulses.size(), 0.0);
    for (int c = 0; c < W; ++c)
        for (int r = 0; r < H; ++r) {
            const double v = tmp[static_cast<size_t>(r) * W + c];
            if (v == 0.0) continue;
            for (int j = std::max(0, r - rad); j <= std::min(H - 1, r + rad); ++j)
                map.grid[static_cast<size_t>(j) * W + c] += v * kernel[j - r + rad];
        }
    return map;
}

namespace {

std::vector<double> zscore(const std::vector<double>& g) {
    double m = 0.0;
    for (double v : g) m += v;
    m /= double(g.size());
    double var = 0.0;
    for (double v : g) var += (v - m) * (v - m);
    var /= double(g.size());
    if (var <= 0.0)
        throw std::domain_error("fixation map has zero variance");
    const double inv = 1.0 / std::sqrt(var);
    std::vector<double> out(g.size());
    for (size_t i = 0; i < g.size(); ++i) out[i] = (g[i] - m) * inv;
    return out;
}

}  // namespace

double cc(const FixationMap& pred, const FixationMap& human) {
    if (pred.H != human.H || pred.W != human.W)
        throw std::invalid_argument("cc: map dimensions differ");
    auto zp = zscore(pred.grid);
    auto zh = zscore(human.grid);
    double s = 0.0;
    for (size_t i = 0; i < zp.size(); ++i) s += zp[i] * zh[i];
    return s / double(zp.size());
}

double nss(const FixationMap& pred,
           const std::vector<std::pair<double, double>>& human_fixations) {
    if (human_fixations.empty())
        throw std::invalid_argument("nss: no human fixations");
    auto zp = zscore(pred.grid);
    double s = 0.0;
    for (const auto& [x, y] : human_fixations) {
        const int c = std::min(pred.W - 1, std::max(0, static_cast<int>(std::floor(x))));
        const int r = std::min(pred.H - 1, std::max(0, static_cast<int>(std::floor(y))));
        s += zp[static_cast<size_t>(r) * pred.W + c];
    }
    return s / double(human_fixations.size());
}

// ---- evaluation over a dataset ----

namespace {

struct PairCase {
    std::string image_id, target;
    std::vector<const Scanpath*> model;
    std::vector<const Scanpath*> human;
    double img_w = 0.0, img_h = 0.0;
};

void accumulate(MetricRow& acc, std::map<std::string, int>& counts,
                const MetricRow& row) {
    for (const auto& [k, v] : row) {
        acc[k] += v;
        counts[k] += 1;
    }
}

MetricRow finish_mean(const MetricRow& acc, const std::map<std::string, int>& counts) {
    MetricRow out;
    for (const auto& [k, v] : acc) out[k] = v / counts.at(k);
    return out;
}

MetricRow score_pair(const PairCase& pc, const LabelGrid* grid,
                     const EvalConfig& cfg, int* clamped) {
    MetricRow acc;
    std::map<std::string, int> counts;
    for (const Scanpath* m : pc.model)
        for (const Scanpath* h : pc.human) {
            MetricRow row;
            auto assignment = cluster_fixations({*m, *h}, cfg.cluster_bandwidth);
            FixationString sm, sh;
            sm.symbols.assign(assignment.begin(),
                              assignment.begin() + m->fixations.size());
            sh.symbols.assign(assignment.begin() + m->fixations.size(),
                              assignment.end());
            row["ss"] = sequence_score(sm, sh);
            row["fed"] = edit_distance(sm, sh);
            if (cfg.with_duration) {
                auto dm = expand_duration(*m, sm, cfg.duration_bin_ms, cfg.duration_cap);
                auto dh = expand_duration(*h, sh, cfg.duration_bin_ms, cfg.duration_cap);
                row["ss_dur"] = sequence_score(dm, dh);
                row["fed_dur"] = edit_distance(dm, dh);
            }
            if (grid) {
                auto lm = fixations_to_labels(*m, *grid);
                auto lh = fixations_to_labels(*h, *grid);
                *clamped += lm.clamped + lh.clamped;
                auto [tm, th] = semantic_strings(lm.labels, lh.labels);
                row["semss"] = sequence_score(tm, th);
                row["semfed"] = edit_distance(tm, th);
                if (cfg.with_duration) {
                    auto dm = expand_duration(*m, tm, cfg.duration_bin_ms, cfg.duration_cap);
                    auto dh = expand_duration(*h, th, cfg.duration_bin_ms, cfg.duration_cap);
                    row["semss_dur"] = sequence_score(dm, dh);
                    row["semfed_dur"] = edit_distance(dm, dh);
                }
            }
            auto mm = multimatch(*m, *h, pc.img_w, pc.img_h);
            row["mm_position"] = mm.position;
            if (mm.shape) row["mm_shape"] = *mm.shape;
            if (mm.direction) row["mm_direction"] = *mm.direction;
            if (mm.length) row["mm_length"] = *mm.length;
            row["mm"] = mm.mean();
            accumulate(acc, counts, row);
        }
    MetricRow out = finish_mean(acc, counts);

    std::vector<Scanpath> model_copies, human_copies;
    for (const Scanpath* m : pc.model) model_copies.push_back(*m);
    for (const Scanpath* h : pc.human) human_copies.push_back(*h);
    const int H = std::max(1, static_cast<int>(pc.img_h));
    const int W = std::max(1, static_cast<int>(pc.img_w));
    try {
        auto pm = fixation_map(model_copies, H, W, cfg.map_sigma);
        auto hm = fixation_map(human_copies, H, W, cfg.map_sigma);
        out["cc"] = cc(pm, hm);
        std::vector<std::pair<double, double>> hf;
        for (const auto& h : human_copies)
            for (const auto& f : h.fixations) hf.push_back({f.x, f.y});
        out["nss"] = nss(pm, hf);
    } catch (const std::domain_error&) {
        // zero-variance maps: cc/nss undefined for this pair, skip
    }
    return out;
}

}  // namespace

MetricReport evaluate(const std::vector<Scanpath>& model_paths,
                      const std::vector<DatasetSample>& human,
                      const std::map<std::string, LabelGrid>& grids,
                      const EvalConfig& cfg) {
    std::map<std::pair<std::string, std::string>, PairCase> cases;
    for (const auto& s : human) {
        auto& pc = cases[{s.path.image_id, s.path.target_name}];
        pc.image_id = s.path.image_id;
        pc.target = s.path.target_name;
        pc.img_w = s.img_w;
        pc.img_h = s.img_h;
        pc.human.push_back(&s.path);
    }
    MetricReport report;
    for (const auto& m : model_paths) {
        auto it = cases.find({m.image_id, m.target_name});
        if (it == cases.end()) {
            report.unmatched.push_back(m.image_id + "/" + m.target_name);
            continue;
        }
        it->second.model.push_back(&m);
    }

    std::vector<const PairCase*> pair_list;
    for (const auto& [key, pc] : cases)
        if (!pc.model.empty()) pair_list.push_back(&pc);

    std::vector<MetricRow> rows(pair_list.size());
    std::vector<int> clamped(pair_list.size(), 0);
    auto worker = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const PairCase& pc = *pair_list[i];
            auto git = grids.find(pc.image_id);
            const LabelGrid* grid = git == grids.end() ? nullptr : &git->second;
            rows[i] = score_pair(pc, grid, cfg, &clamped[i]);
        }
    };
    const int n_threads = std::max(1, cfg.n_threads);
    if (n_threads == 1 || pair_list.size() < 2) {
        worker(0, pair_list.size());
    } else {
        std::vector<std::thread> threads;
        const size_t chunk = (pair_list.size() + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const size_t b = t * chunk;
            const size_t e = std::min(pair_list.size(), b + chunk);
            if (b < e) threads.emplace_back(worker, b, e);
        }
        for (auto& th : threads) th.join();
    }
    for (int c : clamped) report.label_clamped += c;

    // Per-category means, then a test-case-weighted overall aggregate.
    std::map<std::string, MetricRow> cat_acc;
    std::map<std::string, std::map<std::string, int>> cat_counts;
    for (size_t i = 0; i < pair_list.size(); ++i) {
        const std::string& cat = pair_list[i]->target;
        accumulate(cat_acc[cat], cat_counts[cat], rows[i]);
        report.category_counts[cat] += 1;
    }
    for (const auto& [cat, acc] : cat_acc)
        report.per_category[cat] = finish_mean(acc, cat_counts[cat]);

    MetricRow agg;
    std::map<std::string, int> agg_w;
    for (const auto& [cat, row] : report.per_category) {
        const int n = report.category_counts[cat];
        for (const auto& [k, v] : row) {
            agg[k] += v * n;
            agg_w[k] += n;
        }
    }
    for (const auto& [k, v] : agg) report.aggregate[k] = v / agg_w[k];
    return report;
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["aggregate"] = report.aggregate;
    for (const auto& [cat, row] : report.per_category) {
        j["per_category"][cat]["count"] = report.category_counts.at(cat);
        j["per_category"][cat]["metrics"] = row;
    }
    j["diagnostics"]["unmatched"] = report.unmatched;
    j["diagnostics"]["label_clamped"] = report.label_clamped;
    return j.dump(1);
}

void write_report_json(const std::string& path, const MetricReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write report: " + path);
    os << report_to_json(report) << "\n";
}

void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write report: " + path);
    static const char* kMetrics[] = {
        "ss",       "ss_dur",  "fed",    "fed_dur",      "semss",
        "semss_dur", "semfed", "semfed_dur", "mm",       "mm_shape",
        "mm_direction", "mm_length", "mm_position", "cc", "nss"};
    os << "metric,aggregate";
    for (const auto& [cat, _] : report.per_category) os << "," << cat;
    os << "\n";
    auto cell = [&](const MetricRow& row, const std::string& k) {
        auto it = row.find(k);
        if (it == row.end()) os << ",-";
        else os << "," << it->second;
    };
    os.precision(12);
    for (const char* m : kMetrics) {
        os << m;
        cell(report.aggregate, m);
        for (const auto& [cat, row] : report.per_category) cell(row, m);
        os << "\n";
    }
}

}  // namespace gazeformer
