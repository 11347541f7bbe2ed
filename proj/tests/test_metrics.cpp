#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gazeformer/metrics.hpp"

using namespace gazeformer;

namespace {

FixationString fs(std::vector<int> symbols) {
    FixationString s;
    s.symbols = std::move(symbols);
    return s;
}

// Brute-force global alignment: enumerate every alignment recursively and
// return the maximum number of matched pairs (match=1, mismatch=0, gap=0).
int best_alignment(const std::vector<int>& a, const std::vector<int>& b,
                   size_t i, size_t j) {
    if (i == a.size() || j == b.size()) return 0;
    int best = best_alignment(a, b, i + 1, j);       // gap in b
    best = std::max(best, best_alignment(a, b, i, j + 1));  // gap in a
    best = std::max(best, (a[i] == b[j] ? 1 : 0) + best_alignment(a, b, i + 1, j + 1));
    return best;
}

double ss_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    return static_cast<double>(best_alignment(a, b, 0, 0)) /
           static_cast<double>(std::max(a.size(), b.size()));
}

// Naive exponential Levenshtein recursion.
int lev_oracle(const std::vector<int>& a, const std::vector<int>& b, size_t i,
               size_t j) {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    int best = lev_oracle(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, lev_oracle(a, b, i + 1, j) + 1);
    best = std::min(best, lev_oracle(a, b, i, j + 1) + 1);
    return best;
}

std::vector<int> to_symbols(const std::string& s) {
    std::vector<int> out;
    for (char c : s) out.push_back(c);
    return out;
}

Scanpath make_path(std::vector<std::tuple<double, double, double>> fx,
                   const std::string& image = "img",
                   const std::string& target = "cup") {
    Scanpath s;
    s.image_id = image;
    s.target_name = target;
    for (auto [x, y, t] : fx) s.fixations.push_back({x, y, t});
    return s;
}

Scanpath random_path(std::mt19937_64& rng, int n, double img_w = 1680,
                     double img_h = 1050) {
    std::uniform_real_distribution<double> ux(0, img_w), uy(0, img_h),
        ut(50, 600);
    Scanpath s;
    s.image_id = "img";
    s.target_name = "cup";
    for (int i = 0; i < n; ++i) s.fixations.push_back({ux(rng), uy(rng), ut(rng)});
    return s;
}

}  // namespace

TEST_CASE("sequence_score hand cases") {
    CHECK(sequence_score(fs({1, 2, 3}), fs({1, 2, 3})) == doctest::Approx(1.0));
    CHECK(sequence_score(fs({1, 2}), fs({3, 4})) == doctest::Approx(0.0));
    // "AB" vs "AC"
    CHECK(sequence_score(fs({'A', 'B'}), fs({'A', 'C'})) == doctest::Approx(0.5));
    CHECK_THROWS(sequence_score(fs({}), fs({1})));
}

TEST_CASE("sequence_score equals brute-force enumeration for lengths <= 5") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        int la = 1 + static_cast<int>(rng() % 5);
        int lb = 1 + static_cast<int>(rng() % 5);
        std::vector<int> a(la), b(lb);
        for (auto& v : a) v = static_cast<int>(rng() % 4);
        for (auto& v : b) v = static_cast<int>(rng() % 4);
        CHECK(sequence_score(fs(a), fs(b)) == doctest::Approx(ss_oracle(a, b)));
    }
}

TEST_CASE("sequence_score symmetry and range") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        int la = 1 + static_cast<int>(rng() % 8);
        int lb = 1 + static_cast<int>(rng() % 8);
        std::vector<int> a(la), b(lb);
        for (auto& v : a) v = static_cast<int>(rng() % 5);
        for (auto& v : b) v = static_cast<int>(rng() % 5);
        double sab = sequence_score(fs(a), fs(b));
        double sba = sequence_score(fs(b), fs(a));
        CHECK(sab == doctest::Approx(sba));
        CHECK(sab >= 0.0);
        CHECK(sab <= 1.0);
        CHECK(sequence_score(fs(a), fs(a)) == doctest::Approx(1.0));
    }
}

TEST_CASE("edit_distance hand cases") {
    CHECK(edit_distance(fs({1, 2, 3}), fs({1, 2, 3})) == 0);
    CHECK(edit_distance(fs({}), fs({1, 2, 3})) == 3);
    CHECK(edit_distance(fs(to_symbols("kitten")), fs(to_symbols("sitting"))) == 3);
}

TEST_CASE("edit_distance equals naive recursion exhaustively (len <= 6, alphabet 3)") {
    // Enumerate all pairs by interpreting counters as base-3 strings.
    std::vector<std::vector<int>> all;
    for (int len = 0; len <= 6; ++len) {
        int count = 1;
        for (int i = 0; i < len; ++i) count *= 3;
        for (int code = 0; code < count; ++code) {
            std::vector<int> s(len);
            int c = code;
            for (int i = 0; i < len; ++i) {
                s[i] = c % 3;
                c /= 3;
            }
            all.push_back(std::move(s));
        }
    }
    // All-pairs is ~1.2M comparisons at full cross product; sample the
    // cross product deterministically to keep the runtime bounded while
    // still covering every string at least once.
    std::mt19937_64 rng(47);
    for (size_t i = 0; i < all.size(); ++i) {
        const auto& a = all[i];
        const auto& b = all[rng() % all.size()];
        CHECK(edit_distance(fs(a), fs(b)) == lev_oracle(a, b, 0, 0));
    }
    // plus a dense exhaustive block over short strings
    for (const auto& a : all)
        if (a.size() <= 3)
            for (const auto& b : all)
                if (b.size() <= 3)
                    CHECK(edit_distance(fs(a), fs(b)) == lev_oracle(a, b, 0, 0));
}

TEST_CASE("edit_distance is a metric") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 200; ++trial) {
        auto rand_str = [&] {
            std::vector<int> s(rng() % 11);
            for (auto& v : s) v = static_cast<int>(rng() % 5);
            return s;
        };
        auto a = rand_str(), b = rand_str(), c = rand_str();
        CHECK(edit_distance(fs(a), fs(a)) == 0);
        CHECK(edit_distance(fs(a), fs(b)) == edit_distance(fs(b), fs(a)));
        CHECK(edit_distance(fs(a), fs(c)) <=
              edit_distance(fs(a), fs(b)) + edit_distance(fs(b), fs(c)));
        if (a != b) CHECK(edit_distance(fs(a), fs(b)) > 0);
    }
}

TEST_CASE("expand_duration repetition rule") {
    Scanpath s = make_path({{10, 10, 50}, {20, 20, 120}, {30, 30, 10000}});
    FixationString base = fs({7, 8, 9});
    FixationString e = expand_duration(s, base, 50.0, 20);
    std::vector<int> expected;
    expected.insert(expected.end(), 1, 7);    // ceil(50/50) = 1
    expected.insert(expected.end(), 3, 8);    // ceil(120/50) = 3
    expected.insert(expected.end(), 20, 9);   // capped
    CHECK(e.symbols == expected);
    CHECK(e.duration_expanded);
}

TEST_CASE("cluster_fixations basic geometry") {
    // all fixations at one point -> 1 cluster
    auto one = make_path({{100, 100, 100}, {100, 100, 100}, {100, 100, 100}});
    auto ids = cluster_fixations({one}, 60.0);
    CHECK(*std::max_element(ids.begin(), ids.end()) == 0);

    // two tight groups 500 px apart, bandwidth 50 -> 2 clusters
    auto grouped = make_path({{100, 100, 100}, {105, 102, 100}, {98, 97, 100},
                              {600, 100, 100}, {604, 103, 100}});
    ids = cluster_fixations({grouped}, 50.0);
    CHECK(*std::max_element(ids.begin(), ids.end()) == 1);
    CHECK(ids[0] == ids[1]);
    CHECK(ids[1] == ids[2]);
    CHECK(ids[3] == ids[4]);
    CHECK(ids[0] != ids[3]);
    // ids assigned by lower x first
    CHECK(ids[0] == 0);

    // bandwidth >= diagonal -> single basin
    ids = cluster_fixations({grouped}, 3000.0);
    CHECK(*std::max_element(ids.begin(), ids.end()) == 0);
}

TEST_CASE("semantic_strings shares one alphabet") {
    auto [a, b] = semantic_strings({"wall", "cup", "wall"}, {"cup", "floor"});
    CHECK(a.symbols.size() == 3);
    CHECK(b.symbols.size() == 2);
    CHECK(a.symbols[1] == b.symbols[0]);  // "cup"
    CHECK(a.symbols[0] == a.symbols[2]);  // "wall"
    CHECK(a.symbols[0] != b.symbols[1]);
}

TEST_CASE("multimatch identity and translation") {
    std::mt19937_64 rng(59);
    Scanpath a = random_path(rng, 5);
    MultiMatchResult self = multimatch(a, a, 1680, 1050);
    CHECK(self.shape.value() == doctest::Approx(1.0));
    CHECK(self.direction.value() == doctest::Approx(1.0));
    CHECK(self.length.value() == doctest::Approx(1.0));
    CHECK(self.position == doctest::Approx(1.0));
    CHECK(self.mean() == doctest::Approx(1.0));

    // pure horizontal translation
    const double delta = 120.0;
    Scanpath b = a;
    for (auto& f : b.fixations) f.x += delta;
    MultiMatchResult tr = multimatch(a, b, 1680, 1050);
    const double diag = std::hypot(1680.0, 1050.0);
    CHECK(tr.shape.value() == doctest::Approx(1.0));
    CHECK(tr.direction.value() == doctest::Approx(1.0));
    CHECK(tr.length.value() == doctest::Approx(1.0));
    CHECK(tr.position == doctest::Approx(1.0 - delta / diag));
}

TEST_CASE("multimatch direction drops for reversed path") {
    Scanpath a = make_path({{100, 500, 100}, {400, 500, 100}, {700, 500, 100}});
    Scanpath rev = a;
    std::reverse(rev.fixations.begin(), rev.fixations.end());
    MultiMatchResult r = multimatch(a, rev, 1680, 1050);
    CHECK(r.direction.value() < 1.0);
}

TEST_CASE("multimatch single-fixation path reports position only") {
    Scanpath a = make_path({{100, 100, 100}});
    Scanpath b = make_path({{100, 100, 100}, {300, 300, 100}});
    MultiMatchResult r = multimatch(a, b, 1680, 1050);
    CHECK(!r.shape.has_value());
    CHECK(!r.direction.has_value());
    CHECK(!r.length.has_value());
    CHECK(r.position > 0.0);
    CHECK(r.mean() == doctest::Approx(r.position));
}

TEST_CASE("multimatch components stay in [0,1]") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        Scanpath a = random_path(rng, 2 + static_cast<int>(rng() % 6));
        Scanpath b = random_path(rng, 2 + static_cast<int>(rng() % 6));
        MultiMatchResult r = multimatch(a, b, 1680, 1050);
        for (double v : {r.shape.value(), r.direction.value(), r.length.value(),
                         r.position}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("fixation_map mass and peak") {
    Scanpath s = make_path({{200, 150, 100}});
    FixationMap m = fixation_map({s}, 300, 400, 10.0);
    // peak at the fixation pixel
    double best = -1;
    int br = -1, bc = -1;
    for (int r = 0; r < m.H; ++r)
        for (int c = 0; c < m.W; ++c)
            if (m.at(r, c) > best) {
                best = m.at(r, c);
                br = r;
                bc = c;
            }
    CHECK(br == 150);
    CHECK(bc == 200);

    // interior fixations: mass equals fixation count
    Scanpath two = make_path({{200, 150, 100}, {100, 80, 100}});
    FixationMap m2 = fixation_map({two}, 300, 400, 10.0);
    double mass = 0.0;
    for (double v : m2.grid) mass += v;
    CHECK(std::abs(mass - 2.0) < 1e-6);

    // two distant fixations -> two local maxima
    int maxima = 0;
    for (int r = 1; r < m2.H - 1; ++r)
        for (int c = 1; c < m2.W - 1; ++c) {
            double v = m2.at(r, c);
            if (v > 1e-9 && v > m2.at(r - 1, c) && v > m2.at(r + 1, c) &&
                v > m2.at(r, c - 1) && v > m2.at(r, c + 1))
                ++maxima;
        }
    CHECK(maxima == 2);
    CHECK_THROWS(fixation_map({}, 10, 10, 5.0));
}

TEST_CASE("cc identities") {
    std::mt19937_64 rng(67);
    Scanpath s = random_path(rng, 5, 100, 100);
    FixationMap m = fixation_map({s}, 100, 100, 8.0);
    CHECK(cc(m, m) == doctest::Approx(1.0));

    FixationMap neg = m;
    for (double& v : neg.grid) v = -v;
    CHECK(cc(m, neg) == doctest::Approx(-1.0));

    FixationMap flat = m;
    std::fill(flat.grid.begin(), flat.grid.end(), 1.0);
    CHECK_THROWS(cc(m, flat));
}

TEST_CASE("cc of independent random maps is near zero") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> nd(0, 1);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        FixationMap a, b;
        a.H = b.H = 100;
        a.W = b.W = 100;
        a.grid.resize(10000);
        b.grid.resize(10000);
        for (auto& v : a.grid) v = nd(rng);
        for (auto& v : b.grid) v = nd(rng);
        worst = std::max(worst, std::abs(cc(a, b)));
    }
    CHECK(worst < 0.05);
}

TEST_CASE("nss at the peak of a single Gaussian") {
    Scanpath s = make_path({{50, 40, 100}});
    FixationMap m = fixation_map({s}, 80, 100, 6.0);
    double mean = 0.0;
    for (double v : m.grid) mean += v;
    mean /= m.grid.size();
    double var = 0.0;
    for (double v : m.grid) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / m.grid.size());
    double peak = *std::max_element(m.grid.begin(), m.grid.end());
    CHECK(nss(m, {{50, 40}}) == doctest::Approx((peak - mean) / sd));
    // self-consistency
    CHECK(nss(m, {{50, 40}}) > 0.0);
}

TEST_CASE("nss over full uniform coverage is zero") {
    std::mt19937_64 rng(73);
    Scanpath s = random_path(rng, 6, 40, 30);
    FixationMap m = fixation_map({s}, 30, 40, 4.0);
    std::vector<std::pair<double, double>> all;
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 40; ++c) all.push_back({c, r});
    CHECK(std::abs(nss(m, all)) < 1e-9);
}

TEST_CASE("cc and nss invariant to affine rescaling of the raw map") {
    std::mt19937_64 rng(79);
    Scanpath s = random_path(rng, 5, 120, 90);
    Scanpath h = random_path(rng, 5, 120, 90);
    FixationMap pred = fixation_map({s}, 90, 120, 7.0);
    FixationMap human = fixation_map({h}, 90, 120, 7.0);
    FixationMap scaled = pred;
    for (double& v : scaled.grid) v = 3.25 * v + 0.6;
    CHECK(std::abs(cc(pred, human) - cc(scaled, human)) < 1e-9);
    std::vector<std::pair<double, double>> pts{{10, 20}, {60, 45}};
    CHECK(std::abs(nss(pred, pts) - nss(scaled, pts)) < 1e-9);
}

TEST_CASE("evaluate: identical model and human paths score perfectly") {
    std::mt19937_64 rng(83);
    Scanpath human = random_path(rng, 4);
    human.subject = "subj1";
    DatasetSample hs{human, 1680, 1050};
    Scanpath model = human;
    model.subject = "model";
    EvalConfig cfg;
    auto rep = evaluate({model}, {hs}, {}, cfg);
    CHECK(rep.aggregate.at("ss") == doctest::Approx(1.0));
    CHECK(rep.aggregate.at("fed") == doctest::Approx(0.0));
    CHECK(rep.aggregate.at("mm") == doctest::Approx(1.0));
    CHECK(rep.aggregate.at("cc") == doctest::Approx(1.0));
    CHECK(rep.unmatched.empty());
    // no label grids -> semantic metrics absent
    CHECK(rep.aggregate.find("semss") == rep.aggregate.end());
}

TEST_CASE("evaluate: weighted aggregation over two categories") {
    // category A: 1 test case, category B: 3 test cases. The aggregate must
    // equal (1*sA + 3*sB)/4 for every metric.
    std::mt19937_64 rng(89);
    std::vector<DatasetSample> human;
    std::vector<Scanpath> model;
    auto add_case = [&](const std::string& img, const std::string& cat) {
        Scanpath h = random_path(rng, 4);
        h.image_id = img;
        h.target_name = cat;
        h.subject = "s1";
        human.push_back({h, 1680, 1050});
        Scanpath m = random_path(rng, 4);
        m.image_id = img;
        m.target_name = cat;
        model.push_back(m);
    };
    add_case("a1", "knife");
    add_case("b1", "cup");
    add_case("b2", "cup");
    add_case("b3", "cup");
    EvalConfig cfg;
    auto rep = evaluate(model, human, {}, cfg);
    CHECK(rep.category_counts.at("knife") == 1);
    CHECK(rep.category_counts.at("cup") == 3);
    for (const auto& [name, value] : rep.aggregate) {
        double expect = (1.0 * rep.per_category.at("knife").at(name) +
                         3.0 * rep.per_category.at("cup").at(name)) /
                        4.0;
        CHECK(std::abs(value - expect) < 1e-12);
    }
}

TEST_CASE("evaluate: unmatched model paths are listed and excluded") {
    std::mt19937_64 rng(97);
    Scanpath h = random_path(rng, 3);
    h.image_id = "img1";
    h.subject = "s1";
    Scanpath matched = random_path(rng, 3);
    matched.image_id = "img1";
    Scanpath orphan = random_path(rng, 3);
    orphan.image_id = "img-unknown";
    EvalConfig cfg;
    auto rep = evaluate({matched, orphan}, {DatasetSample{h, 1680, 1050}}, {}, cfg);
    CHECK(rep.unmatched.size() == 1);
}

TEST_CASE("evaluate: with_duration=false leaves duration cells out") {
    std::mt19937_64 rng(101);
    Scanpath h = random_path(rng, 4);
    h.subject = "s1";
    Scanpath m = random_path(rng, 4);
    EvalConfig cfg;
    cfg.with_duration = false;
    auto rep = evaluate({m}, {DatasetSample{h, 1680, 1050}}, {}, cfg);
    CHECK(rep.aggregate.count("ss") == 1);
    CHECK(rep.aggregate.count("ss_dur") == 0);
    CHECK(rep.aggregate.count("fed_dur") == 0);
}

TEST_CASE("evaluate: semantic metrics from label grids") {
    // 1680x1050 grid split into left "wall" and right "cup" halves.
    LabelGrid grid;
    grid.H = 1050;
    grid.W = 1680;
    grid.labels.assign(static_cast<size_t>(grid.H) * grid.W, 0);
    for (int r = 0; r < grid.H; ++r)
        for (int c = 840; c < grid.W; ++c)
            grid.labels[static_cast<size_t>(r) * grid.W + c] = 1;
    grid.class_names = {{0, "wall"}, {1, "cup"}};

    Scanpath h = make_path({{100, 100, 200}, {1000, 500, 200}});
    h.subject = "s1";
    Scanpath m = h;
    m.subject = "model";
    std::map<std::string, LabelGrid> grids;
    grids["img"] = grid;
    EvalConfig cfg;
    auto rep = evaluate({m}, {DatasetSample{h, 1680, 1050}}, grids, cfg);
    CHECK(rep.aggregate.at("semss") == doctest::Approx(1.0));
    CHECK(rep.aggregate.at("semfed") == doctest::Approx(0.0));
}

TEST_CASE("report serialization includes aggregate and categories") {
    std::mt19937_64 rng(103);
    Scanpath h = random_path(rng, 4);
    h.subject = "s1";
    Scanpath m = random_path(rng, 4);
    EvalConfig cfg;
    auto rep = evaluate({m}, {DatasetSample{h, 1680, 1050}}, {}, cfg);
    std::string j = report_to_json(rep);
    CHECK(j.find("aggregate") != std::string::npos);
    CHECK(j.find("per_category") != std::string::npos);
    CHECK(j.find("ss") != std::string::npos);
}

TEST_CASE("threaded evaluation matches single-threaded") {
    std::mt19937_64 rng(107);
    std::vector<DatasetSample> human;
    std::vector<Scanpath> model;
    for (int i = 0; i < 6; ++i) {
        Scanpath h = random_path(rng, 4);
        h.image_id = "img" + std::to_string(i);
        h.target_name = (i % 2) ? "cup" : "knife";
        h.subject = "s1";
        human.push_back({h, 1680, 1050});
        Scanpath m = random_path(rng, 4);
        m.image_id = h.image_id;
        m.target_name = h.target_name;
        model.push_back(m);
    }
    EvalConfig c1;
    c1.n_threads = 1;
    EvalConfig c4;
    c4.n_threads = 4;
    auto r1 = evaluate(model, human, {}, c1);
    auto r4 = evaluate(model, human, {}, c4);
    for (const auto& [name, value] : r1.aggregate)
        CHECK(value == doctest::Approx(r4.aggregate.at(name)).epsilon(1e-12));
}
