#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gazeformer/tensor.hpp"

using namespace gazeformer;

namespace {

// Independent triple-loop matmul oracle.
std::vector<double> matmul_oracle(const std::vector<double>& a,
                                  const std::vector<double>& b, int m, int k,
                                  int n) {
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
                out[i * n + j] += a[i * k + p] * b[p * n + j];
    return out;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool rg = false) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> d(shape_size(shape));
    for (auto& v : d) v = nd(rng);
    return Tensor(std::move(shape), std::move(d), rg);
}

// Naive per-head attention oracle working on plain vectors.
std::vector<double> mha_oracle(const Tensor& q, const Tensor& k,
                               const Tensor& v, int heads,
                               const MhaWeights& w) {
    const int lq = q.rows(), lk = k.rows(), d = q.cols();
    const int dh = d / heads;
    auto project = [&](const Tensor& x, const Linear& l, int rows) {
        std::vector<double> out(static_cast<size_t>(rows) * d);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
                double s = l.b.data()[j];
                for (int p = 0; p < d; ++p)
                    s += x.data()[i * d + p] * l.w.data()[p * d + j];
                out[i * d + j] = s;
            }
        return out;
    };
    auto qp = project(q, w.q, lq);
    auto kp = project(k, w.k, lk);
    auto vp = project(v, w.v, lk);
    std::vector<double> concat(static_cast<size_t>(lq) * d, 0.0);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < lq; ++i) {
            std::vector<double> logits(lk);
            for (int j = 0; j < lk; ++j) {
                double s = 0.0;
                for (int p = 0; p < dh; ++p)
                    s += qp[i * d + h * dh + p] * kp[j * d + h * dh + p];
                logits[j] = s / std::sqrt(static_cast<double>(dh));
            }
            double mx = logits[0];
            for (double l : logits) mx = std::max(mx, l);
            double z = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (int j = 0; j < lk; ++j)
                for (int p = 0; p < dh; ++p)
                    concat[i * d + h * dh + p] +=
                        logits[j] / z * vp[j * d + h * dh + p];
        }
    }
    std::vector<double> out(static_cast<size_t>(lq) * d);
    for (int i = 0; i < lq; ++i)
        for (int j = 0; j < d; ++j) {
            double s = w.out.b.data()[j];
            for (int p = 0; p < d; ++p)
                s += concat[i * d + p] * w.out.w.data()[p * d + j];
            out[i * d + j] = s;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul identity and small hand cases") {
    Tensor i2({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor r = matmul(i2, a);
    for (int i = 0; i < 4; ++i) CHECK(r.data()[i] == doctest::Approx(a.data()[i]));

    Tensor b({1, 2}, {1, 2});
    Tensor c({2, 1}, {3, 4});
    CHECK(matmul(b, c).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
    std::mt19937_64 rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    auto oracle = matmul_oracle(a.data(), b.data(), 3, 4, 5);
    Tensor r = matmul(a, b);
    for (size_t i = 0; i < oracle.size(); ++i)
        CHECK(std::abs(r.data()[i] - oracle[i]) < 1e-12);

    // random shapes up to 8x8x8
    for (int trial = 0; trial < 30; ++trial) {
        int m = 1 + static_cast<int>(rng() % 8);
        int k = 1 + static_cast<int>(rng() % 8);
        int n = 1 + static_cast<int>(rng() % 8);
        Tensor x = random_tensor({m, k}, rng);
        Tensor y = random_tensor({k, n}, rng);
        auto o = matmul_oracle(x.data(), y.data(), m, k, n);
        Tensor z = matmul(x, y);
        for (size_t i = 0; i < o.size(); ++i) {
            double denom = std::max(1.0, std::abs(o[i]));
            CHECK(std::abs(z.data()[i] - o[i]) / denom < 1e-12);
        }
    }
}

TEST_CASE("matmul rejects shape mismatch") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS(matmul(a, b));
}

TEST_CASE("softmax basics") {
    Tensor s = softmax(Tensor({1, 2}, {0, 0}), 1);
    CHECK(s.data()[0] == doctest::Approx(0.5));
    CHECK(s.data()[1] == doctest::Approx(0.5));

    Tensor t = softmax(Tensor({1, 3}, {1, 2, 3}), 1);
    long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
    long double z = e1 + e2 + e3;
    CHECK(std::abs(t.data()[0] - static_cast<double>(e1 / z)) < 1e-12);
    CHECK(std::abs(t.data()[1] - static_cast<double>(e2 / z)) < 1e-12);
    CHECK(std::abs(t.data()[2] - static_cast<double>(e3 / z)) < 1e-12);

    Tensor u = softmax(Tensor({1, 2}, {1000, 0}), 1);
    CHECK(u.data()[0] == doctest::Approx(1.0));
    CHECK(u.data()[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(u.data()[0]));
}

TEST_CASE("softmax rows sum to 1 and shift invariance") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({4, 6}, rng);
        Tensor s = softmax(x, 1);
        for (int r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 6; ++c) sum += s.at(r, c);
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
        Tensor shifted = softmax(add_scalar(x, 3.7), 1);
        for (int i = 0; i < x.size(); ++i)
            CHECK(std::abs(s.data()[i] - shifted.data()[i]) < 1e-12);
    }
}

TEST_CASE("softmax along axis 0") {
    Tensor x({2, 2}, {0, 1, 0, 3});
    Tensor s = softmax(x, 0);
    for (int c = 0; c < 2; ++c)
        CHECK(std::abs(s.at(0, c) + s.at(1, c) - 1.0) < 1e-12);
    CHECK(s.at(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("layer_norm examples") {
    Tensor g1 = Tensor::full({4}, 1.0);
    Tensor b0 = Tensor::zeros({4});
    Tensor r = layer_norm(Tensor({1, 4}, {5, 5, 5, 5}), g1, b0);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(r.data()[i]) < 1e-6);

    Tensor g2 = Tensor::full({2}, 1.0);
    Tensor b2 = Tensor::zeros({2});
    Tensor r2 = layer_norm(Tensor({1, 2}, {1, 3}), g2, b2, 1e-12);
    CHECK(r2.data()[0] == doctest::Approx(-1.0));
    CHECK(r2.data()[1] == doctest::Approx(1.0));

    // gamma = 0 -> output equals beta broadcast
    Tensor g0 = Tensor::zeros({2});
    Tensor bb({2}, {0.3, -0.7});
    Tensor r3 = layer_norm(Tensor({1, 2}, {4, 9}), g0, bb);
    CHECK(r3.data()[0] == doctest::Approx(0.3));
    CHECK(r3.data()[1] == doctest::Approx(-0.7));
}

TEST_CASE("layer_norm row mean near zero with beta=0") {
    std::mt19937_64 rng(13);
    Tensor g = Tensor::full({8}, 1.0);
    Tensor b = Tensor::zeros({8});
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor({5, 8}, rng);
        Tensor y = layer_norm(x, g, b);
        for (int r = 0; r < 5; ++r) {
            double m = 0.0;
            for (int c = 0; c < 8; ++c) m += y.at(r, c);
            CHECK(std::abs(m / 8.0) < 1e-10);
        }
    }
}

TEST_CASE("multi_head_attention single key selects v") {
    std::mt19937_64 rng(17);
    const int d = 4;
    auto identity_linear = [&] {
        std::vector<double> w(d * d, 0.0);
        for (int i = 0; i < d; ++i) w[i * d + i] = 1.0;
        return Linear{Tensor({d, d}, w), Tensor::zeros({d})};
    };
    MhaWeights mw{identity_linear(), identity_linear(), identity_linear(),
                  identity_linear()};
    Tensor q = random_tensor({3, d}, rng);
    Tensor k = random_tensor({1, d}, rng);
    Tensor v = random_tensor({1, d}, rng);
    Tensor out = multi_head_attention(q, k, v, 2, mw);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < d; ++c)
            CHECK(out.at(r, c) == doctest::Approx(v.at(0, c)));
}

TEST_CASE("multi_head_attention one-hot selection at large scale") {
    const int d = 4;
    auto identity_linear = [&] {
        std::vector<double> w(d * d, 0.0);
        for (int i = 0; i < d; ++i) w[i * d + i] = 1.0;
        return Linear{Tensor({d, d}, w), Tensor::zeros({d})};
    };
    MhaWeights mw{identity_linear(), identity_linear(), identity_linear(),
                  identity_linear()};
    // Orthogonal one-hot q/k at scale 50: softmax saturates to row selection.
    const double s = 50.0;
    Tensor q({2, d}, {s, 0, 0, 0, 0, s, 0, 0});
    Tensor k({2, d}, {s, 0, 0, 0, 0, s, 0, 0});
    Tensor v({2, d}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor out = multi_head_attention(q, k, v, 1, mw);
    for (int c = 0; c < d; ++c) {
        CHECK(std::abs(out.at(0, c) - v.at(0, c)) < 1e-6);
        CHECK(std::abs(out.at(1, c) - v.at(1, c)) < 1e-6);
    }
}

TEST_CASE("multi_head_attention matches naive loop oracle") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 8;
        const int heads = (trial % 2) ? 2 : 4;
        MhaWeights mw{
            {random_tensor({d, d}, rng), random_tensor({d}, rng)},
            {random_tensor({d, d}, rng), random_tensor({d}, rng)},
            {random_tensor({d, d}, rng), random_tensor({d}, rng)},
            {random_tensor({d, d}, rng), random_tensor({d}, rng)}};
        Tensor q = random_tensor({3, d}, rng);
        Tensor k = random_tensor({5, d}, rng);
        Tensor v = random_tensor({5, d}, rng);
        Tensor out = multi_head_attention(q, k, v, heads, mw);
        auto oracle = mha_oracle(q, k, v, heads, mw);
        for (int i = 0; i < out.size(); ++i)
            CHECK(std::abs(out.data()[i] - oracle[i]) < 1e-10);
    }
}

TEST_CASE("multi_head_attention key/value permutation invariance") {
    std::mt19937_64 rng(23);
    const int d = 8;
    MhaWeights mw{
        {random_tensor({d, d}, rng), random_tensor({d}, rng)},
        {random_tensor({d, d}, rng), random_tensor({d}, rng)},
        {random_tensor({d, d}, rng), random_tensor({d}, rng)},
        {random_tensor({d, d}, rng), random_tensor({d}, rng)}};
    Tensor q = random_tensor({2, d}, rng);
    Tensor k = random_tensor({3, d}, rng);
    Tensor v = random_tensor({3, d}, rng);
    // permute rows (2,0,1) of k and v together
    auto permute = [&](const Tensor& t) {
        std::vector<double> p(t.data().size());
        const int perm[3] = {2, 0, 1};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < d; ++c) p[r * d + c] = t.at(perm[r], c);
        return Tensor({3, d}, p);
    };
    Tensor a = multi_head_attention(q, k, v, 2, mw);
    Tensor b = multi_head_attention(q, permute(k), permute(v), 2, mw);
    for (int i = 0; i < a.size(); ++i)
        CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-12);
}

TEST_CASE("multi_head_attention rejects indivisible heads") {
    std::mt19937_64 rng(29);
    const int d = 6;
    MhaWeights mw{
        {random_tensor({d, d}, rng), random_tensor({d}, rng)},
        {random_tensor({d, d}, rng), random_tensor({d}, rng)},
        {random_tensor({d, d}, rng), random_tensor({d}, rng)},
        {random_tensor({d, d}, rng), random_tensor({d}, rng)}};
    Tensor q = random_tensor({2, d}, rng);
    CHECK_THROWS(multi_head_attention(q, q, q, 4, mw));
}

TEST_CASE("backward on sum gives ones, on x*x gives 2x") {
    Tensor x({3}, {1, 2, 3}, true);
    backward(sum(x));
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));

    Tensor y({3}, {1, 2, 3}, true);
    backward(sum(y * y));
    for (int i = 0; i < 3; ++i)
        CHECK(y.grad()[i] == doctest::Approx(2.0 * y.data()[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x({2}, {1, 2}, true);
    CHECK_THROWS(backward(x * x));
}

TEST_CASE("finite_diff_check on simple functions") {
    Tensor x({3}, {1, 2, 3}, true);
    CHECK(finite_diff_check([&] { return sum(x); }, x) < 1e-10);
    CHECK(finite_diff_check([&] { return sum(x * x); }, x) < 1e-8);
}

TEST_CASE("finite-diff property over every differentiable op") {
    std::mt19937_64 rng(31);
    int trial = 0;
    auto check = [&](const std::function<Tensor(const Tensor&)>& f, Shape shape,
                     bool positive = false) {
        Tensor x = random_tensor(shape, rng, true);
        if (positive)
            for (auto& v : x.data()) v = std::abs(v) + 0.5;
        double err = finite_diff_check([&] { return sum(f(x)); }, x);
        INFO("trial ", trial, " err ", err);
        CHECK(err < 1e-5);
        ++trial;
    };
    std::mt19937_64 aux(101);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor other = random_tensor({3, 4}, aux);
        Tensor rhs = random_tensor({4, 2}, aux);
        Tensor vec = random_tensor({4}, aux);
        Tensor g = random_tensor({4}, aux);
        Tensor b = random_tensor({4}, aux);
        check([&](const Tensor& x) { return matmul(x, rhs); }, {3, 4});
        check([&](const Tensor& x) { return matmul(other, transpose(x)); }, {4, 4});
        check([&](const Tensor& x) { return x + other; }, {3, 4});
        check([&](const Tensor& x) { return x - other; }, {3, 4});
        check([&](const Tensor& x) { return x * other; }, {3, 4});
        check([&](const Tensor& x) { return scale(x, -1.7); }, {3, 4});
        check([&](const Tensor& x) { return add_rowvec(x, vec); }, {3, 4});
        check([&](const Tensor& x) { return relu(add_scalar(x, 0.05)); }, {3, 4});
        check([&](const Tensor& x) { return abs_val(add_scalar(x, 0.05)); }, {3, 4});
        check([&](const Tensor& x) { return log_op(x); }, {3, 4}, true);
        check([&](const Tensor& x) { return exp_op(x); }, {3, 4});
        check([&](const Tensor& x) { return softmax(x, 1); }, {3, 4});
        check([&](const Tensor& x) { return softmax(x, 0); }, {3, 4});
        check([&](const Tensor& x) { return layer_norm(x, g, b); }, {3, 4});
        check([&](const Tensor& x) { return mean(x); }, {3, 4});
        check([&](const Tensor& x) { return slice_rows(x, 1, 3); }, {4, 3});
        check([&](const Tensor& x) { return slice_cols(x, 0, 2); }, {3, 4});
        check([&](const Tensor& x) { return concat_rows({x, other}); }, {3, 4});
        check([&](const Tensor& x) { return concat_cols({x, other}); }, {3, 4});
        check([&](const Tensor& x) { return reshape(x, {4, 3}); }, {3, 4});
    }
    CHECK(trial >= 100);
}

TEST_CASE("finite-diff through multi-head attention weights") {
    std::mt19937_64 rng(37);
    const int d = 4;
    MhaWeights mw{
        {random_tensor({d, d}, rng, true), random_tensor({d}, rng, true)},
        {random_tensor({d, d}, rng, true), random_tensor({d}, rng, true)},
        {random_tensor({d, d}, rng, true), random_tensor({d}, rng, true)},
        {random_tensor({d, d}, rng, true), random_tensor({d}, rng, true)}};
    Tensor q = random_tensor({2, d}, rng, true);
    Tensor k = random_tensor({3, d}, rng);
    Tensor v = random_tensor({3, d}, rng);
    auto loss = [&] { return sum(multi_head_attention(q, k, v, 2, mw)); };
    CHECK(finite_diff_check(loss, q) < 1e-5);
    CHECK(finite_diff_check(loss, mw.q.w) < 1e-5);
    CHECK(finite_diff_check(loss, mw.v.w) < 1e-5);
    CHECK(finite_diff_check(loss, mw.out.b) < 1e-5);
}

TEST_CASE("tensor constructor rejects non-finite values") {
    CHECK_THROWS(Tensor({2}, {1.0, std::nan("")}));
    CHECK_THROWS(Tensor({2}, {1.0}));
}

TEST_CASE("grad accumulation across reuse") {
    Tensor x({2}, {1.0, 2.0}, true);
    Tensor y = x + x;  // dy/dx = 2
    backward(sum(y));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("zero_grad clears accumulated gradients") {
    Tensor x({2}, {1.0, 2.0}, true);
    backward(sum(x * x));
    zero_grad({x});
    for (double g : x.grad()) CHECK(g == 0.0);
}
