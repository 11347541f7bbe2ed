#include "gazeformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace gazeformer {

int shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), 1, std::multiplies<>());
}

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

std::vector<double>& ensure_grad(const NodePtr& n) {
    if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
    return n->grad;
}

NodePtr make_node(Shape shape, std::vector<double> data,
                  std::vector<NodePtr> inputs) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs)
        if (in->requires_grad) n->requires_grad = true;
    return n;
}

void check_2d(const Tensor& t, const char* what) {
    if (!t.defined() || t.rank() != 2)
        throw std::invalid_argument(std::string(what) + ": expected a 2D tensor");
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != static_cast<int>(data.size()))
        throw std::invalid_argument("Tensor: shape/data size mismatch");
    for (double v : data)
        if (!std::isfinite(v))
            throw std::invalid_argument("Tensor: non-finite value rejected");
    n_ = std::make_shared<TensorNode>();
    n_->shape = std::move(shape);
    n_->data = std::move(data);
    n_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const size_t n = static_cast<size_t>(shape_size(shape));
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const size_t n = static_cast<size_t>(shape_size(shape));
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> d(static_cast<size_t>(shape_size(shape)));
    for (auto& v : d) v = dist(rng);
    return Tensor(std::move(shape), std::move(d), requires_grad);
}

std::vector<double>& Tensor::grad() { return ensure_grad(n_); }

double Tensor::item() const {
    if (size() != 1) throw std::logic_error("item(): tensor is not scalar");
    return n_->data[0];
}

double Tensor::at(int r, int c) const {
    return n_->data[static_cast<size_t>(r) * n_->shape.at(1) + c];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul lhs");
    check_2d(b, "matmul rhs");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw std::invalid_argument("matmul: inner dimensions differ (" +
                                    std::to_string(k) + " vs " +
                                    std::to_string(b.rows()) + ")");
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = ad[static_cast<size_t>(i) * k + p];
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] += av * bd[static_cast<size_t>(p) * n + j];
        }
    auto node = make_node({m, n}, std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto an = a.node(), bn = b.node(); TensorNode* on = node.get();
        node->backward_fn = [an, bn, on, m, k, n]() {
            const auto& g = on->grad;
            if (an->requires_grad) {
                auto& ga = ensure_grad(an);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += g[static_cast<size_t>(i) * n + j] *
                                   bn->data[static_cast<size_t>(p) * n + j];
                        ga[static_cast<size_t>(i) * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(bn);
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += an->data[static_cast<size_t>(i) * k + p] *
                                   g[static_cast<size_t>(i) * n + j];
                        gb[static_cast<size_t>(p) * n + j] += acc;
                    }
            }
        };
    }
    return Tensor(node);
}

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    const int m = a.rows(), n = a.cols();
    std::vector<double> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
    auto node = make_node({n, m}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on, m, n]() {
            auto& ga = ensure_grad(an);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    ga[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
        };
    }
    return Tensor(node);
}

namespace {

Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name,
                          const std::function<double(double, double)>& f,
                          bool grad_a_is_one, double grad_b_sign) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(name) + ": shape mismatch");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i], b.data()[i]);
    auto node = make_node(a.shape(), std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto an = a.node(), bn = b.node(); TensorNode* on = node.get();
        node->backward_fn = [an, bn, on, grad_a_is_one, grad_b_sign]() {
            if (an->requires_grad) {
                auto& ga = ensure_grad(an);
                for (size_t i = 0; i < ga.size(); ++i)
                    ga[i] += on->grad[i] * (grad_a_is_one ? 1.0 : bn->data[i]);
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(bn);
                for (size_t i = 0; i < gb.size(); ++i)
                    gb[i] += on->grad[i] * (grad_a_is_one ? grad_b_sign : an->data[i]);
            }
        };
    }
    return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "add", [](double x, double y) { return x + y; },
                              true, 1.0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "sub", [](double x, double y) { return x - y; },
                              true, -1.0);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "mul", [](double x, double y) { return x * y; },
                              false, 0.0);
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on, c]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i] * c;
        };
    }
    return Tensor(node);
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i];
        };
    }
    return Tensor(node);
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    check_2d(a, "add_rowvec lhs");
    const int m = a.rows(), n = a.cols();
    if (v.size() != n) throw std::invalid_argument("add_rowvec: width mismatch");
    std::vector<double> out(a.data().size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] =
                a.data()[static_cast<size_t>(i) * n + j] + v.data()[static_cast<size_t>(j)];
    auto node = make_node(a.shape(), std::move(out), {a.node(), v.node()});
    if (node->requires_grad) {
        auto an = a.node(), vn = v.node(); TensorNode* on = node.get();
        node->backward_fn = [an, vn, on, m, n]() {
            if (an->requires_grad) {
                auto& ga = ensure_grad(an);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i];
            }
            if (vn->requires_grad) {
                auto& gv = ensure_grad(vn);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gv[static_cast<size_t>(j)] += on->grad[static_cast<size_t>(i) * n + j];
            }
        };
    }
    return Tensor(node);
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.data()[i]);
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i)
                if (an->data[i] > 0.0) ga[i] += on->grad[i];
        };
    }
    return Tensor(node);
}

Tensor abs_val(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.data()[i]);
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i) {
                const double x = an->data[i];
                if (x > 0.0) ga[i] += on->grad[i];
                else if (x < 0.0) ga[i] -= on->grad[i];
            }
        };
    }
    return Tensor(node);
}

Tensor log_op(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i] / an->data[i];
        };
    }
    return Tensor(node);
}

Tensor exp_op(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i] * on->data[i];
        };
    }
    return Tensor(node);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(hi, std::max(lo, a.data()[i]));
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on, lo, hi]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i)
                if (an->data[i] > lo && an->data[i] < hi) ga[i] += on->grad[i];
        };
    }
    return Tensor(node);
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank())
        throw std::invalid_argument("softmax: axis out of range");
    const auto& shape = x.shape();
    const int n = shape[axis];
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[i];
    for (int i = axis + 1; i < x.rank(); ++i) inner *= shape[i];
    std::vector<double> out(x.data().size());
    for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
            const size_t base = static_cast<size_t>(o) * n * inner + in;
            double mx = x.data()[base];
            for (int j = 1; j < n; ++j)
                mx = std::max(mx, x.data()[base + static_cast<size_t>(j) * inner]);
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                const double e = std::exp(x.data()[base + static_cast<size_t>(j) * inner] - mx);
                out[base + static_cast<size_t>(j) * inner] = e;
                denom += e;
            }
            for (int j = 0; j < n; ++j)
                out[base + static_cast<size_t>(j) * inner] /= denom;
        }
    auto node = make_node(shape, std::move(out), {x.node()});
    if (node->requires_grad) {
        auto xn = x.node(); TensorNode* on = node.get();
        node->backward_fn = [xn, on, outer, inner, n]() {
            auto& gx = ensure_grad(xn);
            for (int o = 0; o < outer; ++o)
                for (int in = 0; in < inner; ++in) {
                    const size_t base = static_cast<size_t>(o) * n * inner + in;
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const size_t idx = base + static_cast<size_t>(j) * inner;
                        dot += on->grad[idx] * on->data[idx];
                    }
                    for (int j = 0; j < n; ++j) {
                        const size_t idx = base + static_cast<size_t>(j) * inner;
                        gx[idx] += (on->grad[idx] - dot) * on->data[idx];
                    }
                }
        };
    }
    return Tensor(node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
    const int d = x.shape().back();
    if (gamma.size() != d || beta.size() != d)
        throw std::invalid_argument("layer_norm: gamma/beta size mismatch");
    const int rows = x.size() / d;
    std::vector<double> out(x.data().size());
    std::vector<double> inv_std(rows), mean_row(rows);
    for (int r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * d;
        double m = 0.0;
        for (int j = 0; j < d; ++j) m += x.data()[base + j];
        m /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = x.data()[base + j] - m;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        mean_row[r] = m;
        inv_std[r] = is;
        for (int j = 0; j < d; ++j)
            out[base + j] = (x.data()[base + j] - m) * is * gamma.data()[j] + beta.data()[j];
    }
    auto node = make_node(x.shape(), std::move(out),
                          {x.node(), gamma.node(), beta.node()});
    if (node->requires_grad) {
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(); TensorNode* on = node.get();
        node->backward_fn = [xn, gn, bn, on, rows, d, mean_row, inv_std]() {
            for (int r = 0; r < rows; ++r) {
                const size_t base = static_cast<size_t>(r) * d;
                // xhat reconstructed from cached row statistics
                double sum_gh = 0.0, sum_gh_xhat = 0.0;
                std::vector<double> xhat(d), gh(d);
                for (int j = 0; j < d; ++j) {
                    xhat[j] = (xn->data[base + j] - mean_row[r]) * inv_std[r];
                    gh[j] = on->grad[base + j] * gn->data[j];
                    sum_gh += gh[j];
                    sum_gh_xhat += gh[j] * xhat[j];
                }
                if (xn->requires_grad) {
                    auto& gx = ensure_grad(xn);
                    for (int j = 0; j < d; ++j)
                        gx[base + j] += inv_std[r] *
                            (gh[j] - sum_gh / d - xhat[j] * sum_gh_xhat / d);
                }
                if (gn->requires_grad) {
                    auto& gg = ensure_grad(gn);
                    for (int j = 0; j < d; ++j)
                        gg[j] += on->grad[base + j] * xhat[j];
                }
                if (bn->requires_grad) {
                    auto& gb = ensure_grad(bn);
                    for (int j = 0; j < d; ++j) gb[j] += on->grad[base + j];
                }
            }
        };
    }
    return Tensor(node);
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto node = make_node({1}, {s}, {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (auto& g : ga) g += on->grad[0];
        };
    }
    return Tensor(node);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / a.size()); }

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    check_2d(a, "slice_rows");
    const int n = a.cols();
    if (r0 < 0 || r1 > a.rows() || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range");
    std::vector<double> out(a.data().begin() + static_cast<size_t>(r0) * n,
                            a.data().begin() + static_cast<size_t>(r1) * n);
    auto node = make_node({r1 - r0, n}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on, r0, n]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < on->grad.size(); ++i)
                ga[static_cast<size_t>(r0) * n + i] += on->grad[i];
        };
    }
    return Tensor(node);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    check_2d(a, "slice_cols");
    const int m = a.rows(), n = a.cols();
    if (c0 < 0 || c1 > n || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range");
    const int w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
            out[static_cast<size_t>(i) * w + j] = a.data()[static_cast<size_t>(i) * n + c0 + j];
    auto node = make_node({m, w}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on, m, n, c0, w]() {
            auto& ga = ensure_grad(an);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    ga[static_cast<size_t>(i) * n + c0 + j] += on->grad[static_cast<size_t>(i) * w + j];
        };
    }
    return Tensor(node);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int n = parts[0].cols();
    int m = 0;
    std::vector<double> out;
    std::vector<NodePtr> ins;
    for (const auto& p : parts) {
        check_2d(p, "concat_rows part");
        if (p.cols() != n) throw std::invalid_argument("concat_rows: width mismatch");
        m += p.rows();
        out.insert(out.end(), p.data().begin(), p.data().end());
        ins.push_back(p.node());
    }
    auto node = make_node({m, n}, std::move(out), std::move(ins));
    if (node->requires_grad) {
        TensorNode* on = node.get();
        node->backward_fn = [on]() {
            size_t off = 0;
            for (auto& in : on->inputs) {
                if (in->requires_grad) {
                    auto& g = ensure_grad(in);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += on->grad[off + i];
                }
                off += in->data.size();
            }
        };
    }
    return Tensor(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int m = parts[0].rows();
    int n = 0;
    std::vector<NodePtr> ins;
    for (const auto& p : parts) {
        check_2d(p, "concat_cols part");
        if (p.rows() != m) throw std::invalid_argument("concat_cols: height mismatch");
        n += p.cols();
        ins.push_back(p.node());
    }
    std::vector<double> out(static_cast<size_t>(m) * n);
    int c = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                out[static_cast<size_t>(i) * n + c + j] = p.data()[static_cast<size_t>(i) * w + j];
        c += w;
    }
    auto node = make_node({m, n}, std::move(out), std::move(ins));
    if (node->requires_grad) {
        TensorNode* on = node.get();
        node->backward_fn = [on, m, n]() {
            int c = 0;
            for (auto& in : on->inputs) {
                const int w = in->shape[1];
                if (in->requires_grad) {
                    auto& g = ensure_grad(in);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j)
                            g[static_cast<size_t>(i) * w + j] +=
                                on->grad[static_cast<size_t>(i) * n + c + j];
                }
                c += w;
            }
        };
    }
    return Tensor(node);
}

Tensor row(const Tensor& a, int r) { return slice_rows(a, r, r + 1); }

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw std::invalid_argument("reshape: element count mismatch");
    auto node = make_node(std::move(shape), a.data(), {a.node()});
    if (node->requires_grad) {
        auto an = a.node(); TensorNode* on = node.get();
        node->backward_fn = [an, on]() {
            auto& ga = ensure_grad(an);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i];
        };
    }
    return Tensor(node);
}

Tensor linear(const Tensor& x, const Linear& l) {
    return add_rowvec(matmul(x, l.w), l.b);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const MhaWeights& w) {
    const int d = q.cols();
    if (d % heads != 0)
        throw std::invalid_argument("multi_head_attention: d not divisible by heads");
    const int dh = d / heads;
    Tensor qp = linear(q, w.q);
    Tensor kp = linear(k, w.k);
    Tensor vp = linear(v, w.v);
    std::vector<Tensor> ctx;
    ctx.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(qp, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(kp, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(vp, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
        Tensor attn = softmax(scores, 1);
        ctx.push_back(matmul(attn, vh));
    }
    return linear(concat_cols(ctx), w.out);
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw std::logic_error("backward: loss must be scalar");
    // Iterative post-order DFS gives a deterministic topological order.
    std::vector<NodePtr> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<NodePtr, size_t>> stack;
    stack.push_back({loss.node(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            auto child = node->inputs[idx++];
            if (child->requires_grad && !seen.count(child.get())) {
                seen.insert(child.get());
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    ensure_grad(loss.node())[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

void zero_grad(const std::vector<Tensor>& params) {
    for (const auto& p : params) {
        auto n = p.node();
        n->grad.assign(n->data.size(), 0.0);
    }
}

double finite_diff_check(const std::function<Tensor()>& make_loss, Tensor param,
                         double step) {
    auto pn = param.node();
    pn->grad.assign(pn->data.size(), 0.0);
    Tensor loss = make_loss();
    backward(loss);
    std::vector<double> analytic = pn->grad;
    double worst = 0.0;
    for (size_t i = 0; i < pn->data.size(); ++i) {
        const double orig = pn->data[i];
        pn->data[i] = orig + step;
        const double up = make_loss().item();
        pn->data[i] = orig - step;
        const double dn = make_loss().item();
        pn->data[i] = orig;
        const double fd = (up - dn) / (2.0 * step);
        const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace gazeformer
