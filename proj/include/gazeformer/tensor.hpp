#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gazeformer {

using Shape = std::vector<int>;

int shape_size(const Shape& s);

// One node of the computation graph. Holds the value, the accumulated
// gradient, and a closure that pushes this node's output gradient to its
// inputs. Nodes are immutable after construction except for grad.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily at backward time
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void()> backward_fn;
};

// Value-semantic handle to a graph node.
class Tensor {
public:
    Tensor() = default;
    // Checked constructor: rejects NaN/Inf and shape/data mismatch.
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int size() const { return static_cast<int>(n_->data.size()); }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    std::vector<double>& data() { return n_->data; }
    const std::vector<double>& data() const { return n_->data; }
    std::vector<double>& grad();
    bool requires_grad() const { return n_->requires_grad; }

    double item() const;              // scalar tensors only
    double at(int r, int c) const;    // 2D convenience
    int rows() const { return n_->shape.at(0); }
    int cols() const { return n_->shape.at(1); }

    std::shared_ptr<TensorNode> node() const { return n_; }
    explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode> n_;
};

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [out]
};

struct MhaWeights {
    Linear q, k, v, out;
};

// ---- ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // a[m x n] + v[n] per row
Tensor relu(const Tensor& a);
Tensor abs_val(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor row(const Tensor& a, int r);
Tensor reshape(const Tensor& a, Shape shape);

Tensor linear(const Tensor& x, const Linear& l);
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const MhaWeights& w);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Reverse-mode sweep from a scalar loss. Gradients accumulate into the
// grad buffers of every requires_grad node reachable from the loss.
void backward(const Tensor& loss);
void zero_grad(const std::vector<Tensor>& params);

// Central-difference check of d(make_loss)/d(param). make_loss must rebuild
// the graph from the current contents of param's data buffer and be
// deterministic. Returns max_i |analytic_i - fd_i| / max(1, |analytic_i|).
double finite_diff_check(const std::function<Tensor()>& make_loss, Tensor param,
                         double step = 1e-5);

}  // namespace gazeformer
