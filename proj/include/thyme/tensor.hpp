#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace thyme {

using Shape = std::vector<long>;

std::string shape_str(const Shape& s);
long numel(const Shape& s);

namespace detail {

// One node of the reverse-mode tape. Tensors are cheap handles onto these;
// the graph is the set of parent edges, freed when the last handle drops.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // allocated on first backward touch
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop; // scatters this->grad into parents

    void ensure_grad();
};

} // namespace detail

// Dense row-major tensor of doubles with an optional gradient slot.
// Value semantics on the handle; the underlying node is shared so that a
// tensor can appear as input to several downstream ops.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values); // [1 x n]

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    long rows() const; // 2-D helpers; throw on other ranks
    long cols() const;
    long size() const;
    bool requires_grad() const;

    double operator()(long r, long c) const;
    double value_at(long flat) const;
    const std::vector<double>& values() const;
    std::vector<double>& mutable_values();
    const std::vector<double>& grad() const; // empty until backward reaches it
    void zero_grad();

    // Reverse pass from a single-element tensor. Accumulates into .grad of
    // every reachable node with requires_grad set.
    void backward() const;

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> handle() const { return node_; }

    static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

// Order-invariant sum: accumulates ascending by value, so any permutation of
// the inputs produces the identical double. Used where a contract promises
// exact permutation equivariance.
double stable_sum(std::vector<double> v);

// ---- differentiable ops (2-D unless noted) --------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_const(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& x, const Tensor& b); // b: [1 x d], broadcast over rows
Tensor relu(const Tensor& x);                        // subgradient at 0 is 0
Tensor sigmoid(const Tensor& x);
Tensor log_of(const Tensor& x);               // values must be > 0
Tensor pow_const(const Tensor& x, double p);  // x >= 0; 0^0 == 1, d/dx at 0 taken as 0 unless p >= 1
Tensor clamp_min(const Tensor& x, double lo); // gradient passes where x > lo
Tensor softmax_rows(const Tensor& x);         // max-subtracted, stable_sum denominator
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b); // x:[n x din], w:[dout x din], b:[1 x dout] or undefined
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, std::vector<long> idx);
// Row-weighted sum out[i] = sum_j a[i][j] * v[j], accumulated order-invariantly
// so permuting the j axis (rows of v, columns of a) permutes nothing downstream.
Tensor attn_apply(const Tensor& a, const Tensor& v);
Tensor sum_all(const Tensor& x);  // [1 x 1]
Tensor mean_all(const Tensor& x); // [1 x 1]
Tensor mean_rows(const Tensor& x); // [1 x d]

// ---- verification oracle ---------------------------------------------------

// Central finite differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Independent of the reverse-mode path; the gradient acceptance tests compare
// against this.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

// |a-b| / max(|a|, |b|, 1e-4); the floor keeps finite-difference noise on
// near-zero gradients from registering as relative error.
double rel_error(double a, double b);
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b);

} // namespace thyme
