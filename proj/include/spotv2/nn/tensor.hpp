#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "spotv2/matrix.hpp"

namespace spotv2::nn {

struct Node;

/// Handle to a node of the dynamically built tape. Copies share the node.
class Tensor {
  public:
    Tensor() = default;

    static Tensor constant(Mat value);
    static Tensor param(Mat value);  // leaf with requires_grad

    bool defined() const { return node_ != nullptr; }
    const Mat& value() const;
    Mat& value();
    /// Gradient accumulated by backward(); zeros if none reached this node.
    const Mat& grad() const;
    bool requires_grad() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }
    double item() const;

    void zero_grad();

    /// Reverse pass from a 1x1 loss. A second call on the same graph throws.
    void backward();

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_result(Mat value, std::vector<Tensor> parents,
                              std::function<void(Node&)> backward_fn);
};

struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Mat& grad_buffer();  // allocates zeros on first use
};

/// Creates an op result. Parents and the closure are dropped when no parent
/// needs a gradient.
Tensor make_result(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);     // a b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a b^T
Tensor transpose(const Tensor& a);

// Elementwise and broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);  // row is 1 x cols
Tensor mul_col(const Tensor& a, const Tensor& col);  // col is rows x 1

// Structure.
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& index);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Nonlinearities.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when not
/// training or p == 0.
Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng);

/// Mean squared error over all entries.
Tensor mse(const Tensor& pred, const Tensor& target);

// Block operations for a batch of graphs with `group` nodes each; a has
// rows = batch*group.

/// out(s*g+i, j) = a(s*g+i) + b(s*g+j) for column vectors a, b.
Tensor pair_sum(const Tensor& a, const Tensor& b, std::size_t group);
/// out(s*g+i, j) = a(s*g+i) * b(s*g+j) for column vectors a, b.
Tensor pair_prod(const Tensor& a, const Tensor& b, std::size_t group);
/// Spreads per-pair scalars (batch*g(g-1)/2 x 1, upper-triangle order) into
/// a symmetric (batch*g x g) layout; the diagonal is the mean of the node's
/// incident pairs.
Tensor pair_scatter(const Tensor& p, std::size_t group);
/// out(s*g+i, :) = sum_j w(s*g+i, j) x(s*g+j, :).
Tensor block_matmul(const Tensor& w, const Tensor& x, std::size_t group);

}  // namespace spotv2::nn
