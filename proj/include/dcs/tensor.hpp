#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Every op that receives at least one input with requires_grad() records its
// inputs and a backward rule on the output. backward() linearises the graph
// reachable from a scalar loss into a GradTape (topological order) and walks
// it once in reverse. Adjoints of intermediate nodes live only for the length
// of one pass; leaf gradients accumulate across passes until zero_grad().
//
// Only the broadcasting the model zoo needs is supported: a rank-1 bias added
// to every row of a matrix.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dcs {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node;

// pgrads[i] is null when input i does not take gradients.
using BackwardRule = std::function<void(const Node& self, std::span<const double> gout,
                                        std::span<std::vector<double>* const> pgrads)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until the first backward pass reaches this node
    std::vector<std::shared_ptr<Node>> parents;
    BackwardRule backward;
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // In-place access for optimizers and initialisers. Never call on a tensor
    // that is an input of a recorded graph still awaiting backward().
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();
    void clear_grad();

    // Same values, no history, never takes gradients.
    Tensor detach() const;
    // Deep copy of values (and the requires_grad flag) with no history.
    Tensor clone() const;

    void backward() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, detail::BackwardRule);

    std::shared_ptr<detail::Node> node_;
};

// Builds an op output; records history only when gradients are enabled and
// some input requires them.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   detail::BackwardRule rule);

// Topologically ordered record of the graph feeding a scalar.
class GradTape {
public:
    static GradTape record(const Tensor& root);

    std::size_t size() const { return nodes_.size(); }
    std::span<const std::shared_ptr<detail::Node>> nodes() const { return nodes_; }

    // Reverse accumulation, each node visited exactly once.
    void backward() const;

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;  // inputs precede consumers
};

bool grad_enabled();

// Disables recording on this thread for its lifetime (eval-mode forwards).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// --- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Same shapes, or a [m x n] matrix plus a length-n bias broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [m x n] -> [m]
Tensor row_sum(const Tensor& a);
// [m x n] -> [1 x n]
Tensor col_mean(const Tensor& a);
// Stacks rank-2 tensors with equal column counts.
Tensor concat_rows(std::span<const Tensor> parts);
// table [vocab x dim], ids -> [ids.size() x dim]
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Row-wise normalisation with learned gain and bias of length n.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// out[i] = a[i, index[i]]
Tensor pick(const Tensor& a, std::span<const int> index);

// Rank-1: over all entries. Rank-2: independently per row.
Tensor softmax(const Tensor& logits, double temperature = 1.0);
Tensor log_softmax(const Tensor& logits, double temperature = 1.0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace dcs
