#include "dcs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "dcs/errors.hpp"

namespace dcs {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
    throw DimensionError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const std::string& expected) {
    throw DimensionError(op + ": got shape " + shape_string(a) + ", expected " + expected);
}

void require_rank2(const std::string& op, const Tensor& t) {
    if (t.rank() != 2) {
        dim_error(op, t.shape(), "a rank-2 tensor");
    }
}

void check_temperature(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be a positive finite number, got " +
                          std::to_string(temperature));
    }
}

// View a rank-1 or rank-2 tensor as (rows, cols) for row-wise reductions.
std::pair<std::size_t, std::size_t> as_rows(const std::string& op, const Tensor& t) {
    if (t.rank() == 1) {
        return {1, t.shape()[0]};
    }
    if (t.rank() == 2) {
        return {t.shape()[0], t.shape()[1]};
    }
    dim_error(op, t.shape(), "rank 1 or 2");
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out << 'x';
        }
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

// --- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
        }
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return from_data({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return from_data({rows, cols}, std::move(values));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
    require_rank2("rows", *this);
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    require_rank2("cols", *this);
    return node_->shape[1];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) {
        dim_error("item", shape(), "a single element");
    }
    return node_->data[0];
}

double Tensor::at(std::size_t i) const { return node_->data.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
    require_rank2("at", *this);
    return node_->data.at(r * node_->shape[1] + c);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

void Tensor::clear_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from_data(shape(), node_->data, false); }

Tensor Tensor::clone() const { return from_data(shape(), node_->data, node_->requires_grad); }

void Tensor::backward() const {
    if (numel() != 1) {
        dim_error("backward", shape(), "a scalar loss");
    }
    if (!requires_grad()) {
        return;
    }
    GradTape::record(*this).backward();
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   detail::BackwardRule rule) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (g_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(inputs.size());
            for (auto& in : inputs) {
                node->parents.push_back(in.node());
            }
            node->backward = std::move(rule);
        }
    }
    return Tensor(std::move(node));
}

// --- GradTape ------------------------------------------------------------

GradTape GradTape::record(const Tensor& root) {
    GradTape tape;
    if (!root.defined() || !root.requires_grad()) {
        return tape;
    }
    std::unordered_map<const Node*, bool> seen;
    // Iterative post-order DFS: (node, next parent to visit).
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen[root.node().get()] = true;
    std::vector<Node*> order;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !seen[parent]) {
                seen[parent] = true;
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    // Recover owning pointers; the root is owned by the caller's Tensor.
    std::unordered_map<const Node*, std::shared_ptr<Node>> owners;
    owners[root.node().get()] = root.node();
    for (Node* n : order) {
        for (auto& p : n->parents) {
            owners.emplace(p.get(), p);
        }
    }
    tape.nodes_.reserve(order.size());
    for (Node* n : order) {
        tape.nodes_.push_back(owners.at(n));
    }
    return tape;
}

void GradTape::backward() const {
    if (nodes_.empty()) {
        return;
    }
    std::unordered_map<const Node*, std::size_t> index;
    index.reserve(nodes_.size());
    std::vector<std::vector<double>> adjoint(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        index[nodes_[i].get()] = i;
        adjoint[i].assign(nodes_[i]->data.size(), 0.0);
    }
    adjoint.back()[0] = 1.0;

    std::vector<std::vector<double>*> pgrads;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const Node& node = *nodes_[i];
        if (!node.backward) {
            continue;
        }
        pgrads.assign(node.parents.size(), nullptr);
        for (std::size_t p = 0; p < node.parents.size(); ++p) {
            const auto it = index.find(node.parents[p].get());
            if (it != index.end()) {
                pgrads[p] = &adjoint[it->second];
            }
        }
        node.backward(node, adjoint[i], pgrads);
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        auto& grad = nodes_[i]->grad;
        if (grad.empty()) {
            grad = std::move(adjoint[i]);
        } else {
            for (std::size_t k = 0; k < grad.size(); ++k) {
                grad[k] += adjoint[i][k];
            }
        }
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// --- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        dim_error("matmul", a.shape(), b.shape());
    }
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    const auto A = a.data();
    const auto B = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aip * B[p * n + j];
            }
        }
    }
    return make_result({m, n}, std::move(out), {a, b},
                       [m, k, n](const Node& self, std::span<const double> g,
                                 std::span<std::vector<double>* const> pg) {
                           const auto& A = self.parents[0]->data;
                           const auto& B = self.parents[1]->data;
                           if (auto* dA = pg[0]) {
                               // dA = dC * B^T
                               for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t p = 0; p < k; ++p) {
                                       double s = 0.0;
                                       for (std::size_t j = 0; j < n; ++j) {
                                           s += g[i * n + j] * B[p * n + j];
                                       }
                                       (*dA)[i * k + p] += s;
                                   }
                               }
                           }
                           if (auto* dB = pg[1]) {
                               // dB = A^T * dC
                               for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const double aip = A[i * k + p];
                                       for (std::size_t j = 0; j < n; ++j) {
                                           (*dB)[p * n + j] += aip * g[i * n + j];
                                       }
                                   }
                               }
                           }
                       });
}

Tensor transpose(const Tensor& a) {
    require_rank2("transpose", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto A = a.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = A[i * n + j];
        }
    }
    return make_result({n, m}, std::move(out), {a},
                       [m, n](const Node&, std::span<const double> g,
                              std::span<std::vector<double>* const> pg) {
                           auto& dA = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                   dA[i * n + j] += g[j * m + i];
                               }
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const auto A = a.data();
    const auto B = b.data();
    if (a.shape() == b.shape()) {
        std::vector<double> out(A.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = A[i] + B[i];
        }
        return make_result(a.shape(), std::move(out), {a, b},
                           [](const Node&, std::span<const double> g,
                              std::span<std::vector<double>* const> pg) {
                               for (auto* d : pg) {
                                   if (d != nullptr) {
                                       for (std::size_t i = 0; i < g.size(); ++i) {
                                           (*d)[i] += g[i];
                                       }
                                   }
                               }
                           });
    }
    if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
        const std::size_t m = a.shape()[0];
        const std::size_t n = a.shape()[1];
        std::vector<double> out(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] = A[i * n + j] + B[j];
            }
        }
        return make_result(a.shape(), std::move(out), {a, b},
                           [m, n](const Node&, std::span<const double> g,
                                  std::span<std::vector<double>* const> pg) {
                               if (auto* dA = pg[0]) {
                                   for (std::size_t i = 0; i < m * n; ++i) {
                                       (*dA)[i] += g[i];
                                   }
                               }
                               if (auto* dB = pg[1]) {
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t j = 0; j < n; ++j) {
                                           (*dB)[j] += g[i * n + j];
                                       }
                                   }
                               }
                           });
    }
    dim_error("add", a.shape(), b.shape());
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        dim_error("mul", a.shape(), b.shape());
    }
    const auto A = a.data();
    const auto B = b.data();
    std::vector<double> out(A.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = A[i] * B[i];
    }
    return make_result(a.shape(), std::move(out), {a, b},
                       [](const Node& self, std::span<const double> g,
                          std::span<std::vector<double>* const> pg) {
                           const auto& A = self.parents[0]->data;
                           const auto& B = self.parents[1]->data;
                           if (auto* dA = pg[0]) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   (*dA)[i] += g[i] * B[i];
                               }
                           }
                           if (auto* dB = pg[1]) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   (*dB)[i] += g[i] * A[i];
                               }
                           }
                       });
}

Tensor scale(const Tensor& a, double factor) {
    const auto A = a.data();
    std::vector<double> out(A.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = A[i] * factor;
    }
    return make_result(a.shape(), std::move(out), {a},
                       [factor](const Node&, std::span<const double> g,
                                std::span<std::vector<double>* const> pg) {
                           auto& dA = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               dA[i] += g[i] * factor;
                           }
                       });
}

Tensor relu(const Tensor& a) {
    const auto A = a.data();
    std::vector<double> out(A.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = A[i] > 0.0 ? A[i] : 0.0;
    }
    return make_result(a.shape(), std::move(out), {a},
                       [](const Node& self, std::span<const double> g,
                          std::span<std::vector<double>* const> pg) {
                           const auto& A = self.parents[0]->data;
                           auto& dA = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               if (A[i] > 0.0) {
                                   dA[i] += g[i];
                               }
                           }
                       });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) {
        s += v;
    }
    return make_result({1}, {s}, {a},
                       [](const Node&, std::span<const double> g,
                          std::span<std::vector<double>* const> pg) {
                           for (auto& d : *pg[0]) {
                               d += g[0];
                           }
                       });
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) {
        s += v;
    }
    const double n = static_cast<double>(a.numel());
    return make_result({1}, {s / n}, {a},
                       [n](const Node&, std::span<const double> g,
                           std::span<std::vector<double>* const> pg) {
                           for (auto& d : *pg[0]) {
                               d += g[0] / n;
                           }
                       });
}

Tensor row_sum(const Tensor& a) {
    require_rank2("row_sum", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto A = a.data();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i] += A[i * n + j];
        }
    }
    return make_result({m}, std::move(out), {a},
                       [m, n](const Node&, std::span<const double> g,
                              std::span<std::vector<double>* const> pg) {
                           auto& dA = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                   dA[i * n + j] += g[i];
                               }
                           }
                       });
}

Tensor col_mean(const Tensor& a) {
    require_rank2("col_mean", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto A = a.data();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j] += A[i * n + j];
        }
    }
    const double inv = 1.0 / static_cast<double>(m);
    for (auto& v : out) {
        v *= inv;
    }
    return make_result({1, n}, std::move(out), {a},
                       [m, n, inv](const Node&, std::span<const double> g,
                                   std::span<std::vector<double>* const> pg) {
                           auto& dA = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                   dA[i * n + j] += g[j] * inv;
                               }
                           }
                       });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    require_rank2("concat_rows", parts[0]);
    const std::size_t n = parts[0].shape()[1];
    std::size_t total = 0;
    std::vector<std::size_t> offsets;
    offsets.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[1] != n) {
            dim_error("concat_rows", parts[0].shape(), p.shape());
        }
        offsets.push_back(total * n);
        total += p.shape()[0];
    }
    std::vector<double> out;
    out.reserve(total * n);
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_result({total, n}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                       [offsets](const Node& self, std::span<const double> g,
                                 std::span<std::vector<double>* const> pg) {
                           for (std::size_t p = 0; p < pg.size(); ++p) {
                               if (auto* d = pg[p]) {
                                   const std::size_t len = self.parents[p]->data.size();
                                   for (std::size_t i = 0; i < len; ++i) {
                                       (*d)[i] += g[offsets[p] + i];
                                   }
                               }
                           }
                       });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_rank2("embedding", table);
    if (ids.empty()) {
        throw DimensionError("embedding: empty id sequence");
    }
    const std::size_t vocab = table.shape()[0];
    const std::size_t dim = table.shape()[1];
    const auto T = table.data();
    std::vector<std::size_t> rows(ids.size());
    std::vector<double> out(ids.size() * dim);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
            throw DataError("embedding: token id " + std::to_string(ids[r]) +
                            " outside vocabulary of size " + std::to_string(vocab));
        }
        rows[r] = static_cast<std::size_t>(ids[r]);
        std::copy_n(T.begin() + static_cast<std::ptrdiff_t>(rows[r] * dim), dim,
                    out.begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    return make_result({ids.size(), dim}, std::move(out), {table},
                       [rows = std::move(rows), dim](const Node&, std::span<const double> g,
                                                     std::span<std::vector<double>* const> pg) {
                           auto& dT = *pg[0];
                           for (std::size_t r = 0; r < rows.size(); ++r) {
                               for (std::size_t j = 0; j < dim; ++j) {
                                   dT[rows[r] * dim + j] += g[r * dim + j];
                               }
                           }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank2("layer_norm", x);
    const std::size_t m = x.shape()[0];
    const std::size_t n = x.shape()[1];
    if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
        dim_error("layer_norm", x.shape(), gain.shape());
    }
    const auto X = x.data();
    const auto G = gain.data();
    const auto B = bias.data();
    std::vector<double> xhat(m * n);
    std::vector<double> inv_std(m);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += X[i * n + j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = X[i * n + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (X[i * n + j] - mu) * inv_std[i];
            out[i * n + j] = G[j] * xhat[i * n + j] + B[j];
        }
    }
    return make_result(
        {m, n}, std::move(out), {x, gain, bias},
        [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            const Node& self, std::span<const double> g, std::span<std::vector<double>* const> pg) {
            const auto& G = self.parents[1]->data;
            if (auto* dG = pg[1]) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        (*dG)[j] += g[i * n + j] * xhat[i * n + j];
                    }
                }
            }
            if (auto* dB = pg[2]) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        (*dB)[j] += g[i * n + j];
                    }
                }
            }
            if (auto* dX = pg[0]) {
                const double nn = static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double sum_d = 0.0;
                    double sum_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = g[i * n + j] * G[j];
                        sum_d += d;
                        sum_dx += d * xhat[i * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = g[i * n + j] * G[j];
                        (*dX)[i * n + j] +=
                            inv_std[i] / nn * (nn * d - sum_d - xhat[i * n + j] * sum_dx);
                    }
                }
            }
        });
}

Tensor pick(const Tensor& a, std::span<const int> index) {
    require_rank2("pick", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    if (index.size() != m) {
        throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " +
                             std::to_string(m) + " rows");
    }
    std::vector<std::size_t> cols(m);
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n) {
            throw DataError("pick: index " + std::to_string(index[i]) + " out of range at row " +
                            std::to_string(i));
        }
        cols[i] = static_cast<std::size_t>(index[i]);
        out[i] = a.data()[i * n + cols[i]];
    }
    return make_result({m}, std::move(out), {a},
                       [n, cols = std::move(cols)](const Node&, std::span<const double> g,
                                                   std::span<std::vector<double>* const> pg) {
                           auto& dA = *pg[0];
                           for (std::size_t i = 0; i < cols.size(); ++i) {
                               dA[i * n + cols[i]] += g[i];
                           }
                       });
}

Tensor softmax(const Tensor& logits, double temperature) {
    check_temperature(temperature);
    const auto [m, n] = as_rows("softmax", logits);
    const auto Z = logits.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* z = Z.data() + i * n;
        double* y = out.data() + i * n;
        const double zmax = *std::max_element(z, z + n);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp((z[j] - zmax) / temperature);
            denom += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            y[j] /= denom;
        }
    }
    return make_result(logits.shape(), std::move(out), {logits},
                       [m = m, n = n, temperature](const Node& self, std::span<const double> g,
                                                   std::span<std::vector<double>* const> pg) {
                           const auto& Y = self.data;
                           auto& dZ = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < n; ++j) {
                                   dot += g[i * n + j] * Y[i * n + j];
                               }
                               for (std::size_t j = 0; j < n; ++j) {
                                   dZ[i * n + j] += Y[i * n + j] * (g[i * n + j] - dot) / temperature;
                               }
                           }
                       });
}

Tensor log_softmax(const Tensor& logits, double temperature) {
    check_temperature(temperature);
    const auto [m, n] = as_rows("log_softmax", logits);
    const auto Z = logits.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* z = Z.data() + i * n;
        double* y = out.data() + i * n;
        const double zmax = *std::max_element(z, z + n) / temperature;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += std::exp(z[j] / temperature - zmax);
        }
        const double lse = zmax + std::log(acc);
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = z[j] / temperature - lse;
        }
    }
    return make_result(logits.shape(), std::move(out), {logits},
                       [m = m, n = n, temperature](const Node& self, std::span<const double> g,
                                                   std::span<std::vector<double>* const> pg) {
                           const auto& Y = self.data;
                           auto& dZ = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                               double gsum = 0.0;
                               for (std::size_t j = 0; j < n; ++j) {
                                   gsum += g[i * n + j];
                               }
                               for (std::size_t j = 0; j < n; ++j) {
                                   dZ[i * n + j] +=
                                       (g[i * n + j] - std::exp(Y[i * n + j]) * gsum) / temperature;
                               }
                           }
                       });
}

}  // namespace dcs
