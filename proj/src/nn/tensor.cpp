#include "spotv2/nn/tensor.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "spotv2/error.hpp"

namespace spotv2::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

MapC view(const Mat& m) { return MapC(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)); }
Map view(Mat& m) { return Map(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)); }

std::string shape(const Mat& m) { return fmt::format("{}x{}", m.rows, m.cols); }

[[noreturn]] void shape_error(std::string_view op, const Mat& a, const Mat& b) {
    throw Error(ErrorKind::Shape, fmt::format("{}: incompatible shapes {} and {}", op, shape(a), shape(b)));
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
    if (!a.value().same_shape(b.value())) shape_error(op, a.value(), b.value());
}

Node& parent(Node& n, std::size_t k) { return *n.parents[k]; }

template <typename F>
Tensor unary(const Tensor& a, F f, std::function<void(Node&)> bw) {
    Mat out(a.rows(), a.cols());
    const auto& x = a.value().data;
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = f(x[k]);
    return make_result(std::move(out), {a}, std::move(bw));
}

}  // namespace

Mat& Node::grad_buffer() {
    if (!grad.same_shape(value) || grad.data.empty()) grad = Mat(value.rows, value.cols);
    return grad;
}

Tensor Tensor::constant(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Tensor(std::move(n));
}

Tensor Tensor::param(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Tensor(std::move(n));
}

const Mat& Tensor::value() const {
    if (!node_) throw Error(ErrorKind::Internal, "undefined tensor");
    return node_->value;
}

Mat& Tensor::value() {
    if (!node_) throw Error(ErrorKind::Internal, "undefined tensor");
    return node_->value;
}

const Mat& Tensor::grad() const { return node_->grad_buffer(); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
    if (value().size() != 1) throw Error(ErrorKind::Shape, fmt::format("item() on a {} tensor", shape(value())));
    return value().data[0];
}

void Tensor::zero_grad() {
    if (node_) node_->grad = Mat(node_->value.rows, node_->value.cols);
}

void Tensor::backward() {
    if (!node_) throw Error(ErrorKind::Argument, "backward on undefined tensor");
    if (node_->value.size() != 1) {
        throw Error(ErrorKind::Argument, fmt::format("backward needs a scalar loss, got {}", shape(node_->value)));
    }
    if (node_->consumed) throw Error(ErrorKind::Argument, "backward called twice on the same graph");
    if (!node_->requires_grad) {
        node_->consumed = true;
        return;
    }
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (n->backward_fn) n->grad = Mat(n->value.rows, n->value.cols);
    }
    node_->grad_buffer().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            if (n->consumed) throw Error(ErrorKind::Argument, "backward called twice on the same graph");
            n->backward_fn(*n);
            n->consumed = true;
        }
    }
    node_->consumed = true;
}

Tensor make_result(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents) {
        if (p.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
        for (auto& p : parents) n->parents.push_back(p.shared());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
    Mat out(a.rows(), b.cols());
    view(out).noalias() = view(a.value()) * view(b.value());
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) view(pa.grad_buffer()).noalias() += view(n.grad) * view(pb.value).transpose();
        if (pb.requires_grad) view(pb.grad_buffer()).noalias() += view(pa.value).transpose() * view(n.grad);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
    Mat out(a.rows(), b.rows());
    view(out).noalias() = view(a.value()) * view(b.value()).transpose();
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) view(pa.grad_buffer()).noalias() += view(n.grad) * view(pb.value);
        if (pb.requires_grad) view(pb.grad_buffer()).noalias() += view(n.grad).transpose() * view(pa.value);
    });
}

Tensor transpose(const Tensor& a) {
    Mat out(a.cols(), a.rows());
    view(out) = view(a.value()).transpose();
    return make_result(std::move(out), {a}, [](Node& n) {
        view(parent(n, 0).grad_buffer()) += view(n.grad).transpose();
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same("add", a, b);
    Mat out = a.value();
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += b.value().data[k];
    return make_result(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t p = 0; p < 2; ++p) {
            Node& q = parent(n, p);
            if (!q.requires_grad) continue;
            auto& g = q.grad_buffer().data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same("sub", a, b);
    Mat out = a.value();
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] -= b.value().data[k];
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer().data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer().data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] -= n.grad.data[k];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same("mul", a, b);
    Mat out = a.value();
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] *= b.value().data[k];
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer().data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k] * pb.value.data[k];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer().data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k] * pa.value.data[k];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * n.grad.data[k];
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.value(), row.value());
    Mat out = a.value();
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += row.value().data[c];
    }
    return make_result(std::move(out), {a, row}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pr = parent(n, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer().data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k];
        }
        if (pr.requires_grad) {
            auto& g = pr.grad_buffer();
            for (std::size_t r = 0; r < n.grad.rows; ++r) {
                for (std::size_t c = 0; c < n.grad.cols; ++c) g.data[c] += n.grad(r, c);
            }
        }
    });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows()) shape_error("mul_col", a.value(), col.value());
    Mat out = a.value();
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) *= col.value().data[r];
    }
    return make_result(std::move(out), {a, col}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pc = parent(n, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += n.grad(r, c) * pc.value.data[r];
            }
        }
        if (pc.requires_grad) {
            auto& g = pc.grad_buffer();
            for (std::size_t r = 0; r < n.grad.rows; ++r) {
                for (std::size_t c = 0; c < n.grad.cols; ++c) g.data[r] += n.grad(r, c) * pa.value(r, c);
            }
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorKind::Shape, "concat_cols: no inputs");
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != parts[0].rows()) shape_error("concat_cols", parts[0].value(), p.value());
        cols += p.cols();
    }
    Mat out(parts[0].rows(), cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < out.rows; ++r) {
            for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
        }
        off += p.cols();
    }
    return make_result(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& sp : n.parents) {
            Node& p = *sp;
            if (p.requires_grad) {
                auto& g = p.grad_buffer();
                for (std::size_t r = 0; r < g.rows; ++r) {
                    for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += n.grad(r, off + c);
                }
            }
            off += p.value.cols;
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorKind::Shape, "concat_rows: no inputs");
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != parts[0].cols()) shape_error("concat_rows", parts[0].value(), p.value());
        rows += p.rows();
    }
    Mat out(rows, parts[0].cols());
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(off * out.cols));
        off += p.rows();
    }
    return make_result(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& sp : n.parents) {
            Node& p = *sp;
            const auto len = p.value.size();
            if (p.requires_grad) {
                auto& g = p.grad_buffer().data;
                for (std::size_t k = 0; k < len; ++k) g[k] += n.grad.data[off + k];
            }
            off += len;
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.cols()) {
        throw Error(ErrorKind::Shape, fmt::format("slice_cols [{}, {}) of {}", begin, end, shape(a.value())));
    }
    Mat out(a.rows(), end - begin);
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a.value()(r, begin + c);
    }
    return make_result(std::move(out), {a}, [begin](Node& n) {
        auto& g = parent(n, 0).grad_buffer();
        for (std::size_t r = 0; r < n.grad.rows; ++r) {
            for (std::size_t c = 0; c < n.grad.cols; ++c) g(r, begin + c) += n.grad(r, c);
        }
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.rows()) {
        throw Error(ErrorKind::Shape, fmt::format("slice_rows [{}, {}) of {}", begin, end, shape(a.value())));
    }
    Mat out(end - begin, a.cols());
    const auto w = a.cols();
    std::copy(a.value().data.begin() + static_cast<std::ptrdiff_t>(begin * w),
              a.value().data.begin() + static_cast<std::ptrdiff_t>(end * w), out.data.begin());
    return make_result(std::move(out), {a}, [begin, w](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < n.grad.data.size(); ++k) g[begin * w + k] += n.grad.data[k];
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& index) {
    Mat out(index.size(), a.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= a.rows()) {
            throw Error(ErrorKind::Shape, fmt::format("gather_rows: index {} out of {} rows", index[r], a.rows()));
        }
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a.value()(index[r], c);
    }
    return make_result(std::move(out), {a}, [index](Node& n) {
        auto& g = parent(n, 0).grad_buffer();
        for (std::size_t r = 0; r < index.size(); ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) g(index[r], c) += n.grad(r, c);
        }
    });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.value().size()) {
        throw Error(ErrorKind::Shape, fmt::format("reshape {} to {}x{}", shape(a.value()), rows, cols));
    }
    Mat out = a.value();
    out.rows = rows;
    out.cols = cols;
    return make_result(std::move(out), {a}, [](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.value().data) s += x;
    return make_result(Mat(1, 1, s), {a}, [](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (auto& x : g) x += n.grad.data[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.value().size() == 0) throw Error(ErrorKind::Shape, "mean of an empty tensor");
    const double inv = 1.0 / static_cast<double>(a.value().size());
    double s = 0.0;
    for (double x : a.value().data) s += x;
    return make_result(Mat(1, 1, s * inv), {a}, [inv](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (auto& x : g) x += n.grad.data[0] * inv;
    });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k] * n.value.data[k];
    });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::log(x); }, [](Node& n) {
        Node& p = parent(n, 0);
        auto& g = p.grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k] / p.value.data[k];
    });
}

Tensor softmax_rows(const Tensor& a) {
    Mat out(a.rows(), a.cols());
    for (std::size_t r = 0; r < out.rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < out.cols; ++c) mx = std::max(mx, a.value()(r, c));
        if (!std::isfinite(mx)) {
            throw Error(ErrorKind::Numerical, fmt::format("softmax_rows: row {} has no finite entry", r));
        }
        double z = 0.0;
        for (std::size_t c = 0; c < out.cols; ++c) {
            out(r, c) = std::exp(a.value()(r, c) - mx);
            z += out(r, c);
        }
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) /= z;
    }
    return make_result(std::move(out), {a}, [](Node& n) {
        auto& g = parent(n, 0).grad_buffer();
        for (std::size_t r = 0; r < n.value.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n.value.cols; ++c) dot += n.grad(r, c) * n.value(r, c);
            for (std::size_t c = 0; c < n.value.cols; ++c) g(r, c) += n.value(r, c) * (n.grad(r, c) - dot);
        }
    });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; }, [slope](Node& n) {
        Node& p = parent(n, 0);
        auto& g = p.grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k] * (p.value.data[k] > 0.0 ? 1.0 : slope);
    });
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    }, [](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.value.data[k];
            g[k] += n.grad.data[k] * y * (1.0 - y);
        }
    });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.value.data[k];
            g[k] += n.grad.data[k] * (1.0 - y * y);
        }
    });
}

Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw Error(ErrorKind::Argument, fmt::format("dropout p={} outside [0, 1)", p));
    if (!train || p == 0.0) return a;
    std::bernoulli_distribution keep(1.0 - p);
    const double s = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(a.value().size());
    for (auto& m : *mask) m = keep(rng) ? s : 0.0;
    Mat out = a.value();
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] *= (*mask)[k];
    return make_result(std::move(out), {a}, [mask](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k] * (*mask)[k];
    });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    require_same("mse", pred, target);
    if (pred.value().size() == 0) throw Error(ErrorKind::Shape, "mse of empty tensors");
    const double inv = 1.0 / static_cast<double>(pred.value().size());
    double s = 0.0;
    for (std::size_t k = 0; k < pred.value().size(); ++k) {
        const double d = pred.value().data[k] - target.value().data[k];
        s += d * d;
    }
    return make_result(Mat(1, 1, s * inv), {pred, target}, [inv](Node& n) {
        Node& pp = parent(n, 0);
        Node& pt = parent(n, 1);
        const double g0 = n.grad.data[0];
        for (std::size_t k = 0; k < pp.value.size(); ++k) {
            const double d = 2.0 * inv * g0 * (pp.value.data[k] - pt.value.data[k]);
            if (pp.requires_grad) pp.grad_buffer().data[k] += d;
            if (pt.requires_grad) pt.grad_buffer().data[k] -= d;
        }
    });
}

namespace {

void check_group(std::string_view op, const Tensor& a, std::size_t group) {
    if (group == 0 || a.cols() != 1 || a.rows() % group != 0) {
        throw Error(ErrorKind::Shape, fmt::format("{}: {} is not a column of groups of {}", op, shape(a.value()), group));
    }
}

}  // namespace

Tensor pair_sum(const Tensor& a, const Tensor& b, std::size_t group) {
    check_group("pair_sum", a, group);
    require_same("pair_sum", a, b);
    const auto rows = a.rows();
    Mat out(rows, group);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto base = r - r % group;
        for (std::size_t j = 0; j < group; ++j) out(r, j) = a.value().data[r] + b.value().data[base + j];
    }
    return make_result(std::move(out), {a, b}, [group](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        for (std::size_t r = 0; r < n.grad.rows; ++r) {
            const auto base = r - r % group;
            for (std::size_t j = 0; j < group; ++j) {
                if (pa.requires_grad) pa.grad_buffer().data[r] += n.grad(r, j);
                if (pb.requires_grad) pb.grad_buffer().data[base + j] += n.grad(r, j);
            }
        }
    });
}

Tensor pair_prod(const Tensor& a, const Tensor& b, std::size_t group) {
    check_group("pair_prod", a, group);
    require_same("pair_prod", a, b);
    const auto rows = a.rows();
    Mat out(rows, group);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto base = r - r % group;
        for (std::size_t j = 0; j < group; ++j) out(r, j) = a.value().data[r] * b.value().data[base + j];
    }
    return make_result(std::move(out), {a, b}, [group](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        for (std::size_t r = 0; r < n.grad.rows; ++r) {
            const auto base = r - r % group;
            for (std::size_t j = 0; j < group; ++j) {
                if (pa.requires_grad) pa.grad_buffer().data[r] += n.grad(r, j) * pb.value.data[base + j];
                if (pb.requires_grad) pb.grad_buffer().data[base + j] += n.grad(r, j) * pa.value.data[r];
            }
        }
    });
}

Tensor pair_scatter(const Tensor& p, std::size_t group) {
    if (group < 2) throw Error(ErrorKind::Shape, "pair_scatter needs at least two nodes per graph");
    const auto pairs = group * (group - 1) / 2;
    if (p.cols() != 1 || p.rows() % pairs != 0) {
        throw Error(ErrorKind::Shape, fmt::format("pair_scatter: {} is not a column of {}-pair groups", shape(p.value()), pairs));
    }
    const auto batch = p.rows() / pairs;
    Mat out(batch * group, group);
    const double inv = 1.0 / static_cast<double>(group - 1);
    for (std::size_t s = 0; s < batch; ++s) {
        std::size_t k = s * pairs;
        for (std::size_t i = 0; i < group; ++i) {
            for (std::size_t j = i + 1; j < group; ++j, ++k) {
                const double v = p.value().data[k];
                out(s * group + i, j) = v;
                out(s * group + j, i) = v;
                out(s * group + i, i) += inv * v;
                out(s * group + j, j) += inv * v;
            }
        }
    }
    return make_result(std::move(out), {p}, [group, pairs, batch, inv](Node& n) {
        auto& g = parent(n, 0).grad_buffer().data;
        for (std::size_t s = 0; s < batch; ++s) {
            std::size_t k = s * pairs;
            for (std::size_t i = 0; i < group; ++i) {
                for (std::size_t j = i + 1; j < group; ++j, ++k) {
                    g[k] += n.grad(s * group + i, j) + n.grad(s * group + j, i) +
                            inv * (n.grad(s * group + i, i) + n.grad(s * group + j, j));
                }
            }
        }
    });
}

Tensor block_matmul(const Tensor& w, const Tensor& x, std::size_t group) {
    if (group == 0 || w.cols() != group || w.rows() != x.rows() || w.rows() % group != 0) {
        shape_error("block_matmul", w.value(), x.value());
    }
    const auto batch = w.rows() / group;
    const auto g = static_cast<Eigen::Index>(group);
    Mat out(x.rows(), x.cols());
    for (std::size_t s = 0; s < batch; ++s) {
        const auto off = static_cast<Eigen::Index>(s * group);
        view(out).middleRows(off, g).noalias() = view(w.value()).middleRows(off, g) * view(x.value()).middleRows(off, g);
    }
    return make_result(std::move(out), {w, x}, [group, batch, g](Node& n) {
        Node& pw = parent(n, 0);
        Node& px = parent(n, 1);
        for (std::size_t s = 0; s < batch; ++s) {
            const auto off = static_cast<Eigen::Index>(s * group);
            auto go = view(n.grad).middleRows(off, g);
            if (pw.requires_grad) {
                view(pw.grad_buffer()).middleRows(off, g).noalias() += go * view(px.value).middleRows(off, g).transpose();
            }
            if (px.requires_grad) {
                view(px.grad_buffer()).middleRows(off, g).noalias() += view(pw.value).middleRows(off, g).transpose() * go;
            }
        }
    });
}

}  // namespace spotv2::nn
