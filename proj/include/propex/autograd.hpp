#pragma once

// Reverse-mode automatic differentiation over dense row-major double matrices.
//
// A Tape records every operation of one forward pass. Parameters enter the tape
// as leaves and receive accumulated gradients when Tape::backward runs. A tape
// created with grad disabled records values only.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "propex/rng.hpp"

namespace propex::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Parameter {
    Matrix value;
    Matrix grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while its tape lives.
class Var {
public:
    Var() = default;

    [[nodiscard]] const Matrix& value() const;
    [[nodiscard]] double item() const;
    [[nodiscard]] Index rows() const { return value().rows(); }
    [[nodiscard]] Index cols() const { return value().cols(); }
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& grad, const Matrix& value)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool grad_enabled() const noexcept { return grad_enabled_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Matrix value)
    {
        nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr});
        return Var(this, nodes_.size() - 1);
    }

    Var scalar(double v)
    {
        Matrix m(1, 1);
        m(0, 0) = v;
        return constant(std::move(m));
    }

    /// Leaf bound to a parameter. Repeated calls for the same parameter return the same leaf.
    Var parameter(Parameter& p)
    {
        if (auto it = leaves_.find(&p); it != leaves_.end()) {
            return Var(this, it->second);
        }
        nodes_.push_back(Node{p.value, {}, {}, grad_enabled_, &p});
        leaves_.emplace(&p, nodes_.size() - 1);
        return Var(this, nodes_.size() - 1);
    }

    /// Records an op result. The backward function runs only if some input requires a gradient.
    Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward)
    {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
    }

    Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward)
    {
        bool needs = false;
        if (grad_enabled_) {
            for (const auto& in : inputs) {
                check_owner(in);
                needs = needs || nodes_[in.id()].needs_grad;
            }
        }
        nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs, nullptr});
        return Var(this, nodes_.size() - 1);
    }

    [[nodiscard]] const Matrix& value(Var v) const { return nodes_[v.id()].value; }
    [[nodiscard]] bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

    /// Gradient of the last backward root with respect to v; empty if v did not receive one.
    [[nodiscard]] const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }

    template <class Derived>
    void accumulate(Var v, const Eigen::MatrixBase<Derived>& g)
    {
        auto& node = nodes_[v.id()];
        if (!node.needs_grad) {
            return;
        }
        if (node.grad.size() == 0) {
            node.grad = g;
        } else {
            node.grad += g;
        }
    }

    /// Backpropagates from a scalar root, seeding d(root)/d(root) = seed.
    /// Parameter leaves add their gradient into Parameter::grad.
    void backward(Var root, double seed = 1.0)
    {
        check_owner(root);
        if (!grad_enabled_) {
            throw std::logic_error("backward on a tape with gradients disabled");
        }
        if (value(root).size() != 1) {
            throw std::invalid_argument("backward root must be a scalar");
        }
        for (auto& node : nodes_) {
            node.grad.resize(0, 0);
        }
        auto& r = nodes_[root.id()];
        if (!r.needs_grad) {
            return;
        }
        r.grad = Matrix::Constant(1, 1, seed);
        for (std::size_t i = root.id() + 1; i-- > 0;) {
            auto& node = nodes_[i];
            if (node.grad.size() == 0) {
                continue;
            }
            if (node.param != nullptr) {
                if (node.param->grad.size() == 0) {
                    node.param->grad = Matrix::Zero(node.value.rows(), node.value.cols());
                }
                node.param->grad += node.grad;
            }
            if (node.backward) {
                // node.grad stays valid: backward functions only touch earlier nodes.
                node.backward(*this, node.grad, node.value);
            }
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        bool needs_grad = false;
        Parameter* param = nullptr;
    };

    void check_owner(Var v) const
    {
        if (&v.tape() != this) {
            throw std::logic_error("Var belongs to a different tape");
        }
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> leaves_;
    bool grad_enabled_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

inline double Var::item() const
{
    const auto& v = value();
    if (v.size() != 1) {
        throw std::logic_error("item() on a non-scalar Var");
    }
    return v(0, 0);
}

namespace detail {

inline void require(bool ok, const char* what)
{
    if (!ok) {
        throw std::invalid_argument(what);
    }
}

inline void same_shape(Var a, Var b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

} // namespace detail

// ---------------------------------------------------------------- arithmetic

[[nodiscard]] inline Var matmul(Var a, Var b)
{
    detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    Tape& t = a.tape();
    return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
        if (tp.needs_grad(a)) {
            tp.accumulate(a, g * b.value().transpose());
        }
        if (tp.needs_grad(b)) {
            tp.accumulate(b, a.value().transpose() * g);
        }
    });
}

[[nodiscard]] inline Var add(Var a, Var b)
{
    detail::same_shape(a, b, "add");
    return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

[[nodiscard]] inline Var sub(Var a, Var b)
{
    detail::same_shape(a, b, "sub");
    return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
        tp.accumulate(a, g);
        tp.accumulate(b, -g);
    });
}

/// Elementwise product.
[[nodiscard]] inline Var mul(Var a, Var b)
{
    detail::same_shape(a, b, "mul");
    return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
        tp.accumulate(a, g.cwiseProduct(b.value()));
        tp.accumulate(b, g.cwiseProduct(a.value()));
    });
}

/// Adds a 1 x cols row vector to every row of a.
[[nodiscard]] inline Var add_row(Var a, Var row)
{
    detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias must be 1 x cols");
    Matrix out = a.value().rowwise() + row.value().row(0);
    return a.tape().record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g, const Matrix&) {
        tp.accumulate(a, g);
        if (tp.needs_grad(row)) {
            tp.accumulate(row, g.colwise().sum());
        }
    });
}

[[nodiscard]] inline Var scale(Var a, double s)
{
    return a.tape().record(a.value() * s, {a}, [a, s](Tape& tp, const Matrix& g, const Matrix&) { tp.accumulate(a, g * s); });
}

[[nodiscard]] inline Var transpose(Var a)
{
    return a.tape().record(a.value().transpose(), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) { tp.accumulate(a, g.transpose()); });
}

// ---------------------------------------------------------------- reductions

[[nodiscard]] inline Var sum(Var a)
{
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape().record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
        tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

[[nodiscard]] inline Var mean(Var a)
{
    const auto n = static_cast<double>(a.value().size());
    detail::require(n > 0, "mean: empty input");
    return scale(sum(a), 1.0 / n);
}

/// Column means: rows x cols -> 1 x cols.
[[nodiscard]] inline Var mean_rows(Var a)
{
    const auto n = static_cast<double>(a.rows());
    detail::require(n > 0, "mean_rows: empty input");
    Matrix out = a.value().colwise().sum() / n;
    return a.tape().record(std::move(out), {a}, [a, n](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = g.replicate(a.rows(), 1) / n;
        tp.accumulate(a, ga);
    });
}

/// Largest element as 1x1; the gradient goes to the first maximiser.
[[nodiscard]] inline Var max_all(Var a)
{
    Index r = 0;
    Index c = 0;
    const double v = a.value().maxCoeff(&r, &c);
    Matrix out = Matrix::Constant(1, 1, v);
    return a.tape().record(std::move(out), {a}, [a, r, c](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga(r, c) = g(0, 0);
        tp.accumulate(a, ga);
    });
}

[[nodiscard]] inline Var min_all(Var a)
{
    Index r = 0;
    Index c = 0;
    const double v = a.value().minCoeff(&r, &c);
    Matrix out = Matrix::Constant(1, 1, v);
    return a.tape().record(std::move(out), {a}, [a, r, c](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga(r, c) = g(0, 0);
        tp.accumulate(a, ga);
    });
}

/// Population standard deviation of all elements. The gradient at zero spread is taken as zero.
[[nodiscard]] inline Var std_all(Var a)
{
    const auto n = static_cast<double>(a.value().size());
    detail::require(n > 0, "std_all: empty input");
    const double mu = a.value().mean();
    const double var = (a.value().array() - mu).square().sum() / n;
    const double sd = std::sqrt(var);
    Matrix out = Matrix::Constant(1, 1, sd);
    return a.tape().record(std::move(out), {a}, [a, mu, sd, n](Tape& tp, const Matrix& g, const Matrix&) {
        if (sd == 0.0) {
            return;
        }
        Matrix ga = (a.value().array() - mu).matrix() * (g(0, 0) / (n * sd));
        tp.accumulate(a, ga);
    });
}

// ---------------------------------------------------------------- elementwise

[[nodiscard]] inline Var sigmoid(Var a)
{
    Matrix out = a.value().unaryExpr([](double x) {
        if (x >= 0.0) {
            return 1.0 / (1.0 + std::exp(-x));
        }
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    return a.tape().record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix& s) {
        tp.accumulate(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
    });
}

/// tanh-approximated GELU.
[[nodiscard]] inline Var gelu(Var a)
{
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    constexpr double c = 0.044715;
    Matrix out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); });
    return a.tape().record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix d = a.value().unaryExpr([](double x) {
            const double u = k * (x + c * x * x * x);
            const double th = std::tanh(u);
            const double du = k * (1.0 + 3.0 * c * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
        tp.accumulate(a, g.cwiseProduct(d));
    });
}

/// Natural log with the input floored at `floor`; no gradient flows where the floor is active.
[[nodiscard]] inline Var log(Var a, double floor = 1e-12)
{
    Matrix out = a.value().unaryExpr([floor](double x) { return std::log(std::max(x, floor)); });
    return a.tape().record(std::move(out), {a}, [a, floor](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix d = a.value().unaryExpr([floor](double x) { return x > floor ? 1.0 / x : 0.0; });
        tp.accumulate(a, g.cwiseProduct(d));
    });
}

/// Elementwise |a|; subgradient 0 at 0.
[[nodiscard]] inline Var abs(Var a)
{
    return a.tape().record(a.value().cwiseAbs(), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix d = a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
        tp.accumulate(a, g.cwiseProduct(d));
    });
}

/// Inverted dropout with a fixed mask drawn from rng. Identity when rate is 0.
[[nodiscard]] inline Var dropout(Var a, double rate, Rng& rng)
{
    if (rate <= 0.0) {
        return a;
    }
    detail::require(rate < 1.0, "dropout: rate must be < 1");
    Matrix mask(a.rows(), a.cols());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    Matrix out = a.value().cwiseProduct(mask);
    return a.tape().record(std::move(out), {a}, [a, mask = std::move(mask)](Tape& tp, const Matrix& g, const Matrix&) {
        tp.accumulate(a, g.cwiseProduct(mask));
    });
}

// ---------------------------------------------------------------- row-wise

[[nodiscard]] inline Var softmax_rows(Var a)
{
    Matrix out(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
        const double m = a.value().row(r).maxCoeff();
        out.row(r) = (a.value().row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return a.tape().record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix& s) {
        Matrix ga(s.rows(), s.cols());
        for (Index r = 0; r < s.rows(); ++r) {
            const double dot = g.row(r).dot(s.row(r));
            ga.row(r) = s.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
        }
        tp.accumulate(a, ga);
    });
}

/// Divides a nonnegative 1 x n row by its sum.
[[nodiscard]] inline Var normalize(Var a, double floor = 1e-300)
{
    detail::require(a.rows() == 1, "normalize: expects a row vector");
    const double s = std::max(a.value().sum(), floor);
    Matrix out = a.value() / s;
    return a.tape().record(std::move(out), {a}, [a, s](Tape& tp, const Matrix& g, const Matrix& y) {
        const double dot = g.row(0).dot(y.row(0));
        Matrix ga = (g.array() - dot).matrix() / s;
        tp.accumulate(a, ga);
    });
}

/// Row-wise layer normalisation with 1 x cols gain and bias.
[[nodiscard]] inline Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5)
{
    detail::require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm: gamma must be 1 x cols");
    detail::require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm: beta must be 1 x cols");
    const Index rows = x.rows();
    const Index cols = x.cols();
    Matrix xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Index r = 0; r < rows; ++r) {
        const double mu = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = ((x.value().row(r).array() - mu) * inv_std(r)).matrix();
    }
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
    out.rowwise() += beta.value().row(0);
    return x.tape().record(std::move(out), {x, gamma, beta},
                           [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, const Matrix& g, const Matrix&) {
                               if (tp.needs_grad(gamma)) {
                                   tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                               }
                               if (tp.needs_grad(beta)) {
                                   tp.accumulate(beta, g.colwise().sum());
                               }
                               if (tp.needs_grad(x)) {
                                   const auto n = static_cast<double>(xhat.cols());
                                   Matrix dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
                                   Matrix gx(xhat.rows(), xhat.cols());
                                   for (Index r = 0; r < xhat.rows(); ++r) {
                                       const double m1 = dxhat.row(r).sum() / n;
                                       const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                                       gx.row(r) = ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
                                   }
                                   tp.accumulate(x, gx);
                               }
                           });
}

// ---------------------------------------------------------------- indexing

/// Rows of a at the given indices (repeats allowed).
[[nodiscard]] inline Var gather_rows(Var a, std::vector<Index> rows)
{
    Matrix out(static_cast<Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        detail::require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows: index out of range");
        out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
    }
    return a.tape().record(std::move(out), {a}, [a, rows = std::move(rows)](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            ga.row(rows[i]) += g.row(static_cast<Index>(i));
        }
        tp.accumulate(a, ga);
    });
}

[[nodiscard]] inline Var slice_rows(Var a, Index start, Index count)
{
    detail::require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
    Matrix out = a.value().middleRows(start, count);
    return a.tape().record(std::move(out), {a}, [a, start, count](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga.middleRows(start, count) = g;
        tp.accumulate(a, ga);
    });
}

[[nodiscard]] inline Var slice_cols(Var a, Index start, Index count)
{
    detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
    Matrix out = a.value().middleCols(start, count);
    return a.tape().record(std::move(out), {a}, [a, start, count](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga.middleCols(start, count) = g;
        tp.accumulate(a, ga);
    });
}

/// Single element as 1x1.
[[nodiscard]] inline Var pick(Var a, Index row, Index col)
{
    detail::require(row >= 0 && row < a.rows() && col >= 0 && col < a.cols(), "pick: index out of range");
    Matrix out = Matrix::Constant(1, 1, a.value()(row, col));
    return a.tape().record(std::move(out), {a}, [a, row, col](Tape& tp, const Matrix& g, const Matrix&) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga(row, col) = g(0, 0);
        tp.accumulate(a, ga);
    });
}

[[nodiscard]] inline Var concat_cols(const std::vector<Var>& parts)
{
    detail::require(!parts.empty(), "concat_cols: no inputs");
    const Index rows = parts.front().rows();
    Index cols = 0;
    for (const auto& p : parts) {
        detail::require(p.rows() == rows, "concat_cols: row mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return parts.front().tape().record(std::move(out), std::span<const Var>(parts), [parts](Tape& tp, const Matrix& g, const Matrix&) {
        Index off = 0;
        for (const auto& p : parts) {
            if (tp.needs_grad(p)) {
                tp.accumulate(p, g.middleCols(off, p.cols()));
            }
            off += p.cols();
        }
    });
}

/// Places window outputs at their start offsets in a length-`total` sequence and averages
/// positions covered by more than one window.
[[nodiscard]] inline Var overlap_average(const std::vector<Var>& windows, const std::vector<Index>& starts, Index total)
{
    detail::require(!windows.empty() && windows.size() == starts.size(), "overlap_average: bad arguments");
    const Index cols = windows.front().cols();
    Matrix out = Matrix::Zero(total, cols);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(total);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& v = windows[w].value();
        detail::require(v.cols() == cols && starts[w] >= 0 && starts[w] + v.rows() <= total, "overlap_average: window out of range");
        out.middleRows(starts[w], v.rows()) += v;
        count.segment(starts[w], v.rows()).array() += 1.0;
    }
    for (Index r = 0; r < total; ++r) {
        detail::require(count(r) > 0.0, "overlap_average: uncovered position");
        out.row(r) /= count(r);
    }
    return windows.front().tape().record(
        std::move(out), std::span<const Var>(windows), [windows, starts, count](Tape& tp, const Matrix& g, const Matrix&) {
            for (std::size_t w = 0; w < windows.size(); ++w) {
                if (!tp.needs_grad(windows[w])) {
                    continue;
                }
                const Index n = windows[w].rows();
                Matrix gw = g.middleRows(starts[w], n);
                for (Index r = 0; r < n; ++r) {
                    gw.row(r) /= count(starts[w] + r);
                }
                tp.accumulate(windows[w], gw);
            }
        });
}

// ---------------------------------------------------------------- fused losses

/// Sum over elements of the Bernoulli log-density log p^t (1-p)^(1-t), probabilities clamped to [eps, 1-eps].
[[nodiscard]] inline Var bernoulli_log_prob(Var probs, const Matrix& targets, double eps = 1e-12)
{
    detail::require(probs.rows() == targets.rows() && probs.cols() == targets.cols(), "bernoulli_log_prob: shape mismatch");
    double total = 0.0;
    const auto& p = probs.value();
    for (Index i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p.data()[i], eps, 1.0 - eps);
        const double t = targets.data()[i];
        total += t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    }
    Matrix out = Matrix::Constant(1, 1, total);
    return probs.tape().record(std::move(out), {probs}, [probs, targets, eps](Tape& tp, const Matrix& g, const Matrix&) {
        const auto& pv = probs.value();
        Matrix gp(pv.rows(), pv.cols());
        for (Index i = 0; i < pv.size(); ++i) {
            const double x = pv.data()[i];
            const double t = targets.data()[i];
            gp.data()[i] = (x <= eps || x >= 1.0 - eps) ? 0.0 : g(0, 0) * (t / x - (1.0 - t) / (1.0 - x));
        }
        tp.accumulate(probs, gp);
    });
}

} // namespace propex::ad
