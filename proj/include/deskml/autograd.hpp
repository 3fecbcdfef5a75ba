#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "deskml/tensor.hpp"

namespace deskml {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
  public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t numel() const { return value().numel(); }
    double item() const { return value().item(); }

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode record of a computation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep. Each node keeps
/// its forward value; backward closures read parent values from the tape.
class Tape {
  public:
    /// Receives the gradient flowing into a node and accumulates (+=) into the
    /// gradients of its parents. Entries are null for parents that do not
    /// require a gradient.
    using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> parent_grads)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value);
    /// Binds an external parameter tensor. Binding the same tensor twice returns
    /// the same node so gradients from every use accumulate in one place.
    /// Bound tensors are keyed by address and must outlive the tape.
    Var param(const Tensor& parameter);
    /// Same as param() but records the tensor as a constant (frozen weights).
    Var frozen(const Tensor& parameter);

    Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
    void backward(Var loss);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const;
    const Tensor& grad(Var v) const { return grad(v.id()); }
    /// Gradient for a tensor previously bound with param(), if any.
    std::optional<Tensor> param_grad(const Tensor& parameter) const;

    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
        bool has_grad = false;
    };

    std::deque<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> params_;
    std::unordered_map<const Tensor*, std::size_t> frozen_;
    bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Binary ops broadcast with right-aligned trailing
// dimensions; size-1 axes expand.

enum class BinaryKind { add, sub, mul, div };

Var elementwise(Var a, Var b, BinaryKind kind);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator+(Var a, double s);
Var operator-(Var a, double s);

Var matmul(Var a, Var b);
/// x · Wᵀ + b for x [in] or [rows x in], W [out x in], b [out] (bias optional).
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

enum class ReduceKind { sum, mean, max };

/// Reduction over all elements (axis empty) or one axis. Max routes its
/// gradient to the first maximal element.
Var reduce(Var a, ReduceKind kind, std::optional<std::size_t> axis = std::nullopt, bool keepdim = false);
Var sum(Var a, std::optional<std::size_t> axis = std::nullopt, bool keepdim = false);
Var mean(Var a, std::optional<std::size_t> axis = std::nullopt, bool keepdim = false);
Var max(Var a, std::optional<std::size_t> axis = std::nullopt, bool keepdim = false);

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var abs(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// Numerically stable log σ(x).
Var log_sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
/// Elementwise minimum; ties take the gradient on the left operand.
Var minimum(Var a, Var b);
Var clamp(Var a, double lo, double hi);

/// Softmax / log-softmax over the last axis.
Var softmax(Var a);
Var log_softmax(Var a);

/// Mean over rows of -log softmax(logits)[target]; logits are [rows x classes].
Var cross_entropy_logits(Var logits, std::span<const std::size_t> targets);

/// Rows of `table` selected by `ids` -> [ids.size() x cols].
Var gather_rows(Var table, std::span<const std::size_t> ids);
/// Columns `indices` of a rank-2 tensor, in the given order.
Var select_cols(Var a, std::span<const std::size_t> indices);
/// Contiguous column block [begin, begin+count) of a rank-2 tensor.
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Inverse of a pair of select_cols: places `a` at `ia` and `b` at `ib` in a
/// tensor with ia.size()+ib.size() columns.
Var merge_cols(Var a, std::span<const std::size_t> ia, Var b, std::span<const std::size_t> ib);

/// Value of `a` with no gradient flowing back (sg[·]).
Var stop_gradient(Var a);
/// Forward value `forward`, backward passes the incoming gradient to `source`
/// unchanged. `forward` must have the shape of `source`.
Var straight_through(Tensor forward, Var source);

}  // namespace deskml
