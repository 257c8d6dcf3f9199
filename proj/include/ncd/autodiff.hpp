#pragma once

#include "ncd/graph.hpp"
#include "ncd/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ncd::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives and is not reset.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records primitive ops in creation order (which is a topological order) and replays
/// them backwards. A tape supports one backward pass; call reset() to reuse it.
class Tape {
public:
    /// Receives the tape, the op's own output node and the gradient flowing into it.
    using BackwardFn = std::function<void(Tape&, Var out, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is collected by backward().
    Var variable(Tensor value);

    /// Records an op output. `backward` is kept only if some input requires a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return node(v).value; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    /// Adds `g` into v's gradient buffer (no-op for nodes that do not require a gradient).
    void accumulate(Var v, const Tensor& g);

    /// Reverse sweep from a 1×1 loss. Throws std::logic_error on a second call without reset().
    void backward(Var loss);

    /// Gradient of the loss w.r.t. v; zeros when v did not influence the loss.
    Tensor grad(Var v) const;

    void reset();
    std::size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    const Node& node(Var v) const;
    Node& node(Var v);
    Var push(Node n);

    std::deque<Node> nodes_;  // deque keeps value references stable while recording
    bool backward_done_ = false;
};

// ---- primitive ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
/// `a` must outlive the tape's backward pass.
Var spmm(const SparseMatrix& a, Var x);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1×c row to every row of an n×c matrix.
Var add_row(Var x, Var row);
/// Elementwise product.
Var mul(Var a, Var b);
Var mul_scalar(Var x, double s);
Var relu(Var x);
Var sigmoid(Var x);
Var log_softmax_rows(Var x);
Var softmax_rows(Var x);
Var gather_rows(Var x, std::vector<std::size_t> index);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
/// Mean of squared differences over all entries.
Var mse(Var a, Var b);
Var mean(Var x);
Var sum(Var x);
/// Euclidean norm of each row as an n×1 column. The subgradient at a zero row is 0.
Var l2_row_norm(Var x);
/// −mean_i logp(i, target_i)
Var nll(Var log_probs, std::vector<std::size_t> targets);
/// −mean over entries of [t log s + (1−t) log(1−s)], s clamped to [1e-12, 1−1e-12].
Var binary_cross_entropy(Var probs, const Tensor& targets);

// ---- composites ----------------------------------------------------------------------

/// Mean softmax cross-entropy of `logits` against integer targets.
Var cross_entropy(Var logits, std::vector<std::size_t> targets);

} // namespace ncd::ad
