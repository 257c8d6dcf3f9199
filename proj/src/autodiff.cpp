#include "ncd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ncd::ad {

const Tensor& Var::value() const {
    if (!tape_) throw std::logic_error("Var: uninitialized handle");
    return tape_->value(*this);
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("Tape: Var does not belong to this tape");
    return nodes_[v.id_];
}

Tape::Node& Tape::node(Var v) {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("Tape: Var does not belong to this tape");
    return nodes_[v.id_];
}

Var Tape::push(Node n) {
    if (backward_done_) throw std::logic_error("Tape: cannot record after backward(); reset() first");
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(Node{std::move(value), {}, false, {}}); }

Var Tape::variable(Tensor value) { return push(Node{std::move(value), {}, true, {}}); }

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool any = false;
    for (Var in : inputs) any = any || node(in).requires_grad;
    Node n{std::move(value), {}, any, {}};
    if (any) n.backward = std::move(backward);
    return push(std::move(n));
}

void Tape::accumulate(Var v, const Tensor& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (!g.same_shape(n.value)) {
        throw std::logic_error("Tape: gradient shape " + g.shape_string() + " does not match value " +
                               n.value.shape_string());
    }
    if (n.grad.empty() && !n.value.empty()) {
        n.grad = g;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::backward(Var loss) {
    if (backward_done_) throw std::logic_error("Tape: backward() already ran on this tape; reset() first");
    const Node& l = node(loss);
    if (l.value.rows() != 1 || l.value.cols() != 1)
        throw std::invalid_argument("Tape: backward() needs a scalar loss, got " + l.value.shape_string());
    backward_done_ = true;
    if (!l.requires_grad) return;
    nodes_[loss.id_].grad = Tensor(1, 1, 1.0);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.empty()) continue;
        n.backward(*this, Var(this, i), n.grad);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw std::logic_error("autodiff: uninitialized Var");
    return *a.tape();
}

Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape()) throw std::logic_error("autodiff: operands live on different tapes");
    return tape_of(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

Tensor scaled(const Tensor& t, double s) {
    Tensor out = t;
    for (double& v : out.data()) v *= s;
    return out;
}

} // namespace

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record(ncd::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, ncd::matmul_nt(g, b.value()));
        if (tp.requires_grad(b)) tp.accumulate(b, ncd::matmul_tn(a.value(), g));
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record(ncd::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
        // out = a bᵀ ⇒ da = g b, db = gᵀ a
        if (tp.requires_grad(a)) tp.accumulate(a, ncd::matmul(g, b.value()));
        if (tp.requires_grad(b)) tp.accumulate(b, ncd::matmul_tn(g, a.value()));
    });
}

Var spmm(const SparseMatrix& a, Var x) {
    Tape& t = tape_of(x);
    const SparseMatrix* ap = &a;
    return t.record(ncd::spmm(a, x.value()), {x}, [ap, x](Tape& tp, Var, const Tensor& g) {
        tp.accumulate(x, ncd::spmm_transposed(*ap, g));
    });
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    return t.record(ncd::transpose(a.value()), {a},
                    [a](Tape& tp, Var, const Tensor& g) { tp.accumulate(a, ncd::transpose(g)); });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b)) tp.accumulate(b, scaled(g, -1.0));
    });
}

Var add_row(Var x, Var row) {
    Tape& t = tape_of(x, row);
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != xv.cols())
        throw std::invalid_argument("add_row: row " + rv.shape_string() + " vs matrix " + xv.shape_string());
    Tensor out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
    return t.record(std::move(out), {x, row}, [x, row](Tape& tp, Var, const Tensor& g) {
        tp.accumulate(x, g);
        if (tp.requires_grad(row)) {
            Tensor gr(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
            tp.accumulate(row, gr);
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
        if (tp.requires_grad(a)) {
            Tensor ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
            tp.accumulate(a, ga);
        }
        if (tp.requires_grad(b)) {
            Tensor gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
            tp.accumulate(b, gb);
        }
    });
}

Var mul_scalar(Var x, double s) {
    Tape& t = tape_of(x);
    return t.record(scaled(x.value(), s), {x}, [x, s](Tape& tp, Var, const Tensor& g) { tp.accumulate(x, scaled(g, s)); });
}

Var relu(Var x) {
    Tape& t = tape_of(x);
    Tensor out = x.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return t.record(std::move(out), {x}, [x](Tape& tp, Var, const Tensor& g) {
        Tensor gx = g;
        const Tensor& xv = x.value();
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(xv[i] > 0.0)) gx[i] = 0.0;
        tp.accumulate(x, gx);
    });
}

Var sigmoid(Var x) {
    Tape& t = tape_of(x);
    Tensor out = x.value();
    for (double& v : out.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return t.record(std::move(out), {x}, [x](Tape& tp, Var y, const Tensor& g) {
        Tensor gx = g;
        const Tensor& s = y.value();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= s[i] * (1.0 - s[i]);
        tp.accumulate(x, gx);
    });
}

Var log_softmax_rows(Var x) {
    Tape& t = tape_of(x);
    return t.record(ncd::log_softmax_rows(x.value()), {x}, [x](Tape& tp, Var y, const Tensor& g) {
        // dx = g − softmax · rowsum(g)
        const Tensor& lp = y.value();
        Tensor gx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = g(i, j) - std::exp(lp(i, j)) * gs;
        }
        tp.accumulate(x, gx);
    });
}

Var softmax_rows(Var x) {
    Tape& t = tape_of(x);
    return t.record(ncd::softmax_rows(x.value()), {x}, [x](Tape& tp, Var y, const Tensor& g) {
        // dx = p ⊙ (g − <g, p>)
        const Tensor& p = y.value();
        Tensor gx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * p(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = p(i, j) * (g(i, j) - dot);
        }
        tp.accumulate(x, gx);
    });
}

Var gather_rows(Var x, std::vector<std::size_t> index) {
    Tape& t = tape_of(x);
    Tensor out = ncd::gather_rows(x.value(), index);
    return t.record(std::move(out), {x}, [x, index = std::move(index)](Tape& tp, Var, const Tensor& g) {
        Tensor gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < index.size(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gx(index[i], j) += g(i, j);
        tp.accumulate(x, gx);
    });
}

Var concat_rows(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols())
        throw std::invalid_argument("concat_rows: " + av.shape_string() + " vs " + bv.shape_string());
    std::vector<double> data = av.data();
    data.insert(data.end(), bv.data().begin(), bv.data().end());
    Tensor out(av.rows() + bv.rows(), av.cols(), std::move(data));
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
        const std::size_t split = a.rows() * g.cols();
        if (tp.requires_grad(a))
            tp.accumulate(a, Tensor(a.rows(), g.cols(), std::vector<double>(g.data().begin(), g.data().begin() + static_cast<std::ptrdiff_t>(split))));
        if (tp.requires_grad(b))
            tp.accumulate(b, Tensor(b.rows(), g.cols(), std::vector<double>(g.data().begin() + static_cast<std::ptrdiff_t>(split), g.data().end())));
    });
}

Var concat_cols(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rows() != bv.rows())
        throw std::invalid_argument("concat_cols: " + av.shape_string() + " vs " + bv.shape_string());
    const std::size_t ca = av.cols();
    const std::size_t cb = bv.cols();
    Tensor out(av.rows(), ca + cb);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        std::copy_n(av.row(i).begin(), ca, out.row(i).begin());
        std::copy_n(bv.row(i).begin(), cb, out.row(i).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, Var, const Tensor& g) {
        Tensor ga(g.rows(), ca);
        Tensor gb(g.rows(), cb);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) ga(i, j) = g(i, j);
            for (std::size_t j = 0; j < cb; ++j) gb(i, j) = g(i, ca + j);
        }
        tp.accumulate(a, ga);
        tp.accumulate(b, gb);
    });
}

Var mse(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), "mse");
    const std::size_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        acc += d * d;
    }
    return t.record(Tensor(1, 1, acc / static_cast<double>(n)), {a, b}, [a, b, n](Tape& tp, Var, const Tensor& g) {
        const double k = 2.0 * g[0] / static_cast<double>(n);
        Tensor ga(a.rows(), a.cols());
        for (std::size_t i = 0; i < n; ++i) ga[i] = k * (a.value()[i] - b.value()[i]);
        if (tp.requires_grad(a)) tp.accumulate(a, ga);
        if (tp.requires_grad(b)) tp.accumulate(b, scaled(ga, -1.0));
    });
}

Var mean(Var x) {
    Tape& t = tape_of(x);
    const std::size_t n = x.value().size();
    if (n == 0) throw std::invalid_argument("mean: empty input");
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    return t.record(Tensor(1, 1, acc / static_cast<double>(n)), {x}, [x, n](Tape& tp, Var, const Tensor& g) {
        tp.accumulate(x, Tensor(x.rows(), x.cols(), g[0] / static_cast<double>(n)));
    });
}

Var sum(Var x) {
    Tape& t = tape_of(x);
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    return t.record(Tensor(1, 1, acc), {x},
                    [x](Tape& tp, Var, const Tensor& g) { tp.accumulate(x, Tensor(x.rows(), x.cols(), g[0])); });
}

Var l2_row_norm(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), 1);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        double s = 0.0;
        for (double v : xv.row(i)) s += v * v;
        out(i, 0) = std::sqrt(s);
    }
    return t.record(std::move(out), {x}, [x](Tape& tp, Var y, const Tensor& g) {
        const Tensor& xv = x.value();
        const Tensor& norms = y.value();
        Tensor gx(xv.rows(), xv.cols());
        for (std::size_t i = 0; i < xv.rows(); ++i) {
            if (norms(i, 0) == 0.0) continue;
            const double k = g(i, 0) / norms(i, 0);
            for (std::size_t j = 0; j < xv.cols(); ++j) gx(i, j) = k * xv(i, j);
        }
        tp.accumulate(x, gx);
    });
}

Var nll(Var log_probs, std::vector<std::size_t> targets) {
    Tape& t = tape_of(log_probs);
    const Tensor& lp = log_probs.value();
    if (targets.size() != lp.rows() || lp.rows() == 0)
        throw std::invalid_argument("nll: " + std::to_string(targets.size()) + " targets for " + lp.shape_string());
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] >= lp.cols())
            throw std::out_of_range("nll: target " + std::to_string(targets[i]) + " >= " + std::to_string(lp.cols()));
        acc -= lp(i, targets[i]);
    }
    const double n = static_cast<double>(targets.size());
    return t.record(Tensor(1, 1, acc / n), {log_probs},
                    [log_probs, targets = std::move(targets), n](Tape& tp, Var, const Tensor& g) {
                        Tensor gx(log_probs.rows(), log_probs.cols());
                        for (std::size_t i = 0; i < targets.size(); ++i) gx(i, targets[i]) = -g[0] / n;
                        tp.accumulate(log_probs, gx);
                    });
}

namespace {
constexpr double kProbFloor = 1e-12;
}

Var binary_cross_entropy(Var probs, const Tensor& targets) {
    Tape& t = tape_of(probs);
    const Tensor& s = probs.value();
    require_same_shape(s, targets, "binary_cross_entropy");
    if (s.empty()) throw std::invalid_argument("binary_cross_entropy: empty input");
    const double n = static_cast<double>(s.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = std::clamp(s[i], kProbFloor, 1.0 - kProbFloor);
        acc -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
    }
    return t.record(Tensor(1, 1, acc / n), {probs}, [probs, targets, n](Tape& tp, Var, const Tensor& g) {
        const Tensor& s = probs.value();
        Tensor gs(s.rows(), s.cols());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] < kProbFloor || s[i] > 1.0 - kProbFloor) continue;  // clamped: flat
            gs[i] = -g[0] / n * (targets[i] / s[i] - (1.0 - targets[i]) / (1.0 - s[i]));
        }
        tp.accumulate(probs, gs);
    });
}

Var cross_entropy(Var logits, std::vector<std::size_t> targets) {
    return nll(log_softmax_rows(logits), std::move(targets));
}

} // namespace ncd::ad
