#include "oracles.hpp"

#include "ncd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace oracle {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale) {
    ncd::Rng rng(ncd::derive_seed(seed, "oracle-tensor", rows * 1000 + cols));
    Tensor t(rows, cols);
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

ncd::Graph random_graph(std::size_t n, double p, std::size_t dim, int classes, std::uint64_t seed) {
    ncd::Rng rng(ncd::derive_seed(seed, "oracle-graph"));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
            if (rng.bernoulli(p)) pairs.emplace_back(u, v);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    return ncd::make_graph(random_tensor(n, dim, seed), labels, pairs);
}

Tensor dense_matmul(const Tensor& a, const Tensor& b) {
    Tensor out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

Tensor dense_adjacency(const ncd::Graph& g) {
    Tensor a(g.num_nodes, g.num_nodes);
    for (const auto& [u, v] : g.edges) a(u, v) = 1.0;
    return a;
}

Tensor dense_normalized_adjacency(const ncd::Graph& g) {
    Tensor a = dense_adjacency(g);
    const std::size_t n = g.num_nodes;
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 1.0;
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
    Tensor out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = a(i, j) / std::sqrt(deg[i] * deg[j]);
    return out;
}

Tensor pairwise_similarity(const Tensor& l) {
    Tensor s(l.rows(), l.rows());
    for (std::size_t i = 0; i < l.rows(); ++i)
        for (std::size_t j = 0; j < l.rows(); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < l.cols(); ++k) dot += l(i, k) * l(j, k);
            s(i, j) = 1.0 / (1.0 + std::exp(-dot));
        }
    return s;
}

double pairwise_bce(const Tensor& s, const Tensor& y) {
    double total = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = 0; j < s.cols(); ++j) {
            const double p = std::clamp(s(i, j), 1e-12, 1.0 - 1e-12);
            total += y(i, j) * std::log(p) + (1.0 - y(i, j)) * std::log(1.0 - p);
        }
    return -total / static_cast<double>(s.rows() * s.cols());
}

Tensor topk_pairs(const Tensor& z, std::size_t k) {
    std::vector<std::set<std::size_t>> sets;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        std::vector<std::size_t> order(z.cols());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z(i, a) > z(i, b); });
        sets.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
    Tensor y(z.rows(), z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.rows(); ++j) y(i, j) = sets[i] == sets[j] ? 1.0 : 0.0;
    return y;
}

double mean_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < logits.cols(); ++k) m = std::max(m, logits(i, k));
        double z = 0.0;
        for (std::size_t k = 0; k < logits.cols(); ++k) z += std::exp(logits(i, k) - m);
        total += -(logits(i, targets[i]) - m - std::log(z));
    }
    return total / static_cast<double>(logits.rows());
}

namespace {

std::vector<double> softmax_row(const Tensor& x, std::size_t i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < x.cols(); ++k) m = std::max(m, x(i, k));
    std::vector<double> p(x.cols());
    double z = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) z += p[k] = std::exp(x(i, k) - m);
    for (double& v : p) v /= z;
    return p;
}

} // namespace

double perturb_consistency(const Tensor& clean, const Tensor& perturbed) {
    double total = 0.0;
    for (std::size_t i = 0; i < clean.rows(); ++i) {
        const auto a = softmax_row(clean, i);
        const auto b = softmax_row(perturbed, i);
        for (std::size_t k = 0; k < a.size(); ++k) total += (a[k] - b[k]) * (a[k] - b[k]);
    }
    return total / static_cast<double>(clean.rows()) / static_cast<double>(clean.cols());
}

double distill(const Tensor& frozen, const Tensor& current) {
    double total = 0.0;
    for (std::size_t i = 0; i < frozen.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < frozen.cols(); ++k) sq += (frozen(i, k) - current(i, k)) * (frozen(i, k) - current(i, k));
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(frozen.rows());
}

Moments prototypes(const Tensor& z, const std::vector<int>& labels, const std::vector<int>& classes) {
    Moments m{Tensor(classes.size(), z.cols()), Tensor(classes.size(), z.cols())};
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != classes[c]) continue;
            ++count;
            for (std::size_t k = 0; k < z.cols(); ++k) m.mean(c, k) += z(i, k);
        }
        for (std::size_t k = 0; k < z.cols(); ++k) m.mean(c, k) /= static_cast<double>(count);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != classes[c]) continue;
            for (std::size_t k = 0; k < z.cols(); ++k)
                m.variance(c, k) += (z(i, k) - m.mean(c, k)) * (z(i, k) - m.mean(c, k));
        }
        for (std::size_t k = 0; k < z.cols(); ++k) m.variance(c, k) /= static_cast<double>(count);
    }
    return m;
}

Assignment brute_force_assignment(const Tensor& cost) {
    std::vector<std::size_t> perm(cost.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Assignment best{std::numeric_limits<double>::infinity(), perm};
    do {
        double c = 0.0;
        for (std::size_t r = 0; r < perm.size(); ++r) c += cost(r, perm[r]);
        if (c < best.cost) best = {c, perm};  // strict: the first optimum in lexicographic order stays
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double brute_force_clustering_accuracy(const std::vector<std::size_t>& preds, const std::vector<int>& labels,
                                       std::size_t num_clusters) {
    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    const std::size_t n = std::max(num_clusters, classes.size());
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const std::size_t cls = perm[preds[i]];
            if (cls < classes.size() && classes[cls] == labels[i]) ++hits;
        }
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(preds.size());
}

} // namespace oracle
