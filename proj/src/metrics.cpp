#include "ncd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace ncd {

namespace {

// Shortest augmenting path with potentials, O(n³). Returns the optimal cost only.
double optimal_cost(const std::vector<double>& a, std::size_t n) {
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) total += a[(p[j] - 1) * n + (j - 1)];
    return total;
}

} // namespace

std::vector<std::size_t> hungarian_match(const Tensor& cost) {
    if (cost.rows() != cost.cols())
        throw std::invalid_argument("hungarian_match: cost matrix must be square, got " + cost.shape_string());
    if (!cost.all_finite()) throw std::invalid_argument("hungarian_match: non-finite cost");
    const std::size_t n = cost.rows();
    double scale = 1.0;
    for (double c : cost.data()) scale += std::abs(c);
    const double tol = 1e-9 * scale;

    const double best = optimal_cost(cost.data(), n);
    std::vector<std::size_t> assignment(n);
    std::vector<char> col_taken(n, 0);
    double fixed = 0.0;
    // Fix rows one at a time to the smallest column that still admits an optimal completion.
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t m = n - r - 1;
        bool placed = false;
        for (std::size_t c = 0; c < n && !placed; ++c) {
            if (col_taken[c]) continue;
            std::vector<double> sub;
            sub.reserve(m * m);
            for (std::size_t rr = r + 1; rr < n; ++rr)
                for (std::size_t cc = 0; cc < n; ++cc)
                    if (!col_taken[cc] && cc != c) sub.push_back(cost(rr, cc));
            const double total = fixed + cost(r, c) + optimal_cost(sub, m);
            if (total <= best + tol) {
                assignment[r] = c;
                col_taken[c] = 1;
                fixed += cost(r, c);
                placed = true;
            }
        }
        if (!placed) throw std::logic_error("hungarian_match: no optimal completion found");
    }
    return assignment;
}

double assignment_cost(const Tensor& cost, std::span<const std::size_t> assignment) {
    double total = 0.0;
    for (std::size_t r = 0; r < assignment.size(); ++r) total += cost(r, assignment[r]);
    return total;
}

double clustering_accuracy(std::span<const std::size_t> cluster_preds, std::span<const int> labels,
                           std::size_t num_clusters) {
    if (cluster_preds.size() != labels.size())
        throw std::invalid_argument("clustering_accuracy: " + std::to_string(cluster_preds.size()) +
                                    " predictions vs " + std::to_string(labels.size()) + " labels");
    if (labels.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::map<int, std::size_t> class_index;
    for (int l : labels) class_index.emplace(l, 0);
    std::size_t k = 0;
    for (auto& [label, idx] : class_index) idx = k++;
    const std::size_t n = std::max(num_clusters, class_index.size());
    Tensor cost(n, n);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (cluster_preds[i] >= num_clusters)
            throw std::out_of_range("clustering_accuracy: cluster " + std::to_string(cluster_preds[i]) +
                                    " >= " + std::to_string(num_clusters));
        cost(cluster_preds[i], class_index.at(labels[i])) -= 1.0;
    }
    const auto match = hungarian_match(cost);
    return -assignment_cost(cost, match) / static_cast<double>(labels.size());
}

AaAf aa_af(const Tensor& perf, std::size_t phase) {
    if (phase == 0 || phase > perf.rows() || phase > perf.cols())
        throw std::out_of_range("aa_af: phase " + std::to_string(phase) + " outside a " + perf.shape_string() +
                                " performance matrix");
    const std::size_t i = phase - 1;
    AaAf out;
    for (std::size_t j = 0; j <= i; ++j) out.aa += perf(i, j);
    out.aa /= static_cast<double>(phase);
    if (phase > 1) {
        for (std::size_t j = 0; j < i; ++j) out.af += perf(i, j) - perf(j, j);
        out.af /= static_cast<double>(phase - 1);
    }
    return out;
}

double accuracy_on(std::span<const int> predicted, std::span<const int> labels, std::span<const std::size_t> nodes) {
    if (nodes.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t hits = 0;
    for (std::size_t v : nodes) hits += predicted[v] == labels[v] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted, std::span<const int> labels,
                                                       std::span<const std::size_t> nodes,
                                                       std::span<const int> classes) {
    std::map<int, std::size_t> index;
    for (std::size_t k = 0; k < classes.size(); ++k) index[classes[k]] = k;
    std::vector<std::vector<std::size_t>> counts(classes.size(), std::vector<std::size_t>(classes.size(), 0));
    for (std::size_t v : nodes) {
        auto t = index.find(labels[v]);
        auto p = index.find(predicted[v]);
        if (t == index.end() || p == index.end())
            throw std::invalid_argument("confusion_matrix: node " + std::to_string(v) + " has a class outside the list");
        ++counts[t->second][p->second];
    }
    return counts;
}

} // namespace ncd
