#pragma once

// Deliberately naive reference implementations used to cross-check the library.

#include "ncd/graph.hpp"
#include "ncd/tensor.hpp"

#include <cstdint>
#include <vector>

namespace oracle {

using ncd::Tensor;

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0);
/// Erdős–Rényi graph with Gaussian features and labels i mod classes.
ncd::Graph random_graph(std::size_t n, double p, std::size_t dim, int classes, std::uint64_t seed);

Tensor dense_matmul(const Tensor& a, const Tensor& b);
Tensor dense_adjacency(const ncd::Graph& g);
/// D^{-1/2}(A+I)D^{-1/2} from the dense matrix.
Tensor dense_normalized_adjacency(const ncd::Graph& g);

Tensor pairwise_similarity(const Tensor& logits);
double pairwise_bce(const Tensor& s, const Tensor& y);
Tensor topk_pairs(const Tensor& z, std::size_t k);
double mean_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets);
double perturb_consistency(const Tensor& clean, const Tensor& perturbed);
double distill(const Tensor& frozen, const Tensor& current);

struct Moments {
    Tensor mean;
    Tensor variance;
};
Moments prototypes(const Tensor& z, const std::vector<int>& labels, const std::vector<int>& classes);

struct Assignment {
    double cost = 0.0;
    std::vector<std::size_t> perm;  // lexicographically first among optimal
};
/// Exhaustive search over all permutations (exact comparison, so use integer costs).
Assignment brute_force_assignment(const Tensor& cost);
double brute_force_clustering_accuracy(const std::vector<std::size_t>& preds, const std::vector<int>& labels,
                                       std::size_t num_clusters);

} // namespace oracle
