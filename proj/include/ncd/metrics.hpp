#pragma once

#include "ncd/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ncd {

/// Minimum-cost assignment for a square cost matrix: result[row] = column. Among all
/// optimal assignments the lexicographically smallest one is returned.
std::vector<std::size_t> hungarian_match(const Tensor& cost);

double assignment_cost(const Tensor& cost, std::span<const std::size_t> assignment);

/// Best one-to-one cluster → class accuracy. Labels may be any class ids; the contingency
/// matrix is padded to square when clusters and classes differ in number.
double clustering_accuracy(std::span<const std::size_t> cluster_preds, std::span<const int> labels,
                           std::size_t num_clusters);

struct AaAf {
    double aa = 0.0;
    double af = 0.0;
};

/// Average accuracy and average forgetting at `phase` (1-based) of a lower-triangular
/// performance matrix: aa = mean_j≤i M_ij, af = mean_j<i (M_ij − M_jj), af = 0 at phase 1.
AaAf aa_af(const Tensor& perf, std::size_t phase);

/// Fraction of `nodes` whose prediction equals the label; NaN for an empty list.
double accuracy_on(std::span<const int> predicted, std::span<const int> labels, std::span<const std::size_t> nodes);

/// classes.size()² counts over `nodes`, rows true class, columns predicted class, both in
/// the order of `classes`. Predictions outside `classes` are rejected.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted, std::span<const int> labels,
                                                       std::span<const std::size_t> nodes,
                                                       std::span<const int> classes);

} // namespace ncd
