#pragma once

#include "ncd/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ncd {

/// Raised for malformed input files; the message names the file and line.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an input or output file cannot be opened.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when parsed data violates a structural invariant (dangling ids, shape mismatches).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Compressed sparse row matrix. `symmetric` marks matrices built so that A == Aᵀ exactly,
/// which lets the transposed product reuse the forward kernel.
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> col_idx;
    std::vector<double> values;
    bool symmetric = false;

    std::size_t nnz() const { return values.size(); }
    /// Entry (i, j), zero when absent.
    double at(std::size_t i, std::size_t j) const;
    Tensor to_dense() const;
};

/// Â · x
Tensor spmm(const SparseMatrix& a, const Tensor& x);
/// Âᵀ · x
Tensor spmm_transposed(const SparseMatrix& a, const Tensor& x);

/// Undirected, unweighted attributed graph with integer node labels.
struct Graph {
    std::size_t num_nodes = 0;
    Tensor features;  // num_nodes × d0
    /// Both directions of every undirected edge, sorted, each exactly once. No self-edges.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<int> labels;

    std::size_t feature_dim() const { return features.cols(); }
    std::size_t num_undirected_edges() const { return edges.size() / 2; }
    /// One past the largest label.
    int num_classes() const;

    /// Throws ValidationError if any invariant is broken.
    void validate() const;

    friend bool operator==(const Graph&, const Graph&) = default;
};

/// Builds a graph from undirected pairs: rejects self-edges and dangling ids,
/// deduplicates, and stores both directions.
Graph make_graph(Tensor features, std::vector<int> labels,
                 const std::vector<std::pair<std::size_t, std::size_t>>& undirected_pairs);

Graph load_graph(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path);

/// Writes the three text files in the same formats load_graph reads (each edge once, u < v).
void save_graph(const Graph& g, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path, const std::filesystem::path& labels_path);

/// D^{-1/2} (A + I) D^{-1/2} with D the degree of A + I.
SparseMatrix normalize_adjacency(const Graph& g);

/// D^{-1} A without self-loops (mean over neighbours); isolated nodes get an empty row.
SparseMatrix mean_aggregator(const Graph& g);

/// Scales each feature row to unit L2 norm; zero rows are left untouched.
void l2_normalize_rows(Tensor& features);

} // namespace ncd
