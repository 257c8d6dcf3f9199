#include "ncd/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ncd {

double SparseMatrix::at(std::size_t i, std::size_t j) const {
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        if (col_idx[k] == j) return values[k];
    return 0.0;
}

Tensor SparseMatrix::to_dense() const {
    Tensor out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out(i, col_idx[k]) += values[k];
    return out;
}

Tensor spmm(const SparseMatrix& a, const Tensor& x) {
    if (a.cols != x.rows()) {
        throw std::invalid_argument("spmm: sparse " + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " vs dense " + x.shape_string());
    }
    Tensor out(a.rows, x.cols());
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* o = &out(i, 0);
        for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const double w = a.values[k];
            const double* xr = x.row(a.col_idx[k]).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += w * xr[j];
        }
    }
    return out;
}

Tensor spmm_transposed(const SparseMatrix& a, const Tensor& x) {
    if (a.symmetric) return spmm(a, x);
    if (a.rows != x.rows()) {
        throw std::invalid_argument("spmm_transposed: sparse " + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " vs dense " + x.shape_string());
    }
    Tensor out(a.cols, x.cols());
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* xr = x.row(i).data();
        for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const double w = a.values[k];
            double* o = &out(a.col_idx[k], 0);
            for (std::size_t j = 0; j < n; ++j) o[j] += w * xr[j];
        }
    }
    return out;
}

int Graph::num_classes() const {
    int mx = -1;
    for (int l : labels) mx = std::max(mx, l);
    return mx + 1;
}

void Graph::validate() const {
    if (features.rows() != num_nodes) {
        throw ValidationError("graph: features have " + std::to_string(features.rows()) +
                              " rows but graph has " + std::to_string(num_nodes) + " nodes");
    }
    if (labels.size() != num_nodes) {
        throw ValidationError("graph: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(num_nodes) + " nodes");
    }
    if (!features.all_finite()) throw ValidationError("graph: features contain NaN or Inf");
    for (int l : labels)
        if (l < 0) throw ValidationError("graph: negative label " + std::to_string(l));
    for (const auto& [u, v] : edges) {
        if (u >= num_nodes || v >= num_nodes) {
            throw ValidationError("graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") references a node >= " + std::to_string(num_nodes));
        }
        if (u == v) throw ValidationError("graph: self-edge on node " + std::to_string(u));
    }
    if (!std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw ValidationError("graph: edge list not sorted and unique");
    }
    for (const auto& [u, v] : edges) {
        if (!std::binary_search(edges.begin(), edges.end(), std::make_pair(v, u)))
            throw ValidationError("graph: edge list is not symmetric");
    }
}

Graph make_graph(Tensor features, std::vector<int> labels,
                 const std::vector<std::pair<std::size_t, std::size_t>>& undirected_pairs) {
    Graph g;
    g.num_nodes = features.rows();
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.edges.reserve(undirected_pairs.size() * 2);
    for (const auto& [u, v] : undirected_pairs) {
        if (u >= g.num_nodes || v >= g.num_nodes) {
            throw ValidationError("graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") references a node >= " + std::to_string(g.num_nodes));
        }
        if (u == v) throw ValidationError("graph: self-edge on node " + std::to_string(u));
        g.edges.emplace_back(u, v);
        g.edges.emplace_back(v, u);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.validate();
    return g;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return in;
}

bool is_blank_or_comment(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line_no, const std::string& what) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

template <typename T>
std::vector<T> parse_fields(const std::string& line, const std::filesystem::path& path, std::size_t line_no) {
    std::vector<T> out;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
        while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
        if (p == end || *p == '#') break;
        T value{};
        auto [next, ec] = std::from_chars(p, end, value);
        if (ec != std::errc() || (next < end && !std::isspace(static_cast<unsigned char>(*next)) && *next != '#')) {
            const char* tok_end = p;
            while (tok_end < end && !std::isspace(static_cast<unsigned char>(*tok_end))) ++tok_end;
            parse_fail(path, line_no, "malformed value '" + std::string(p, tok_end) + "'");
        }
        out.push_back(value);
        p = next;
    }
    return out;
}

} // namespace

Graph load_graph(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path) {
    std::vector<double> feat;
    std::size_t rows = 0, dim = 0;
    {
        auto in = open_input(features_path);
        std::string line;
        for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
            if (is_blank_or_comment(line)) continue;
            auto vals = parse_fields<double>(line, features_path, line_no);
            if (rows == 0) dim = vals.size();
            if (vals.size() != dim) {
                parse_fail(features_path, line_no,
                           "expected " + std::to_string(dim) + " values, found " + std::to_string(vals.size()));
            }
            feat.insert(feat.end(), vals.begin(), vals.end());
            ++rows;
        }
    }
    std::vector<int> labels;
    {
        auto in = open_input(labels_path);
        std::string line;
        for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
            if (is_blank_or_comment(line)) continue;
            auto vals = parse_fields<int>(line, labels_path, line_no);
            if (vals.size() != 1) parse_fail(labels_path, line_no, "expected exactly one label");
            labels.push_back(vals[0]);
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    {
        auto in = open_input(edges_path);
        std::string line;
        for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
            if (is_blank_or_comment(line)) continue;
            auto vals = parse_fields<long long>(line, edges_path, line_no);
            if (vals.size() != 2) parse_fail(edges_path, line_no, "expected two node ids");
            if (vals[0] < 0 || vals[1] < 0) parse_fail(edges_path, line_no, "negative node id");
            if (vals[0] == vals[1]) parse_fail(edges_path, line_no, "self-edge is not allowed");
            pairs.emplace_back(static_cast<std::size_t>(vals[0]), static_cast<std::size_t>(vals[1]));
        }
    }
    return make_graph(Tensor(rows, dim, std::move(feat)), std::move(labels), pairs);
}

void save_graph(const Graph& g, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path, const std::filesystem::path& labels_path) {
    auto open_output = [](const std::filesystem::path& p) {
        std::ofstream out(p);
        if (!out) throw IoError("cannot write '" + p.string() + "'");
        return out;
    };
    {
        auto out = open_output(edges_path);
        for (const auto& [u, v] : g.edges)
            if (u < v) out << u << ' ' << v << '\n';
    }
    {
        auto out = open_output(features_path);
        char buf[32];
        for (std::size_t i = 0; i < g.num_nodes; ++i) {
            auto r = g.features.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", r[j]);
                out << (j ? " " : "") << buf;
            }
            out << '\n';
        }
    }
    {
        auto out = open_output(labels_path);
        for (int l : g.labels) out << l << '\n';
    }
}

SparseMatrix normalize_adjacency(const Graph& g) {
    const std::size_t n = g.num_nodes;
    std::vector<std::size_t> degree(n, 1);  // self-loop
    for (const auto& e : g.edges) ++degree[e.first];

    SparseMatrix a;
    a.rows = a.cols = n;
    a.symmetric = true;
    a.row_ptr.assign(n + 1, 0);
    a.col_idx.reserve(g.edges.size() + n);
    a.values.reserve(g.edges.size() + n);
    // Edges are sorted by (u, v); merge the diagonal into each row in column order.
    std::size_t e = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool diag_done = false;
        auto push = [&](std::size_t j) {
            a.col_idx.push_back(j);
            a.values.push_back(1.0 / std::sqrt(static_cast<double>(degree[i]) * static_cast<double>(degree[j])));
        };
        for (; e < g.edges.size() && g.edges[e].first == i; ++e) {
            const std::size_t j = g.edges[e].second;
            if (!diag_done && j > i) {
                push(i);
                diag_done = true;
            }
            push(j);
        }
        if (!diag_done) push(i);
        a.row_ptr[i + 1] = a.col_idx.size();
    }
    return a;
}

SparseMatrix mean_aggregator(const Graph& g) {
    const std::size_t n = g.num_nodes;
    std::vector<std::size_t> degree(n, 0);
    for (const auto& e : g.edges) ++degree[e.first];
    SparseMatrix a;
    a.rows = a.cols = n;
    a.symmetric = false;
    a.row_ptr.assign(n + 1, 0);
    a.col_idx.reserve(g.edges.size());
    a.values.reserve(g.edges.size());
    std::size_t e = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (; e < g.edges.size() && g.edges[e].first == i; ++e) {
            a.col_idx.push_back(g.edges[e].second);
            a.values.push_back(1.0 / static_cast<double>(degree[i]));
        }
        a.row_ptr[i + 1] = a.col_idx.size();
    }
    return a;
}

void l2_normalize_rows(Tensor& features) {
    for (std::size_t i = 0; i < features.rows(); ++i) {
        auto r = features.row(i);
        double s = 0.0;
        for (double v : r) s += v * v;
        if (s == 0.0) continue;
        const double inv = 1.0 / std::sqrt(s);
        for (double& v : r) v *= inv;
    }
}

} // namespace ncd
