#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ncd {

/// Dense row-major matrix of 64-bit reals. Vectors are stored as 1×n rows.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Builds a matrix from nested initializer lists, e.g. `Tensor::from({{1, 2}, {3, 4}})`.
    static Tensor from(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row_vector(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double value);
    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Plain (non-differentiable) kernels shared by the tape ops and by oracles-free callers.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise log-softmax with max subtraction.
Tensor log_softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

/// Index of the largest entry of each row; ties resolve to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& x);

/// Rows of `x` selected by `index`, in order.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

/// Largest |a_i − b_i|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace ncd
