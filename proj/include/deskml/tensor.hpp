#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "deskml/errors.hpp"

namespace deskml {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds one value.
class Tensor {
  public:
    Tensor() : data_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }
    static Tensor ones(const Shape& shape) { return Tensor(shape, 1.0); }
    static Tensor full(const Shape& shape, double v) { return Tensor(shape, v); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;
    /// Rows/cols of a rank-2 tensor; a rank-1 tensor is treated as one row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    double item() const;

    Tensor reshaped(Shape shape) const;
    Tensor transposed() const;
    Tensor row(std::size_t r) const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

    std::string to_string() const;

  private:
    Shape shape_;
    std::vector<double> data_;
};

bool operator==(const Tensor& a, const Tensor& b);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Right-aligned broadcast of two shapes; throws DimensionError when incompatible.
Shape broadcast_shapes(const Shape& a, const Shape& b);

/// Sums a broadcast gradient back down to `target` (the inverse of broadcasting).
Tensor sum_to_shape(const Tensor& grad, const Shape& target);

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materialising the transpose.
Tensor matmul_bt(const Tensor& a, const Tensor& b);
/// aᵀ · b without materialising the transpose.
Tensor matmul_at(const Tensor& a, const Tensor& b);

/// Row-wise softmax over the last axis with max subtraction.
Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

}  // namespace kernels

}  // namespace deskml
