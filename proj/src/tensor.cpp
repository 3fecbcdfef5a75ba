#include "deskml/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace deskml {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

namespace {

void check_extents(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
        }
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw DimensionError(fmt::format("shape {} needs {} values, got {}", shape_str(shape_),
                                         shape_numel(shape_), data_.size()));
    }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged matrix literal");
        }
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError(fmt::format("axis {} out of range for shape {}", axis, shape_str(shape_)));
    }
    return shape_[axis];
}

std::size_t Tensor::rows() const {
    if (rank() == 1) {
        return 1;
    }
    if (rank() != 2) {
        throw DimensionError("expected a rank-1 or rank-2 tensor, got " + shape_str(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() == 1) {
        return shape_[0];
    }
    if (rank() != 2) {
        throw DimensionError("expected a rank-1 or rank-2 tensor, got " + shape_str(shape_));
    }
    return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on non-scalar tensor " + shape_str(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw DimensionError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(shape)));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
    if (rank() != 2) {
        throw DimensionError("transpose needs a rank-2 tensor, got " + shape_str(shape_));
    }
    const std::size_t r = shape_[0];
    const std::size_t c = shape_[1];
    Tensor out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out.data_[j * r + i] = data_[i * c + j];
        }
    }
    return out;
}

Tensor Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    if (r >= rows()) {
        throw DimensionError(fmt::format("row {} out of range for {}", r, shape_str(shape_)));
    }
    return Tensor(Shape{c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * c),
                                                data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw DimensionError(fmt::format("+= shape mismatch {} vs {}", shape_str(shape_), shape_str(other.shape_)));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

std::string Tensor::to_string() const {
    std::ostringstream os;
    os << "Tensor" << shape_str(shape_) << "(";
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (i != 0) {
            os << ", ";
        }
        if (i == 16) {
            os << "...";
            break;
        }
        os << data_[i];
    }
    os << ")";
    return os.str();
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.values() == b.values();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("max_abs_diff shape mismatch {} vs {}", shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(
                fmt::format("shapes {} and {} are not broadcastable", shape_str(a), shape_str(b)));
        }
        out[rank - 1 - i] = std::max(da, db);
    }
    return out;
}

Tensor sum_to_shape(const Tensor& grad, const Shape& target) {
    if (grad.shape() == target) {
        return grad;
    }
    const Shape& gs = grad.shape();
    if (target.size() > gs.size()) {
        throw DimensionError(fmt::format("cannot reduce {} to {}", shape_str(gs), shape_str(target)));
    }
    const std::size_t rank = gs.size();
    const std::size_t offset = rank - target.size();
    // Strides of the target expressed over the gradient's axes; broadcast axes get stride 0.
    std::vector<std::size_t> tstride(rank, 0);
    std::size_t s = 1;
    for (std::size_t i = rank; i-- > offset;) {
        const std::size_t td = target[i - offset];
        if (td != gs[i] && td != 1) {
            throw DimensionError(fmt::format("cannot reduce {} to {}", shape_str(gs), shape_str(target)));
        }
        tstride[i] = td == 1 ? 0 : s;
        s *= td;
    }
    Tensor out(target);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t flat = 0; flat < grad.numel(); ++flat) {
        std::size_t t = 0;
        for (std::size_t i = 0; i < rank; ++i) {
            t += idx[i] * tstride[i];
        }
        out[t] += grad[flat];
        for (std::size_t i = rank; i-- > 0;) {
            if (++idx[i] < gs[i]) {
                break;
            }
            idx[i] = 0;
        }
    }
    return out;
}

namespace kernels {

namespace {

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(fmt::format("{} must be rank-2, got {}", what, shape_str(t.shape())));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError(fmt::format("matmul inner dimensions disagree: {} x {}", shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
    Tensor out(Shape{m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = po + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(0);
    if (b.dim(1) != k) {
        throw DimensionError(fmt::format("matmul inner dimensions disagree: {} x {}^T", shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
    Tensor out(Shape{m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += pa[i * k + p] * pb[j * k + p];
            }
            po[i * n + j] = acc;
        }
    }
    return out;
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    const std::size_t k = a.dim(0);
    const std::size_t m = a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError(fmt::format("matmul inner dimensions disagree: {}^T x {}", shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
    Tensor out(Shape{m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
            const double av = pa[p * m + i];
            const double* brow = pb + p * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    const std::size_t c = logits.rank() == 0 ? 1 : logits.shape().back();
    const std::size_t r = logits.numel() / c;
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = logits.data().data() + i * c;
        double* o = out.data().data() + i * c;
        const double mx = *std::max_element(in, in + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            o[j] /= total;
        }
    }
    return out;
}

Tensor log_softmax_rows(const Tensor& logits) {
    const std::size_t c = logits.rank() == 0 ? 1 : logits.shape().back();
    const std::size_t r = logits.numel() / c;
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = logits.data().data() + i * c;
        double* o = out.data().data() + i * c;
        const double mx = *std::max_element(in, in + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            total += std::exp(in[j] - mx);
        }
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < c; ++j) {
            o[j] = in[j] - lse;
        }
    }
    return out;
}

}  // namespace kernels

}  // namespace deskml
