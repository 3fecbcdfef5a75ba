#include "deskml/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace deskml {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, {}, nullptr, false, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, {}, nullptr, true, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Tensor& parameter) {
    if (auto it = params_.find(&parameter); it != params_.end()) {
        return Var(this, it->second);
    }
    Var v = leaf(parameter);
    params_.emplace(&parameter, v.id());
    return v;
}

Var Tape::frozen(const Tensor& parameter) {
    if (auto it = frozen_.find(&parameter); it != frozen_.end()) {
        return Var(this, it->second);
    }
    Var v = constant(parameter);
    frozen_.emplace(&parameter, v.id());
    return v;
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    node.parents.reserve(parents.size());
    for (const Var& p : parents) {
        if (&p.tape() != this) {
            throw Error("cannot mix nodes from different tapes");
        }
        node.parents.push_back(p.id());
        node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) {
        throw Error("loss node belongs to another tape");
    }
    const Tensor& lv = nodes_[loss.id()].value;
    if (lv.numel() != 1) {
        throw DimensionError("backward needs a scalar loss, got shape " + shape_str(lv.shape()));
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
    }
    Node& root = nodes_[loss.id()];
    root.grad = Tensor(lv.shape(), 1.0);
    root.has_grad = true;

    std::vector<Tensor*> parent_grads;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad || !node.backward) {
            continue;
        }
        parent_grads.clear();
        for (std::size_t p : node.parents) {
            Node& parent = nodes_[p];
            if (!parent.requires_grad) {
                parent_grads.push_back(nullptr);
                continue;
            }
            if (!parent.has_grad) {
                parent.grad = Tensor(parent.value.shape(), 0.0);
                parent.has_grad = true;
            }
            parent_grads.push_back(&parent.grad);
        }
        node.backward(node.grad, parent_grads);
    }
    for (Node& n : nodes_) {
        if (!n.has_grad) {
            n.grad = Tensor(n.value.shape(), 0.0);
            n.has_grad = true;
        }
    }
    backward_done_ = true;
}

const Tensor& Tape::grad(std::size_t id) const {
    if (!backward_done_) {
        throw Error("gradient requested before backward()");
    }
    return nodes_[id].grad;
}

std::optional<Tensor> Tape::param_grad(const Tensor& parameter) const {
    auto it = params_.find(&parameter);
    if (it == params_.end()) {
        return std::nullopt;
    }
    return grad(it->second);
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

constexpr double kDivEps = 1e-12;

template <class F>
Tensor broadcast_map(const Tensor& a, const Tensor& b, F&& f) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.numel(); ++i) {
            out[i] = f(a[i], b[i]);
        }
        return out;
    }
    const Shape shape = broadcast_shapes(a.shape(), b.shape());
    const std::size_t rank = shape.size();
    auto strides_for = [&](const Shape& s) {
        std::vector<std::size_t> st(rank, 0);
        std::size_t acc = 1;
        const std::size_t off = rank - s.size();
        for (std::size_t i = rank; i-- > off;) {
            const std::size_t d = s[i - off];
            st[i] = d == 1 ? 0 : acc;
            acc *= d;
        }
        return st;
    };
    const auto sa = strides_for(a.shape());
    const auto sb = strides_for(b.shape());
    Tensor out(shape);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t flat = 0; flat < out.numel(); ++flat) {
        out[flat] = f(a[ia], b[ib]);
        for (std::size_t i = rank; i-- > 0;) {
            ++idx[i];
            ia += sa[i];
            ib += sb[i];
            if (idx[i] < shape[i]) {
                break;
            }
            ia -= sa[i] * idx[i];
            ib -= sb[i] * idx[i];
            idx[i] = 0;
        }
    }
    return out;
}

void accumulate(Tensor* target, const Tensor& contribution) {
    if (target == nullptr) {
        return;
    }
    *target += sum_to_shape(contribution, target->shape());
}

template <class F, class DF>
Var unary(Var a, F&& f, DF&& df) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        y[i] = f(x[i]);
    }
    Tape& tape = a.tape();
    const std::size_t out_id = tape.size();
    return tape.record(std::move(y), {a}, [a, out_id, &tape, df](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& xin = a.value();
        const Tensor& yout = tape.value(out_id);
        Tensor& ga = *pg[0];
        for (std::size_t i = 0; i < xin.numel(); ++i) {
            ga[i] += g[i] * df(xin[i], yout[i]);
        }
    });
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(fmt::format("{} needs a rank-2 tensor, got {}", what, shape_str(t.shape())));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Var elementwise(Var a, Var b, BinaryKind kind) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Tensor out;
    switch (kind) {
        case BinaryKind::add:
            out = broadcast_map(x, y, [](double p, double q) { return p + q; });
            break;
        case BinaryKind::sub:
            out = broadcast_map(x, y, [](double p, double q) { return p - q; });
            break;
        case BinaryKind::mul:
            out = broadcast_map(x, y, [](double p, double q) { return p * q; });
            break;
        case BinaryKind::div: {
            std::vector<std::size_t> bad;
            for (std::size_t i = 0; i < y.numel(); ++i) {
                if (std::abs(y[i]) < kDivEps) {
                    bad.push_back(i);
                }
            }
            if (!bad.empty()) {
                std::string where;
                for (std::size_t i = 0; i < bad.size() && i < 8; ++i) {
                    where += (i ? "," : "") + std::to_string(bad[i]);
                }
                throw NumericError(fmt::format("division by |b| < {} at {} position(s): {}{}", kDivEps, bad.size(),
                                               where, bad.size() > 8 ? ",..." : ""));
            }
            out = broadcast_map(x, y, [](double p, double q) { return p / q; });
            break;
        }
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, kind](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        switch (kind) {
            case BinaryKind::add:
                accumulate(pg[0], g);
                accumulate(pg[1], g);
                break;
            case BinaryKind::sub:
                accumulate(pg[0], g);
                if (pg[1] != nullptr) {
                    Tensor neg = g;
                    neg *= -1.0;
                    accumulate(pg[1], neg);
                }
                break;
            case BinaryKind::mul:
                if (pg[0] != nullptr) {
                    accumulate(pg[0], broadcast_map(g, y, [](double p, double q) { return p * q; }));
                }
                if (pg[1] != nullptr) {
                    accumulate(pg[1], broadcast_map(g, x, [](double p, double q) { return p * q; }));
                }
                break;
            case BinaryKind::div:
                if (pg[0] != nullptr) {
                    accumulate(pg[0], broadcast_map(g, y, [](double p, double q) { return p / q; }));
                }
                if (pg[1] != nullptr) {
                    const Tensor gx = broadcast_map(g, x, [](double p, double q) { return p * q; });
                    accumulate(pg[1], broadcast_map(gx, y, [](double p, double q) { return -p / (q * q); }));
                }
                break;
        }
    });
}

Var operator+(Var a, Var b) { return elementwise(a, b, BinaryKind::add); }
Var operator-(Var a, Var b) { return elementwise(a, b, BinaryKind::sub); }
Var operator*(Var a, Var b) { return elementwise(a, b, BinaryKind::mul); }
Var operator/(Var a, Var b) { return elementwise(a, b, BinaryKind::div); }

Var operator-(Var a) {
    return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator*(Var a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var operator*(double s, Var a) { return a * s; }

Var operator+(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var operator-(Var a, double s) { return a + (-s); }

// ---------------------------------------------------------------------------
// Linear algebra and shape

Var matmul(Var a, Var b) {
    Tensor out = kernels::matmul(a.value(), b.value());
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0] != nullptr) {
            *pg[0] += kernels::matmul_bt(g, b.value());
        }
        if (pg[1] != nullptr) {
            *pg[1] += kernels::matmul_at(a.value(), g);
        }
    });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
    const Tensor& w = weight.value();
    require_rank2(w, "linear weight");
    const Tensor& xv = x.value();
    const bool vector_input = xv.rank() == 1;
    if (xv.rank() != 1 && xv.rank() != 2) {
        throw DimensionError("linear input must be rank 1 or 2, got " + shape_str(xv.shape()));
    }
    const std::size_t in = w.dim(1);
    const std::size_t out_dim = w.dim(0);
    if (xv.cols() != in) {
        throw DimensionError(fmt::format("linear: input {} does not match weight {}", shape_str(xv.shape()),
                                         shape_str(w.shape())));
    }
    if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != out_dim)) {
        throw DimensionError(fmt::format("linear: bias {} does not match weight {}",
                                         shape_str(bias->value().shape()), shape_str(w.shape())));
    }
    const std::size_t rows = xv.rows();
    Tensor y = kernels::matmul_bt(xv.reshaped({rows, in}), w);
    if (bias) {
        const Tensor& b = bias->value();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < out_dim; ++j) {
                y[i * out_dim + j] += b[j];
            }
        }
    }
    if (vector_input) {
        y = y.reshaped({out_dim});
    }
    std::vector<Var> parents{x, weight};
    if (bias) {
        parents.push_back(*bias);
    }
    return x.tape().record(std::move(y), parents,
                           [x, weight, rows, in, out_dim](const Tensor& g, std::span<Tensor* const> pg) {
                               const Tensor g2 = g.reshaped({rows, out_dim});
                               if (pg[0] != nullptr) {
                                   const Tensor gx = kernels::matmul(g2, weight.value());
                                   Tensor& gxa = *pg[0];
                                   for (std::size_t i = 0; i < gx.numel(); ++i) {
                                       gxa[i] += gx[i];
                                   }
                               }
                               if (pg[1] != nullptr) {
                                   *pg[1] += kernels::matmul_at(g2, x.value().reshaped({rows, in}));
                               }
                               if (pg.size() > 2 && pg[2] != nullptr) {
                                   Tensor& gb = *pg[2];
                                   for (std::size_t i = 0; i < rows; ++i) {
                                       for (std::size_t j = 0; j < out_dim; ++j) {
                                           gb[j] += g2[i * out_dim + j];
                                       }
                                   }
                               }
                           });
}

Var transpose(Var a) {
    return a.tape().record(a.value().transposed(), {a}, [](const Tensor& g, std::span<Tensor* const> pg) {
        *pg[0] += g.transposed();
    });
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return a.tape().record(std::move(out), {a}, [a](const Tensor& g, std::span<Tensor* const> pg) {
        *pg[0] += g.reshaped(a.shape());
    });
}

// ---------------------------------------------------------------------------
// Reductions

Var reduce(Var a, ReduceKind kind, std::optional<std::size_t> axis, bool keepdim) {
    const Tensor& x = a.value();
    if (!axis) {
        double acc = kind == ReduceKind::max ? -std::numeric_limits<double>::infinity() : 0.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            if (kind == ReduceKind::max) {
                if (x[i] > acc) {
                    acc = x[i];
                    arg = i;
                }
            } else {
                acc += x[i];
            }
        }
        if (kind == ReduceKind::mean) {
            acc /= static_cast<double>(x.numel());
        }
        Shape shape = keepdim ? Shape(x.rank(), 1) : Shape{};
        const double n = static_cast<double>(x.numel());
        return a.tape().record(Tensor(shape, std::vector<double>{acc}), {a},
                               [kind, arg, n](const Tensor& g, std::span<Tensor* const> pg) {
                                   Tensor& ga = *pg[0];
                                   const double gv = g[0];
                                   if (kind == ReduceKind::max) {
                                       ga[arg] += gv;
                                   } else {
                                       const double s = kind == ReduceKind::mean ? gv / n : gv;
                                       for (std::size_t i = 0; i < ga.numel(); ++i) {
                                           ga[i] += s;
                                       }
                                   }
                               });
    }
    const std::size_t ax = *axis;
    if (ax >= x.rank()) {
        throw DimensionError(fmt::format("reduce axis {} invalid for shape {}", ax, shape_str(x.shape())));
    }
    const Shape& s = x.shape();
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < ax; ++i) {
        outer *= s[i];
    }
    for (std::size_t i = ax + 1; i < s.size(); ++i) {
        inner *= s[i];
    }
    const std::size_t len = s[ax];
    Shape shape = s;
    if (keepdim) {
        shape[ax] = 1;
    } else {
        shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
    }
    Tensor out(shape);
    std::vector<std::size_t> argmax(kind == ReduceKind::max ? outer * inner : 0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double acc = kind == ReduceKind::max ? x[base] : 0.0;
            std::size_t arg = base;
            for (std::size_t l = 0; l < len; ++l) {
                const double v = x[base + l * inner];
                if (kind == ReduceKind::max) {
                    if (v > acc) {
                        acc = v;
                        arg = base + l * inner;
                    }
                } else {
                    acc += v;
                }
            }
            if (kind == ReduceKind::mean) {
                acc /= static_cast<double>(len);
            }
            out[o * inner + in] = acc;
            if (kind == ReduceKind::max) {
                argmax[o * inner + in] = arg;
            }
        }
    }
    return a.tape().record(
        std::move(out), {a},
        [kind, outer, inner, len, argmax = std::move(argmax)](const Tensor& g, std::span<Tensor* const> pg) {
            Tensor& ga = *pg[0];
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const double gv = g[o * inner + in];
                    if (kind == ReduceKind::max) {
                        ga[argmax[o * inner + in]] += gv;
                        continue;
                    }
                    const double s = kind == ReduceKind::mean ? gv / static_cast<double>(len) : gv;
                    const std::size_t base = o * len * inner + in;
                    for (std::size_t l = 0; l < len; ++l) {
                        ga[base + l * inner] += s;
                    }
                }
            }
        });
}

Var sum(Var a, std::optional<std::size_t> axis, bool keepdim) { return reduce(a, ReduceKind::sum, axis, keepdim); }
Var mean(Var a, std::optional<std::size_t> axis, bool keepdim) {
    return reduce(a, ReduceKind::mean, axis, keepdim);
}
Var max(Var a, std::optional<std::size_t> axis, bool keepdim) { return reduce(a, ReduceKind::max, axis, keepdim); }

// ---------------------------------------------------------------------------
// Pointwise

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (!(x[i] > 0.0)) {
            throw NumericError(fmt::format("log of non-positive value {} at position {}", x[i], i));
        }
    }
    return unary(a, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var a) {
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

namespace {
double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var a) {
    return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
    return unary(
        a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return stable_sigmoid(-x); });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw DomainError(fmt::format("leaky_relu slope must lie in (0,1), got {}", slope));
    }
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var minimum(Var a, Var b) {
    const Tensor out = broadcast_map(a.value(), b.value(), [](double p, double q) { return q < p ? q : p; });
    return a.tape().record(out, {a, b}, [a, b](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0] != nullptr) {
            const Tensor mask = broadcast_map(a.value(), b.value(), [](double p, double q) { return q < p ? 0.0 : 1.0; });
            accumulate(pg[0], broadcast_map(g, mask, [](double p, double q) { return p * q; }));
        }
        if (pg[1] != nullptr) {
            const Tensor mask = broadcast_map(a.value(), b.value(), [](double p, double q) { return q < p ? 1.0 : 0.0; });
            accumulate(pg[1], broadcast_map(g, mask, [](double p, double q) { return p * q; }));
        }
    });
}

Var clamp(Var a, double lo, double hi) {
    if (lo > hi) {
        throw DomainError(fmt::format("clamp bounds reversed: [{}, {}]", lo, hi));
    }
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Softmax family

Var softmax(Var a) {
    Tensor y = kernels::softmax_rows(a.value());
    Tape& tape = a.tape();
    const std::size_t out_id = tape.size();
    return tape.record(std::move(y), {a}, [&tape, out_id](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& y = tape.value(out_id);
        const std::size_t c = last_dim(y);
        const std::size_t r = y.numel() / c;
        Tensor& ga = *pg[0];
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                dot += g[i * c + j] * y[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
            }
        }
    });
}

Var log_softmax(Var a) {
    Tensor y = kernels::log_softmax_rows(a.value());
    Tape& tape = a.tape();
    const std::size_t out_id = tape.size();
    return tape.record(std::move(y), {a}, [&tape, out_id](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& y = tape.value(out_id);
        const std::size_t c = last_dim(y);
        const std::size_t r = y.numel() / c;
        Tensor& ga = *pg[0];
        for (std::size_t i = 0; i < r; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                total += g[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += g[i * c + j] - std::exp(y[i * c + j]) * total;
            }
        }
    });
}

Var cross_entropy_logits(Var logits, std::span<const std::size_t> targets) {
    const Tensor& x = logits.value();
    const std::size_t c = last_dim(x);
    const std::size_t r = x.numel() / c;
    if (targets.size() != r) {
        throw DimensionError(fmt::format("cross entropy: {} targets for {} rows", targets.size(), r));
    }
    for (std::size_t t : targets) {
        if (t >= c) {
            throw DomainError(fmt::format("class index {} out of range [0,{})", t, c));
        }
    }
    Tensor logp = kernels::log_softmax_rows(x);
    double loss = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        loss -= logp[i * c + targets[i]];
    }
    loss /= static_cast<double>(r);
    std::vector<std::size_t> tg(targets.begin(), targets.end());
    return logits.tape().record(
        Tensor::scalar(loss), {logits},
        [logp = std::move(logp), tg = std::move(tg), r, c](const Tensor& g, std::span<Tensor* const> pg) {
            Tensor& ga = *pg[0];
            const double s = g[0] / static_cast<double>(r);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const double p = std::exp(logp[i * c + j]);
                    ga[i * c + j] += s * (p - (j == tg[i] ? 1.0 : 0.0));
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Indexing

Var gather_rows(Var table, std::span<const std::size_t> ids) {
    const Tensor& t = table.value();
    require_rank2(t, "gather_rows");
    const std::size_t rows = t.dim(0);
    const std::size_t cols = t.dim(1);
    Tensor out(Shape{ids.size(), cols});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= rows) {
            throw DomainError(fmt::format("row id {} out of range [0,{})", ids[i], rows));
        }
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * cols), cols,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return table.tape().record(std::move(out), {table},
                               [idx = std::move(idx), cols](const Tensor& g, std::span<Tensor* const> pg) {
                                   Tensor& ga = *pg[0];
                                   for (std::size_t i = 0; i < idx.size(); ++i) {
                                       for (std::size_t j = 0; j < cols; ++j) {
                                           ga[idx[i] * cols + j] += g[i * cols + j];
                                       }
                                   }
                               });
}

Var select_cols(Var a, std::span<const std::size_t> indices) {
    const Tensor& x = a.value();
    require_rank2(x, "select_cols");
    const std::size_t r = x.dim(0);
    const std::size_t c = x.dim(1);
    for (std::size_t j : indices) {
        if (j >= c) {
            throw DimensionError(fmt::format("column {} out of range for {}", j, shape_str(x.shape())));
        }
    }
    const std::size_t k = indices.size();
    Tensor out(Shape{r, k});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out[i * k + j] = x[i * c + indices[j]];
        }
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return a.tape().record(std::move(out), {a},
                           [idx = std::move(idx), r, c](const Tensor& g, std::span<Tensor* const> pg) {
                               Tensor& ga = *pg[0];
                               const std::size_t k = idx.size();
                               for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t j = 0; j < k; ++j) {
                                       ga[i * c + idx[j]] += g[i * k + j];
                                   }
                               }
                           });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const Tensor& x = a.value();
    require_rank2(x, "slice_cols");
    if (begin + count > x.dim(1) || count == 0) {
        throw DimensionError(
            fmt::format("column slice [{}, {}) invalid for {}", begin, begin + count, shape_str(x.shape())));
    }
    std::vector<std::size_t> idx(count);
    for (std::size_t j = 0; j < count; ++j) {
        idx[j] = begin + j;
    }
    return select_cols(a, idx);
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols needs at least one input");
    }
    const std::size_t r = parts.front().value().dim(0);
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank2(p.value(), "concat_cols");
        if (p.value().dim(0) != r) {
            throw DimensionError("concat_cols row counts differ");
        }
        total += p.value().dim(1);
    }
    Tensor out(Shape{r, total});
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& x = p.value();
        const std::size_t c = x.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                out[i * total + off + j] = x[i * c + j];
            }
        }
        offsets.push_back(off);
        off += c;
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return parts.front().tape().record(
        std::move(out), parents,
        [parents, offsets = std::move(offsets), r, total](const Tensor& g, std::span<Tensor* const> pg) {
            for (std::size_t p = 0; p < parents.size(); ++p) {
                if (pg[p] == nullptr) {
                    continue;
                }
                Tensor& gp = *pg[p];
                const std::size_t c = gp.dim(1);
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        gp[i * c + j] += g[i * total + offsets[p] + j];
                    }
                }
            }
        });
}

Var merge_cols(Var a, std::span<const std::size_t> ia, Var b, std::span<const std::size_t> ib) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_rank2(x, "merge_cols");
    require_rank2(y, "merge_cols");
    if (x.dim(0) != y.dim(0) || x.dim(1) != ia.size() || y.dim(1) != ib.size()) {
        throw DimensionError(fmt::format("merge_cols shapes {} / {} do not match index sets", shape_str(x.shape()),
                                         shape_str(y.shape())));
    }
    const std::size_t r = x.dim(0);
    const std::size_t c = ia.size() + ib.size();
    std::vector<int> seen(c, 0);
    for (std::size_t j : ia) {
        if (j >= c || seen[j]++) {
            throw DimensionError("merge_cols index sets must partition the output columns");
        }
    }
    for (std::size_t j : ib) {
        if (j >= c || seen[j]++) {
            throw DimensionError("merge_cols index sets must partition the output columns");
        }
    }
    Tensor out(Shape{r, c});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ia.size(); ++j) {
            out[i * c + ia[j]] = x[i * ia.size() + j];
        }
        for (std::size_t j = 0; j < ib.size(); ++j) {
            out[i * c + ib[j]] = y[i * ib.size() + j];
        }
    }
    std::vector<std::size_t> va(ia.begin(), ia.end());
    std::vector<std::size_t> vb(ib.begin(), ib.end());
    return a.tape().record(std::move(out), {a, b},
                           [va = std::move(va), vb = std::move(vb), r, c](const Tensor& g, std::span<Tensor* const> pg) {
                               for (std::size_t i = 0; i < r; ++i) {
                                   if (pg[0] != nullptr) {
                                       for (std::size_t j = 0; j < va.size(); ++j) {
                                           (*pg[0])[i * va.size() + j] += g[i * c + va[j]];
                                       }
                                   }
                                   if (pg[1] != nullptr) {
                                       for (std::size_t j = 0; j < vb.size(); ++j) {
                                           (*pg[1])[i * vb.size() + j] += g[i * c + vb[j]];
                                       }
                                   }
                               }
                           });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

Var straight_through(Tensor forward, Var source) {
    if (forward.shape() != source.shape()) {
        throw DimensionError(fmt::format("straight_through shape {} vs source {}", shape_str(forward.shape()),
                                         shape_str(source.shape())));
    }
    return source.tape().record(std::move(forward), {source},
                                [](const Tensor& g, std::span<Tensor* const> pg) { *pg[0] += g; });
}

}  // namespace deskml
