#include "deskml/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace deskml {

namespace {

constexpr double kRelFloor = 1e-2;

void check_step(double h) {
    if (!(h > 0.0)) {
        throw DomainError(fmt::format("finite-difference step must be positive, got {}", h));
    }
}

double finite(double v, const char* where) {
    if (!std::isfinite(v)) {
        throw NumericError(fmt::format("function is non-finite at {} probe", where));
    }
    return v;
}

void add_diff(GradCheckReport& report, std::size_t input, std::size_t index, double analytic, double numeric) {
    ParamDiff d;
    d.input = input;
    d.index = index;
    d.analytic = analytic;
    d.numeric = numeric;
    d.abs_diff = std::abs(analytic - numeric);
    d.rel_diff = d.abs_diff / std::max(std::abs(analytic), kRelFloor);
    report.max_abs_diff = std::max(report.max_abs_diff, d.abs_diff);
    report.max_rel_diff = std::max(report.max_rel_diff, d.rel_diff);
    report.diffs.push_back(d);
}

double evaluate(const ScalarFn& f, const std::vector<Tensor>& point) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(point.size());
    for (const Tensor& t : point) {
        vars.push_back(tape.leaf(t));
    }
    return f(tape, vars).item();
}

}  // namespace

GradCheckReport grad_check_surrogate(const ScalarFn& f, const ScalarFn& probe, const std::vector<Tensor>& point,
                                     double h) {
    check_step(h);
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : point) {
        vars.push_back(tape.leaf(t));
    }
    Var out = f(tape, vars);
    finite(out.item(), "base");
    tape.backward(out);

    GradCheckReport report;
    std::vector<Tensor> probe_point = point;
    for (std::size_t in = 0; in < point.size(); ++in) {
        const Tensor& analytic = tape.grad(vars[in]);
        for (std::size_t i = 0; i < point[in].numel(); ++i) {
            const double x0 = point[in][i];
            probe_point[in][i] = x0 + h;
            const double fp = finite(evaluate(probe, probe_point), "+h");
            probe_point[in][i] = x0 - h;
            const double fm = finite(evaluate(probe, probe_point), "-h");
            probe_point[in][i] = x0;
            add_diff(report, in, i, analytic[i], (fp - fm) / (2.0 * h));
        }
    }
    return report;
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& point, double h) {
    return grad_check_surrogate(f, f, point, h);
}

GradCheckReport grad_check_params(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params, double h) {
    check_step(h);
    std::vector<Tensor> analytic;
    {
        Tape tape;
        Var out = f(tape);
        finite(out.item(), "base");
        tape.backward(out);
        for (Tensor* p : params) {
            auto g = tape.param_grad(*p);
            analytic.push_back(g ? *g : Tensor(p->shape(), 0.0));
        }
    }
    auto eval = [&f]() {
        Tape tape;
        return f(tape).item();
    };
    GradCheckReport report;
    for (std::size_t in = 0; in < params.size(); ++in) {
        Tensor& p = *params[in];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double x0 = p[i];
            p[i] = x0 + h;
            const double fp = finite(eval(), "+h");
            p[i] = x0 - h;
            const double fm = finite(eval(), "-h");
            p[i] = x0;
            add_diff(report, in, i, analytic[in][i], (fp - fm) / (2.0 * h));
        }
    }
    return report;
}

}  // namespace deskml
