#pragma once

// Central finite-difference verification of reverse-mode gradients. Runs in
// double; the builder callback reconstructs the graph at perturbed points, so
// it must be a pure function of the tape and the supplied leaf values.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltm/tensor.hpp"

namespace ltm::ad {

struct GradCheckReport {
    double max_rel_err = 0;
    size_t worst_input = 0;
    int64_t worst_coord = -1;
    double worst_analytic = 0;
    double worst_numeric = 0;
};

// build(tape, leaves) must return a scalar output (compose with sum_all for
// vector-valued ops). Every leaf is bound as a parameter, so analytic
// gradients exist for each coordinate.
template <class Build>
GradCheckReport finite_difference_check(Build&& build, const std::vector<Shape>& shapes,
                                        std::vector<std::vector<double>> point,
                                        double h = 1e-4) {
    if (h <= 0) throw std::runtime_error("finite_difference_check: h must be positive");
    if (shapes.size() != point.size())
        throw std::runtime_error("finite_difference_check: shapes/point size mismatch");

    auto eval = [&](const std::vector<std::vector<double>>& x, bool with_grad,
                    std::vector<std::vector<double>>* grads) -> double {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        leaves.reserve(shapes.size());
        for (size_t i = 0; i < shapes.size(); ++i)
            leaves.push_back(tape.param(shapes[i], x[i].data()));
        Var<double> out = build(tape, leaves);
        if (out.value().size() != 1)
            throw std::runtime_error("finite_difference_check: output must be scalar");
        double y = out.value()[0];
        if (with_grad) {
            tape.backward(out);
            grads->clear();
            for (auto& leaf : leaves) {
                auto g = leaf.grad();
                grads->emplace_back(g.begin(), g.end());
            }
        }
        return y;
    };

    std::vector<std::vector<double>> analytic;
    double y0 = eval(point, true, &analytic);
    if (!std::isfinite(y0))
        throw std::runtime_error("finite_difference_check: non-finite value at base point");

    GradCheckReport report;
    for (size_t i = 0; i < point.size(); ++i) {
        for (size_t j = 0; j < point[i].size(); ++j) {
            double saved = point[i][j];
            point[i][j] = saved + h;
            double yp = eval(point, false, nullptr);
            point[i][j] = saved - h;
            double ym = eval(point, false, nullptr);
            point[i][j] = saved;
            double numeric = (yp - ym) / (2.0 * h);
            double a = analytic[i][j];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                throw std::runtime_error("finite_difference_check: non-finite derivative at input " +
                                         std::to_string(i) + " coord " + std::to_string(j));
            double err = std::abs(a - numeric) / std::max(std::abs(a), 1e-8);
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_input = i;
                report.worst_coord = static_cast<int64_t>(j);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace ltm::ad
