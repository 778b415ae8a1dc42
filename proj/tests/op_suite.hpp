#pragma once

// Randomized finite-difference checks for every registered tape op, shared
// between the unit suite and the acceptance suite. All checks run in double.

#include <functional>
#include <string>
#include <vector>

#include "ltm/gradcheck.hpp"
#include "ltm/rng.hpp"
#include "ltm/tensor.hpp"

namespace ltm::testing {

using ad::Shape;
using ad::Tape;
using ad::Var;
using DVar = ad::Var<double>;
using DTape = ad::Tape<double>;

struct OpCheck {
    std::string name;
    std::vector<Shape> shapes;
    std::function<DVar(DTape&, const std::vector<DVar>&)> build;
    // Sampler keeps inputs away from kinks (relu at 0, max ties, log domain).
    std::function<double(CounterRng&)> sample = [](CounterRng& r) {
        return 4.0 * r.next_double() - 2.0;
    };
};

inline std::vector<OpCheck> registered_op_checks() {
    auto away_from_zero = [](CounterRng& r) {
        double v = 4.0 * r.next_double() - 2.0;
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
        return v;
    };
    auto positive = [](CounterRng& r) { return 0.5 + 2.5 * r.next_double(); };

    std::vector<OpCheck> checks;
    auto add = [&](OpCheck c) { checks.push_back(std::move(c)); };

    add({"matmul", {{3, 4}, {4, 2}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.matmul(x[0], x[1]));
         }});
    add({"transpose", {{3, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             // weight by a fixed pattern so the transpose has to be right
             DVar w = t.matmul(t.transpose(x[0]), x[0]);
             return t.sum_all(w);
         }});
    add({"add", {{2, 5}, {2, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(t.add(x[0], x[1]), x[0]));
         }});
    add({"sub", {{2, 5}, {2, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(t.sub(x[0], x[1]), x[1]));
         }});
    add({"mul", {{2, 5}, {2, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(x[0], x[1]));
         }});
    add({"div", {{2, 5}, {2, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.div(x[0], x[1]));
         },
         positive});
    add({"scale", {{2, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.scale(x[0], 1.7));
         }});
    add({"add_scalar", {{2, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(t.add_scalar(x[0], 0.3), x[0]));
         }});
    add({"relu", {{3, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.relu(x[0]));
         },
         away_from_zero});
    add({"softplus", {{3, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.softplus(x[0]));
         }});
    add({"exp", {{2, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.exp(x[0]));
         }});
    add({"log", {{2, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.log(x[0]));
         },
         positive});
    add({"concat_cols", {{3, 2}, {3, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             DVar c = t.concat_cols(x[0], x[1]);
             return t.sum_all(t.mul(c, c));
         }});
    add({"slice_cols", {{3, 5}}, [](DTape& t, const std::vector<DVar>& x) {
             DVar s = t.slice_cols(x[0], 1, 3);
             return t.sum_all(t.mul(s, s));
         }});
    add({"slice_rows", {{5, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             DVar s = t.slice_rows(x[0], 2, 2);
             return t.sum_all(t.mul(s, s));
         }});
    add({"gather_rows", {{5, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             static const int32_t idx[] = {4, 0, 2, 0};
             DVar g = t.gather_rows(x[0], std::span<const int32_t>(idx, 4));
             return t.sum_all(t.mul(g, g));
         }});
    add({"scatter_add_rows", {{4, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             static const int32_t idx[] = {1, 1, 0, 2};
             DVar s = t.scatter_add_rows(x[0], std::span<const int32_t>(idx, 4), 3);
             return t.sum_all(t.mul(s, s));
         }});
    add({"repeat_rows", {{3, 2}}, [](DTape& t, const std::vector<DVar>& x) {
             DVar r = t.repeat_rows(x[0], 3);
             return t.sum_all(t.mul(r, r));
         }});
    add({"expand_row", {{1, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             DVar e = t.expand_row(x[0], 5);
             return t.sum_all(t.mul(e, e));
         }});
    add({"group_max_rows", {{6, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.group_max_rows(x[0], 3));
         },
         away_from_zero});
    add({"group_sum_rows", {{6, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             DVar s = t.group_sum_rows(x[0], 2);
             return t.sum_all(t.mul(s, s));
         }});
    add({"sum_all", {{3, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(x[0], x[0]));
         }});
    add({"mean_all", {{3, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.mean_all(t.mul(x[0], x[0]));
         }});
    add({"softmax_cols", {{3, 4}, {3, 4}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(t.softmax_cols(x[0]), x[1]));
         }});
    add({"group_softmax_rows", {{6, 3}, {6, 3}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(t.group_softmax_rows(x[0], 3), x[1]));
         }});
    add({"layer_norm_rows", {{3, 6}, {3, 6}}, [](DTape& t, const std::vector<DVar>& x) {
             return t.sum_all(t.mul(t.layer_norm_rows(x[0]), x[1]));
         }});
    return checks;
}

// Max relative FD error for one op over `points` random points.
inline double check_op_gradients(const OpCheck& check, int points, uint64_t seed) {
    double worst = 0;
    for (int p = 0; p < points; ++p) {
        CounterRng rng(seed, static_cast<uint64_t>(p));
        std::vector<std::vector<double>> point;
        for (const auto& s : check.shapes) {
            std::vector<double> v(static_cast<size_t>(ad::numel(s)));
            for (auto& x : v) x = check.sample(rng);
            point.push_back(std::move(v));
        }
        auto report = ad::finite_difference_check(check.build, check.shapes, point, 1e-4);
        worst = std::max(worst, report.max_rel_err);
    }
    return worst;
}

}  // namespace ltm::testing
