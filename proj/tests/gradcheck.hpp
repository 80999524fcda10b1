#pragma once

// Finite-difference gradient oracle used by the unit and acceptance suites.
// Central differences in double precision against the tape's analytic
// gradients; independent of the backward implementations it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "unblur/autograd.hpp"
#include "unblur/tensor.hpp"

namespace unblur::testutil {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

// forward: builds a fresh graph from the current parameter values and
// returns the scalar loss node id. params: every tensor to check.
inline GradCheckResult gradcheck(const std::function<void(Tape<double>&, int&)>& run_forward_backward,
                                 std::vector<Param<double>*> params,
                                 double step = 1e-4, std::size_t max_entries_per_param = 24) {
    GradCheckResult res;

    // analytic gradients
    Tape<double> tape(true);
    int loss_id = -1;
    run_forward_backward(tape, loss_id);
    tape.backward(loss_id);

    auto eval_loss = [&]() {
        Tape<double> t(false);
        int l = -1;
        run_forward_backward(t, l);
        return t.val(l)[0];
    };

    for (Param<double>* p : params) {
        Tensor<double> g = tape.param_grad(*p);
        std::size_t n = p->value.numel();
        std::size_t stride = n <= max_entries_per_param ? 1 : n / max_entries_per_param;
        for (std::size_t i = 0; i < n; i += stride) {
            double orig = p->value[i];
            p->value[i] = orig + step;
            double lp = eval_loss();
            p->value[i] = orig - step;
            double lm = eval_loss();
            p->value[i] = orig;
            double fd = (lp - lm) / (2.0 * step);
            double an = g.empty() ? 0.0 : g[i];
            double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            double rel = std::fabs(fd - an) / denom;
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = p->name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) + " an=" + std::to_string(an);
            }
        }
    }
    return res;
}

}  // namespace unblur::testutil
