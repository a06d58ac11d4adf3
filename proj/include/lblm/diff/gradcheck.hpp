#pragma once

#include "lblm/diff/param.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lblm::diff {

// Evaluates the loss at the current parameter values. When compute_grad is
// true it must also leave d(loss)/d(param) in every ParamTensor::grad
// (grads are zeroed by the caller beforehand).
using LossFn = std::function<double(ParamStore&, bool compute_grad)>;

struct ParamCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t flagged = 0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    std::size_t entries_checked = 0;
    std::size_t entries_flagged = 0;
    double max_rel_error = 0.0;

    bool passed() const { return entries_flagged == 0; }
};

struct GradCheckOptions {
    double eps = 1e-5;      // step is eps * max(1, |w|)
    double rel_tol = 1e-4;
    // Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
    // entries whose true gradient is ~0 from being judged on roundoff alone.
    double abs_floor = 1e-6;
};

// Compares reverse-mode gradients against central differences for every entry
// of every parameter. Throws NumericError if the loss is ever non-finite.
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, const GradCheckOptions& opt = {});

}  // namespace lblm::diff
