#pragma once

#include "lblm/diff/param.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lblm::diff {

struct TrainHyper {
    double lr_base = 1e-3;
    double lr_min = 0.0;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-6;
    int total_steps = 1;

    void validate() const;
};

// First/second moment estimates for one parameter tensor.
struct Moments {
    std::string name;
    Mat m;
    Mat v;
};

struct OptimState {
    std::vector<Moments> moments;
    std::uint64_t step_count = 0;

    // Creates zeroed moments for every parameter in the store.
    static OptimState for_params(const ParamStore& params);
};

// One LAMB update. Bias-corrected Adam direction plus decoupled weight decay,
// scaled per tensor by ||w|| / ||update||. A zero norm on either side gives a
// trust ratio of 1. Gradients are read from each ParamTensor::grad.
// Throws NumericError (and leaves everything untouched) on non-finite gradients.
void lamb_step(ParamStore& params, OptimState& state, const TrainHyper& hyper, double lr);

// lr_min + (lr_base - lr_min)(1 + cos(pi * step / total_steps)) / 2
double cosine_lr(int step, const TrainHyper& hyper);

// Global-norm clipping in place. Returns the norm observed before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace lblm::diff
