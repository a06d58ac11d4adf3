#include "lblm/diff/optim.hpp"

#include <cmath>

namespace lblm::diff {

void TrainHyper::validate() const {
    if (!(lr_base > 0)) throw ConfigError("lr_base must be positive");
    if (lr_min < 0 || lr_min > lr_base) throw ConfigError("lr_min must lie in [0, lr_base]");
    if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
    if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("betas must lie in [0, 1)");
    if (!(eps_opt > 0)) throw ConfigError("eps_opt must be positive");
    if (total_steps <= 0) throw ConfigError("total_steps must be positive");
}

OptimState OptimState::for_params(const ParamStore& params) {
    OptimState s;
    for (const auto& p : params) {
        s.moments.push_back({p.name, Mat::Zero(p.value.rows(), p.value.cols()),
                             Mat::Zero(p.value.rows(), p.value.cols())});
    }
    return s;
}

void lamb_step(ParamStore& params, OptimState& state, const TrainHyper& hyper, double lr) {
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    if (state.moments.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
    std::size_t i = 0;
    for (const auto& p : params) {
        const Moments& mo = state.moments[i++];
        if (mo.name != p.name || mo.m.rows() != p.value.rows() || mo.m.cols() != p.value.cols()) {
            throw ShapeError("optimizer moments do not match parameter " + p.name);
        }
        if (!p.grad.allFinite()) throw NumericError("non-finite gradient in " + p.name + "; step refused");
    }

    const auto t = static_cast<double>(state.step_count + 1);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    i = 0;
    for (auto& p : params) {
        Moments& mo = state.moments[i++];
        mo.m = hyper.beta1 * mo.m + (1.0 - hyper.beta1) * p.grad;
        mo.v = hyper.beta2 * mo.v + (1.0 - hyper.beta2) * p.grad.cwiseAbs2();
        Mat update = (mo.m / bc1).array() / ((mo.v / bc2).array().sqrt() + hyper.eps_opt);
        if (hyper.weight_decay > 0) update += hyper.weight_decay * p.value;
        const double wn = p.value.norm();
        const double un = update.norm();
        const double trust = (wn > 0 && un > 0) ? wn / un : 1.0;
        p.value -= (lr * trust) * update;
    }
    ++state.step_count;
}

double cosine_lr(int step, const TrainHyper& hyper) {
    if (step < 0 || step > hyper.total_steps) {
        throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(hyper.total_steps) + "]");
    }
    const double frac = static_cast<double>(step) / hyper.total_steps;
    return hyper.lr_min + 0.5 * (hyper.lr_base - hyper.lr_min) * (1.0 + std::cos(kPi * frac));
}

double clip_grad_norm(ParamStore& params, double max_norm) {
    if (!(max_norm > 0)) throw ConfigError("max_norm must be positive");
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.grad.allFinite()) throw NumericError("non-finite gradient in " + p.name);
        sq += p.grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params) p.grad *= s;
    }
    return norm;
}

}  // namespace lblm::diff
