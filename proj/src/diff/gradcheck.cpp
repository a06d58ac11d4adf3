#include "lblm/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lblm::diff {

namespace {

double eval_checked(const LossFn& f, ParamStore& params) {
    const double v = f(params, false);
    if (!std::isfinite(v)) throw NumericError("grad_check: loss function returned a non-finite value");
    return v;
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, const GradCheckOptions& opt) {
    if (!(opt.eps > 0) || !(opt.rel_tol > 0)) throw ConfigError("grad_check: eps and rel_tol must be positive");
    params.zero_grad();
    const double base = loss_fn(params, true);
    if (!std::isfinite(base)) throw NumericError("grad_check: loss function returned a non-finite value");

    std::vector<Mat> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad);

    GradCheckReport report;
    std::size_t pi = 0;
    for (auto& p : params) {
        ParamCheck pc;
        pc.name = p.name;
        const Mat& a = analytic[pi++];
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            double& w = p.value.data()[i];
            const double w0 = w;
            const double h = opt.eps * std::max(1.0, std::abs(w0));
            w = w0 + h;
            const double fp = eval_checked(loss_fn, params);
            w = w0 - h;
            const double fm = eval_checked(loss_fn, params);
            w = w0;
            const double num = (fp - fm) / (2.0 * h);
            const double an = a.data()[i];
            const double denom = std::max({std::abs(an), std::abs(num), opt.abs_floor});
            const double rel = std::abs(an - num) / denom;
            if (rel > pc.max_rel_error || i == 0) {
                pc.max_rel_error = std::max(pc.max_rel_error, rel);
                if (rel >= pc.max_rel_error) {
                    pc.worst_index = static_cast<std::size_t>(i);
                    pc.analytic = an;
                    pc.numeric = num;
                }
            }
            if (rel > opt.rel_tol) ++pc.flagged;
            ++report.entries_checked;
        }
        report.entries_flagged += pc.flagged;
        report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
        report.params.push_back(std::move(pc));
    }
    params.zero_grad();
    return report;
}

}  // namespace lblm::diff
