#include "lblm/signal/revin.hpp"

#include <algorithm>
#include <cmath>

namespace lblm::signal {

std::pair<Mat, RevinStats> revin_normalize(const Mat& seg, double eps) {
    if (seg.cols() < 2) throw InputTooShortError("RevIN needs at least 2 samples per channel");
    if (!(eps > 0)) throw ConfigError("RevIN eps must be positive");
    RevinStats st;
    st.eps = eps;
    st.mu.resize(seg.rows());
    st.sigma.resize(seg.rows());
    Mat out(seg.rows(), seg.cols());
    for (Eigen::Index c = 0; c < seg.rows(); ++c) {
        const double mu = seg.row(c).mean();
        const double var = (seg.row(c).array() - mu).square().mean();
        const double sd = std::max(std::sqrt(var), eps);
        st.mu(c) = mu;
        st.sigma(c) = sd;
        out.row(c) = (seg.row(c).array() - mu) / sd;
    }
    return {std::move(out), std::move(st)};
}

Mat revin_denormalize(const Mat& pred, const RevinStats& stats) {
    if (pred.rows() != stats.mu.size()) throw ShapeError("RevIN statistics do not match channel count");
    Mat out(pred.rows(), pred.cols());
    for (Eigen::Index c = 0; c < pred.rows(); ++c) out.row(c) = pred.row(c).array() * stats.sigma(c) + stats.mu(c);
    return out;
}

}  // namespace lblm::signal
