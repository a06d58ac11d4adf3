#include "lblm/diff/param.hpp"

#include <numeric>

namespace lblm::diff {

std::pair<int, int> storage_dims(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("parameter shape must have rank >= 1");
    for (int s : shape) {
        if (s <= 0) throw ShapeError("parameter dimensions must be positive");
    }
    if (shape.size() == 1) return {1, shape[0]};
    int cols = std::accumulate(shape.begin() + 1, shape.end(), 1, std::multiplies<>());
    return {shape[0], cols};
}

ParamTensor& ParamStore::add(std::string name, std::vector<int> shape, Mat init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto [r, c] = storage_dims(shape);
    if (init.rows() != r || init.cols() != c) {
        throw ShapeError("initial value for " + name + " does not match its shape");
    }
    index_.emplace(name, params_.size());
    ParamTensor& p = params_.emplace_back();
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value = std::move(init);
    p.grad = Mat::Zero(r, c);
    return p;
}

ParamTensor& ParamStore::add_zeros(std::string name, std::vector<int> shape) {
    auto [r, c] = storage_dims(shape);
    return add(std::move(name), std::move(shape), Mat::Zero(r, c));
}

ParamTensor* ParamStore::find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
}

const ParamTensor* ParamStore::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
}

ParamTensor& ParamStore::get(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter: " + std::string(name));
}

const ParamTensor& ParamStore::get(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter: " + std::string(name));
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamStore::num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.name);
    return out;
}

}  // namespace lblm::diff
