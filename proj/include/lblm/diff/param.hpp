#pragma once

#include "lblm/common.hpp"

#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lblm::diff {

// A named learnable tensor. The logical shape may have any rank; storage is a
// row-major matrix whose first dimension is shape[0] (rank-1 tensors are 1×n).
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    Mat value;
    Mat grad;

    std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

// Storage shape for a logical tensor shape.
std::pair<int, int> storage_dims(const std::vector<int>& shape);

// Ordered collection of uniquely named parameters. Copies are deep; references
// handed out by add()/get() stay valid while the store is alive.
class ParamStore {
public:
    ParamTensor& add(std::string name, std::vector<int> shape, Mat init);
    ParamTensor& add_zeros(std::string name, std::vector<int> shape);

    ParamTensor& get(std::string_view name);
    const ParamTensor& get(std::string_view name) const;
    ParamTensor* find(std::string_view name);
    const ParamTensor* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    void zero_grad();
    std::size_t num_scalars() const;
    std::size_t size() const { return params_.size(); }
    std::vector<std::string> names() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::deque<ParamTensor> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace lblm::diff
