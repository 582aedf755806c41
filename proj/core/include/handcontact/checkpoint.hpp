#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "handcontact/tensor.hpp"

namespace hc::io {

// Named f64 tensors plus named u64 scalars. Round trips are bit-exact;
// entry order is preserved.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, std::uint64_t>> meta;

    const Tensor* find_tensor(const std::string& name) const;
    bool has_meta(const std::string& name) const;
    std::uint64_t meta_or(const std::string& name, std::uint64_t fallback) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);  // ParseError on damage

}  // namespace hc::io
