#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "handcontact/error.hpp"
#include "handcontact/tensor.hpp"

namespace hc::graph {

enum class Space : std::uint8_t { position, feature, combined };

// K nearest-neighbor edges per point with optional dilation. Storage is
// exactly n*k neighbor slots plus a per-row padding flag; footprint does
// not depend on the dilation factor.
struct NeighborGraph {
    int n = 0;
    int k = 0;
    int dilation = 1;
    Space space = Space::position;
    std::vector<std::int32_t> indices;  // n*k, row-major
    std::vector<std::uint8_t> row_padded;

    std::int32_t at(int i, int slot) const { return indices[static_cast<std::size_t>(i) * k + slot]; }
    bool any_padding() const;
    std::size_t allocation_bytes() const;
};

// Cumulative bytes allocated for neighbor storage since process start (or
// last reset). Lets callers compare graph-reuse strategies.
std::uint64_t graph_bytes_allocated();
void reset_graph_bytes_allocated();

// Ranked candidate lists: for each point, the per_row nearest others by
// squared distance, ties broken toward the lower index. Self is excluded;
// per_row = min(want, n-1).
struct CandidateLists {
    int n = 0;
    int per_row = 0;
    std::vector<std::int32_t> idx;  // n*per_row
};

CandidateLists knn_candidates(const Tensor& points, int want);

// Keep candidate ranks 0, d, 2d, ..., (k-1)*d. Rows whose candidate list
// runs short repeat their last valid neighbor and set the padding flag.
NeighborGraph dilated_select(const CandidateLists& cands, int k, int dilation, Space space);

NeighborGraph build_knn(const Tensor& points, int k, int dilation, Space space);

struct GraphPair {
    std::shared_ptr<const NeighborGraph> spatial;
    std::shared_ptr<const NeighborGraph> semantic;
};

// One spatial graph over positions [n,3] and one semantic graph over
// feature rows [n,c]. With combined=true a single graph over the
// concatenated coordinates serves both roles.
GraphPair build_dual_graph(const Tensor& positions, const Tensor& features, int k,
                           int spatial_dilation, int semantic_dilation, bool combined = false);

}  // namespace hc::graph
