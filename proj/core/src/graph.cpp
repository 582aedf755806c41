#include "handcontact/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "handcontact/parallel.hpp"

namespace hc::graph {

namespace {
std::atomic<std::uint64_t> g_graph_bytes{0};
}

bool NeighborGraph::any_padding() const {
    for (auto f : row_padded)
        if (f) return true;
    return false;
}

std::size_t NeighborGraph::allocation_bytes() const {
    return indices.capacity() * sizeof(std::int32_t) + row_padded.capacity() * sizeof(std::uint8_t);
}

std::uint64_t graph_bytes_allocated() { return g_graph_bytes.load(std::memory_order_relaxed); }

void reset_graph_bytes_allocated() { g_graph_bytes.store(0, std::memory_order_relaxed); }

CandidateLists knn_candidates(const Tensor& points, int want) {
    if (points.rank() != 2) throw DimensionError("points must be rank-2, got " + points.shape_string());
    const int n = points.dim(0);
    const int c = points.dim(1);
    if (n < 2) throw InvalidInputError("need at least 2 points to form neighbors");
    if (want < 1) throw InvalidInputError("candidate count must be positive");

    CandidateLists out;
    out.n = n;
    out.per_row = std::min(want, n - 1);
    out.idx.assign(static_cast<std::size_t>(n) * out.per_row, -1);

    const double* data = points.data();
    const int per_row = out.per_row;
    parallel_for(n, [&](int i) {
        // Scratch per row; never materializes the full distance matrix.
        std::vector<std::pair<double, std::int32_t>> cand;
        cand.reserve(n - 1);
        const double* pi = data + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double* pj = data + static_cast<std::size_t>(j) * c;
            double d2 = 0.0;
            for (int t = 0; t < c; ++t) {
                const double diff = pi[t] - pj[t];
                d2 += diff * diff;
            }
            cand.emplace_back(d2, j);
        }
        auto less = [](const std::pair<double, std::int32_t>& a,
                       const std::pair<double, std::int32_t>& b) {
            return a.first < b.first || (a.first == b.first && a.second < b.second);
        };
        if (per_row < static_cast<int>(cand.size()))
            std::nth_element(cand.begin(), cand.begin() + per_row, cand.end(), less);
        std::sort(cand.begin(), cand.begin() + per_row, less);
        std::int32_t* row = out.idx.data() + static_cast<std::size_t>(i) * per_row;
        for (int s = 0; s < per_row; ++s) row[s] = cand[s].second;
    });
    return out;
}

NeighborGraph dilated_select(const CandidateLists& cands, int k, int dilation, Space space) {
    if (k < 1 || dilation < 1) throw InvalidInputError("k and dilation must be positive");
    NeighborGraph g;
    g.n = cands.n;
    g.k = k;
    g.dilation = dilation;
    g.space = space;
    g.indices.resize(static_cast<std::size_t>(g.n) * k);
    g.row_padded.resize(g.n, 0);
    for (int i = 0; i < g.n; ++i) {
        const std::int32_t* row = cands.idx.data() + static_cast<std::size_t>(i) * cands.per_row;
        std::int32_t* out = g.indices.data() + static_cast<std::size_t>(i) * k;
        for (int s = 0; s < k; ++s) {
            const int rank = s * dilation;
            if (rank < cands.per_row) {
                out[s] = row[rank];
            } else {
                out[s] = row[cands.per_row - 1];
                g.row_padded[i] = 1;
            }
        }
    }
    g.indices.shrink_to_fit();
    g.row_padded.shrink_to_fit();
    g_graph_bytes.fetch_add(g.allocation_bytes(), std::memory_order_relaxed);
    return g;
}

NeighborGraph build_knn(const Tensor& points, int k, int dilation, Space space) {
    return dilated_select(knn_candidates(points, k * dilation), k, dilation, space);
}

GraphPair build_dual_graph(const Tensor& positions, const Tensor& features, int k,
                           int spatial_dilation, int semantic_dilation, bool combined) {
    if (positions.rank() != 2 || positions.dim(1) != 3)
        throw DimensionError("positions must be [n,3], got " + positions.shape_string());
    if (features.rank() != 2 || features.dim(0) != positions.dim(0))
        throw DimensionError("features must pair with positions, got " + features.shape_string());

    GraphPair pair;
    if (combined) {
        const int n = positions.dim(0);
        const int c = 3 + features.dim(1);
        Tensor joint({n, c}, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int t = 0; t < 3; ++t) joint.at2(i, t) = positions.at2(i, t);
            for (int t = 0; t < features.dim(1); ++t)
                joint.at2(i, 3 + t) = features.at2(i, t);
        }
        auto g = std::make_shared<NeighborGraph>(
            build_knn(joint, k, spatial_dilation, Space::combined));
        pair.spatial = g;
        pair.semantic = g;
        return pair;
    }
    pair.spatial = std::make_shared<NeighborGraph>(
        build_knn(positions, k, spatial_dilation, Space::position));
    pair.semantic = std::make_shared<NeighborGraph>(
        build_knn(features, k, semantic_dilation, Space::feature));
    return pair;
}

}  // namespace hc::graph
