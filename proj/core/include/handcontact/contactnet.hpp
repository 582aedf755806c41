#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "handcontact/geometry.hpp"
#include "handcontact/graph.hpp"
#include "handcontact/tape.hpp"
#include "handcontact/tensor.hpp"

namespace hc::net {

inline constexpr int kContactBins = 10;
inline constexpr int kPointFeatures = 5;  // [is_hand, gap, nx, ny, nz]
inline constexpr double kGapClamp = 0.1;  // meters; gap feature saturates here

struct NetworkConfig {
    int k = 10;
    int spatial_dilation = 4;
    int semantic_dilation = 1;
    bool combined_graph = false;  // ablation: one graph over [position|feature] rows
    int edge_width = 64;
    int head_width1 = 256;
    int head_width2 = 128;
};

// One scene as the network sees it: hand vertices first, then object points.
struct FeaturedCloud {
    Tensor positions;  // [n,3]
    Tensor features;   // [n,kPointFeatures]
    int hand_points = 0;

    int total_points() const { return positions.rank() ? positions.dim(0) : 0; }
};

// Gap feature is the euclidean distance to the nearest point of the other
// body, clamped at kGapClamp. Normals ride along unchanged.
FeaturedCloud featurize(const geom::PointSet& hand_verts,
                        const std::vector<geom::Vec3>& hand_normals,
                        const geom::PointSet& obj_points,
                        const std::vector<geom::Vec3>& obj_normals);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct NetworkWeights {
    NetworkConfig config;
    NamedTensors params;

    static NetworkWeights init(const NetworkConfig& cfg, std::uint64_t seed);
    const Tensor& find(const std::string& name) const;
    Tensor& find(const std::string& name);
};

// Weight tensors registered on a tape, in params order. Constant binding
// skips gradient bookkeeping for inference-only passes.
struct BoundNetwork {
    std::vector<ad::NodeId> ids;
};
BoundNetwork bind(ad::Tape& tape, const NetworkWeights& weights, bool trainable);

// Both neighbor graphs for one cloud, built once per pass: spatial over
// positions, semantic over the point features.
graph::GraphPair build_graphs(const FeaturedCloud& cloud, const NetworkConfig& cfg);

// Two edge-convolution branches (one per graph) whose pooled codes are
// concatenated with the raw features and pushed through the head.
// Returns logits [n, kContactBins].
ad::NodeId forward(ad::Tape& tape, const BoundNetwork& bound, const NetworkWeights& weights,
                   const FeaturedCloud& cloud, const graph::GraphPair& graphs);

// Contact value -> bin index, clamped to the valid range.
std::vector<int> target_bins(const std::vector<double>& contact);

// Inverse-frequency class weights, normalized to mean 1 over bins that
// occur; absent bins get 0.
std::vector<double> inverse_frequency_weights(const std::vector<int>& bins);

ad::NodeId supervised_loss(ad::Tape& tape, ad::NodeId logits, const std::vector<int>& bins,
                           const std::vector<double>& class_weights);

// Softmax expectation of bin centers per row; values lie in [0.05, 0.95].
std::vector<double> decode_values(const Tensor& logits);

struct ContactEstimate {
    Tensor logits;              // [n, kContactBins]
    std::vector<double> value;  // decoded expectation per point
};

// Inference without gradient tracking.
ContactEstimate estimate(const NetworkWeights& weights, const FeaturedCloud& cloud,
                         const graph::GraphPair& graphs);

}  // namespace hc::net
