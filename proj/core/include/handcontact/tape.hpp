#pragma once

#include <array>
#include <memory>
#include <vector>

#include "handcontact/error.hpp"
#include "handcontact/geometry.hpp"
#include "handcontact/graph.hpp"
#include "handcontact/tensor.hpp"

namespace hc::ad {

using NodeId = int;

// Scalar twin of Tape::smooth_clamp01; shared so plain (untaped)
// evaluations reproduce tape values bitwise.
double smooth_clamp01_value(double x, double sharpness);

// Reverse-mode tape over dense f64 tensors. Nodes are single-assignment:
// each op appends one node with its forward value, and backward() replays
// the recorded ops in reverse. Values are checked finite after every op.
// Gradients flow only into subgraphs that reach a leaf; constants are
// skipped.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId leaf(Tensor v);
    NodeId constant(Tensor v);

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;  // zeros when untouched by backward
    int node_count() const { return static_cast<int>(nodes_.size()); }

    // Seeds d(loss)/d(loss) = 1 and accumulates into leaf gradients.
    // loss must be a single element; may be called again after more ops.
    void backward(NodeId loss);

    // elementwise
    NodeId add(NodeId a, NodeId b);
    NodeId subtract(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId affine(NodeId a, double mul, double shift);  // mul*x + shift
    NodeId scale(NodeId a, double s) { return affine(a, s, 0.0); }
    NodeId sin(NodeId a);
    NodeId cos(NodeId a);
    NodeId relu(NodeId a);
    // Smooth monotone squash of the unit interval: 0 below, identity-like
    // inside, 1 above, with C^inf joins whose width shrinks as sharpness
    // grows. Midpoint 0.5 is exact.
    NodeId smooth_clamp01(NodeId a, double sharpness);

    // linear algebra / shape
    NodeId matmul(NodeId a, NodeId b);                    // [m,k]x[k,n]
    NodeId linear(NodeId x, NodeId w, NodeId bias);       // rows of x through w, plus bias
    NodeId transpose(NodeId a);                           // rank-2
    NodeId reshape(NodeId a, std::vector<int> shape);     // same element count
    NodeId concat_cols(const std::vector<NodeId>& xs);    // along last axis
    NodeId stack_rows(const std::vector<NodeId>& xs);     // rank-1/2 inputs
    NodeId slice(NodeId a, int begin, int len);           // rank-1
    NodeId scalar_times(NodeId s, Tensor m);              // s[1] * const tensor
    NodeId const_scale(NodeId x, std::vector<double> w);  // per-row (rank-2) or per-element (rank-1) constants

    // neighborhoods
    NodeId gather_neighbors(NodeId x, std::shared_ptr<const graph::NeighborGraph> g);  // [n,c] -> [n,k,c]
    NodeId repeat_neighbors(NodeId x, int k);                                          // [n,c] -> [n,k,c]
    NodeId max_neighbors(NodeId x);  // [n,k,c] -> [n,c], ties to the lowest slot

    // reductions and losses
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId l1_loss(NodeId a, NodeId b);
    NodeId mse_loss(NodeId a, NodeId b);
    // Mean over rows of class_weights[target] * -log softmax(logits)[target].
    NodeId weighted_softmax_ce(NodeId logits, std::vector<int> targets,
                               std::vector<double> class_weights);
    // Soft-target variant: mean over rows of
    // row_weights[r] * -sum_j targets[r,j] * log softmax(logits)[r,j].
    // targets is row-major [rows * bins]; every row must be a distribution.
    NodeId soft_softmax_ce(NodeId logits, std::vector<double> targets,
                           std::vector<double> row_weights);
    // Softmax-weighted expectation of bin centers (b+0.5)/B, one value per row.
    NodeId decode_expected(NodeId logits);

    // geometry coupling; distances are signed, negative inside
    NodeId signed_distance_to_fixed_mesh(NodeId points,
                                         std::shared_ptr<const geom::MeshDistanceIndex> mesh);
    NodeId signed_distance_to_deforming_mesh(
        NodeId mesh_verts, std::shared_ptr<const std::vector<std::array<int, 3>>> faces,
        NodeId points);

private:
    enum class Op : std::uint8_t {
        leaf, constant, add, subtract, mul, affine, sin_, cos_, relu, smooth_clamp,
        matmul, linear, transpose, reshape_, concat_cols, stack_rows, slice, scalar_times,
        const_scale, gather, repeat, max_nb, sum, mean, l1, mse, softmax_ce,
        soft_ce, decode, fixed_mesh_dist, deform_mesh_dist,
    };

    struct Node {
        Op op;
        bool track = false;
        int a = -1, b = -1, c = -1;
        std::vector<int> inputs;  // variadic ops only
        Tensor value;
        double p0 = 0.0, p1 = 0.0;
        int i0 = 0, i1 = 0;
        std::vector<int> iaux;
        std::vector<double> daux;
        std::shared_ptr<const graph::NeighborGraph> graph;
        std::shared_ptr<const geom::MeshDistanceIndex> mesh;
        std::shared_ptr<const std::vector<std::array<int, 3>>> faces;
    };

    const Node& node(NodeId id) const;
    NodeId push(Node n, const char* op_name);
    bool tracked(NodeId id) const { return nodes_[id].track; }
    Tensor& grad_slot(NodeId id);
    void add_grad(NodeId id, const Tensor& g);
    void backward_node(int id);

    std::vector<Node> nodes_;
    mutable std::vector<Tensor> grads_;
};

}  // namespace hc::ad
