#include "handcontact/contactnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "handcontact/error.hpp"
#include "handcontact/rng.hpp"

namespace hc::net {

namespace {

// nearest squared distance from p to any element of pts
double nearest_sq(const geom::Vec3& p, const geom::PointSet& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : pts) best = std::min(best, (p - q).squaredNorm());
    return best;
}

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng& rng) {
    Tensor t(std::move(shape), 0.0);
    for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

FeaturedCloud featurize(const geom::PointSet& hand_verts,
                        const std::vector<geom::Vec3>& hand_normals,
                        const geom::PointSet& obj_points,
                        const std::vector<geom::Vec3>& obj_normals) {
    if (hand_verts.size() != hand_normals.size() || obj_points.size() != obj_normals.size())
        throw DimensionError("featurize: point/normal count mismatch");
    if (hand_verts.empty() || obj_points.empty())
        throw InvalidInputError("featurize: both bodies need points");

    const int nh = static_cast<int>(hand_verts.size());
    const int no = static_cast<int>(obj_points.size());
    FeaturedCloud cloud;
    cloud.hand_points = nh;
    cloud.positions = Tensor({nh + no, 3}, 0.0);
    cloud.features = Tensor({nh + no, kPointFeatures}, 0.0);

    const auto emit = [&](int row, const geom::Vec3& p, const geom::Vec3& nrm, double is_hand,
                          double gap) {
        cloud.positions.at2(row, 0) = p.x();
        cloud.positions.at2(row, 1) = p.y();
        cloud.positions.at2(row, 2) = p.z();
        cloud.features.at2(row, 0) = is_hand;
        cloud.features.at2(row, 1) = std::min(gap, kGapClamp);
        cloud.features.at2(row, 2) = nrm.x();
        cloud.features.at2(row, 3) = nrm.y();
        cloud.features.at2(row, 4) = nrm.z();
    };

    for (int i = 0; i < nh; ++i)
        emit(i, hand_verts[i], hand_normals[i], 1.0, std::sqrt(nearest_sq(hand_verts[i], obj_points)));
    for (int i = 0; i < no; ++i)
        emit(nh + i, obj_points[i], obj_normals[i], 0.0,
             std::sqrt(nearest_sq(obj_points[i], hand_verts)));
    return cloud;
}

NetworkWeights NetworkWeights::init(const NetworkConfig& cfg, std::uint64_t seed) {
    if (cfg.k < 1 || cfg.edge_width < 1 || cfg.head_width1 < 1 || cfg.head_width2 < 1)
        throw InvalidInputError("network init: non-positive width");
    NetworkWeights w;
    w.config = cfg;
    Rng rng(seed ^ 0x6e6574696e6974ULL);

    const int edge_in = 2 * kPointFeatures;
    const int head_in = 2 * cfg.edge_width + kPointFeatures;
    const auto layer = [&](const std::string& prefix, int fan_in, int fan_out) {
        const double bound = std::sqrt(1.0 / fan_in);
        w.params.emplace_back(prefix + ".w", uniform_tensor({fan_in, fan_out}, bound, rng));
        w.params.emplace_back(prefix + ".b", uniform_tensor({fan_out}, bound, rng));
    };
    for (const char* branch : {"spatial", "semantic"}) {
        layer(std::string(branch) + ".l1", edge_in, cfg.edge_width);
        layer(std::string(branch) + ".l2", cfg.edge_width, cfg.edge_width);
    }
    layer("head.l1", head_in, cfg.head_width1);
    layer("head.l2", cfg.head_width1, cfg.head_width2);
    layer("head.l3", cfg.head_width2, kContactBins);
    return w;
}

const Tensor& NetworkWeights::find(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    throw IndexError("network weights: no parameter '" + name + "'");
}

Tensor& NetworkWeights::find(const std::string& name) {
    for (auto& [n, t] : params)
        if (n == name) return t;
    throw IndexError("network weights: no parameter '" + name + "'");
}

BoundNetwork bind(ad::Tape& tape, const NetworkWeights& weights, bool trainable) {
    BoundNetwork b;
    b.ids.reserve(weights.params.size());
    for (const auto& [name, t] : weights.params)
        b.ids.push_back(trainable ? tape.leaf(t) : tape.constant(t));
    return b;
}

graph::GraphPair build_graphs(const FeaturedCloud& cloud, const NetworkConfig& cfg) {
    return graph::build_dual_graph(cloud.positions, cloud.features, cfg.k, cfg.spatial_dilation,
                                   cfg.semantic_dilation, cfg.combined_graph);
}

namespace {

// edge features (h_j - h_i, h_i) through a shared two-layer mlp, max-pooled
ad::NodeId edge_branch(ad::Tape& t, ad::NodeId x, std::shared_ptr<const graph::NeighborGraph> g,
                       ad::NodeId w1, ad::NodeId b1, ad::NodeId w2, ad::NodeId b2) {
    const int k = g->k;
    const ad::NodeId gathered = t.gather_neighbors(x, std::move(g));
    const ad::NodeId center = t.repeat_neighbors(x, k);
    const ad::NodeId edge = t.concat_cols({t.subtract(gathered, center), center});
    ad::NodeId h = t.relu(t.linear(edge, w1, b1));
    h = t.relu(t.linear(h, w2, b2));
    return t.max_neighbors(h);
}

}  // namespace

ad::NodeId forward(ad::Tape& tape, const BoundNetwork& bound, const NetworkWeights& weights,
                   const FeaturedCloud& cloud, const graph::GraphPair& graphs) {
    if (bound.ids.size() != weights.params.size())
        throw DimensionError("forward: binding does not match weights");
    if (cloud.total_points() < 2) throw InvalidInputError("forward: need at least two points");
    const auto id = [&](const char* name) {
        for (std::size_t i = 0; i < weights.params.size(); ++i)
            if (weights.params[i].first == name) return bound.ids[i];
        throw IndexError(std::string("forward: no parameter '") + name + "'");
    };

    const ad::NodeId x = tape.constant(cloud.features);
    const ad::NodeId sp = edge_branch(tape, x, graphs.spatial, id("spatial.l1.w"),
                                      id("spatial.l1.b"), id("spatial.l2.w"), id("spatial.l2.b"));
    const ad::NodeId se = edge_branch(tape, x, graphs.semantic, id("semantic.l1.w"),
                                      id("semantic.l1.b"), id("semantic.l2.w"), id("semantic.l2.b"));
    ad::NodeId h = tape.concat_cols({sp, se, x});
    h = tape.relu(tape.linear(h, id("head.l1.w"), id("head.l1.b")));
    h = tape.relu(tape.linear(h, id("head.l2.w"), id("head.l2.b")));
    return tape.linear(h, id("head.l3.w"), id("head.l3.b"));
}

std::vector<int> target_bins(const std::vector<double>& contact) {
    std::vector<int> bins(contact.size());
    for (std::size_t i = 0; i < contact.size(); ++i) {
        const int b = static_cast<int>(std::floor(contact[i] * kContactBins));
        bins[i] = std::clamp(b, 0, kContactBins - 1);
    }
    return bins;
}

std::vector<double> inverse_frequency_weights(const std::vector<int>& bins) {
    if (bins.empty()) throw InvalidInputError("class weights: empty target list");
    std::vector<long> counts(kContactBins, 0);
    for (int b : bins) {
        if (b < 0 || b >= kContactBins) throw IndexError("class weights: bin out of range");
        ++counts[b];
    }
    std::vector<double> w(kContactBins, 0.0);
    double sum = 0.0;
    int present = 0;
    for (int b = 0; b < kContactBins; ++b)
        if (counts[b] > 0) {
            w[b] = static_cast<double>(bins.size()) / counts[b];
            sum += w[b];
            ++present;
        }
    for (double& v : w) v *= present / sum;
    return w;
}

ad::NodeId supervised_loss(ad::Tape& tape, ad::NodeId logits, const std::vector<int>& bins,
                           const std::vector<double>& class_weights) {
    return tape.weighted_softmax_ce(logits, bins, class_weights);
}

std::vector<double> decode_values(const Tensor& logits) {
    if (logits.rank() != 2 || logits.dim(1) != kContactBins)
        throw DimensionError("decode: logits must be [n," + std::to_string(kContactBins) +
                             "], got " + logits.shape_string());
    const int n = logits.dim(0);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        const double* row = logits.data() + static_cast<std::size_t>(i) * kContactBins;
        const double mx = *std::max_element(row, row + kContactBins);
        double z = 0.0, acc = 0.0;
        for (int b = 0; b < kContactBins; ++b) {
            const double e = std::exp(row[b] - mx);
            z += e;
            acc += e * (b + 0.5) / kContactBins;
        }
        out[i] = acc / z;
    }
    return out;
}

ContactEstimate estimate(const NetworkWeights& weights, const FeaturedCloud& cloud,
                         const graph::GraphPair& graphs) {
    ad::Tape tape;
    const BoundNetwork bound = bind(tape, weights, false);
    const ad::NodeId logits = forward(tape, bound, weights, cloud, graphs);
    ContactEstimate est;
    est.logits = tape.value(logits);
    est.value = decode_values(est.logits);
    return est;
}

}  // namespace hc::net
