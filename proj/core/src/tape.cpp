#include "handcontact/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <string>

namespace hc::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

double softplus_over(double t, double k) {
    // softplus_k(t) = log(1 + exp(k t)) / k, stable in both tails
    return t >= 0.0 ? t + std::log1p(std::exp(-k * t)) / k : std::log1p(std::exp(k * t)) / k;
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

std::string shape_pair(const Tensor& a, const Tensor& b) {
    return a.shape_string() + " vs " + b.shape_string();
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw IndexError("node id " + std::to_string(id) + " out of range");
    return nodes_[id];
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

const Tensor& Tape::grad(NodeId id) const {
    node(id);  // bounds check
    if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
    if (grads_[id].empty()) grads_[id] = Tensor(nodes_[id].value.shape(), 0.0);
    return grads_[id];
}

NodeId Tape::push(Node n, const char* op_name) {
    if (!n.value.all_finite())
        throw NumericError(std::string(op_name) + " produced a non-finite value");
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

NodeId Tape::leaf(Tensor v) {
    Node n;
    n.op = Op::leaf;
    n.track = true;
    n.value = std::move(v);
    return push(std::move(n), "leaf");
}

NodeId Tape::constant(Tensor v) {
    Node n;
    n.op = Op::constant;
    n.track = false;
    n.value = std::move(v);
    return push(std::move(n), "constant");
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("add: " + shape_pair(va, vb));
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] + vb[i];
    Node n;
    n.op = Op::add;
    n.a = a;
    n.b = b;
    n.track = tracked(a) || tracked(b);
    n.value = std::move(out);
    return push(std::move(n), "add");
}

NodeId Tape::subtract(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("subtract: " + shape_pair(va, vb));
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] - vb[i];
    Node n;
    n.op = Op::subtract;
    n.a = a;
    n.b = b;
    n.track = tracked(a) || tracked(b);
    n.value = std::move(out);
    return push(std::move(n), "subtract");
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("mul: " + shape_pair(va, vb));
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] * vb[i];
    Node n;
    n.op = Op::mul;
    n.a = a;
    n.b = b;
    n.track = tracked(a) || tracked(b);
    n.value = std::move(out);
    return push(std::move(n), "mul");
}

NodeId Tape::affine(NodeId a, double mul, double shift) {
    const Tensor& va = value(a);
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = mul * va[i] + shift;
    Node n;
    n.op = Op::affine;
    n.a = a;
    n.p0 = mul;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "affine");
}

NodeId Tape::sin(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::sin(va[i]);
    Node n;
    n.op = Op::sin_;
    n.a = a;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "sin");
}

NodeId Tape::cos(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::cos(va[i]);
    Node n;
    n.op = Op::cos_;
    n.a = a;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "cos");
}

NodeId Tape::relu(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
    Node n;
    n.op = Op::relu;
    n.a = a;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "relu");
}

double smooth_clamp01_value(double x, double sharpness) {
    return softplus_over(x, sharpness) - softplus_over(x - 1.0, sharpness);
}

NodeId Tape::smooth_clamp01(NodeId a, double sharpness) {
    if (!(sharpness > 0.0)) throw InvalidInputError("sharpness must be positive");
    const Tensor& va = value(a);
    Tensor out(va.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = smooth_clamp01_value(va[i], sharpness);
    Node n;
    n.op = Op::smooth_clamp;
    n.a = a;
    n.p0 = sharpness;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "smooth_clamp01");
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
        throw DimensionError("matmul: " + shape_pair(va, vb));
    Tensor out({va.dim(0), vb.dim(1)}, 0.0);
    MMap(out.data(), out.dim(0), out.dim(1)) = CMap(va.data(), va.dim(0), va.dim(1)) *
                                               CMap(vb.data(), vb.dim(0), vb.dim(1));
    Node n;
    n.op = Op::matmul;
    n.a = a;
    n.b = b;
    n.track = tracked(a) || tracked(b);
    n.value = std::move(out);
    return push(std::move(n), "matmul");
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId bias) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(bias);
    if (vw.rank() != 2) throw DimensionError("linear: weight must be rank-2, got " + vw.shape_string());
    if (vb.rank() != 1 || vb.dim(0) != vw.dim(1))
        throw DimensionError("linear: bias " + vb.shape_string() + " does not match weight " +
                             vw.shape_string());
    const int ci = vw.dim(0);
    const int co = vw.dim(1);
    int lead = 0;
    std::vector<int> out_shape;
    if (vx.rank() == 2) {
        if (vx.dim(1) != ci) throw DimensionError("linear: " + shape_pair(vx, vw));
        lead = vx.dim(0);
        out_shape = {lead, co};
    } else if (vx.rank() == 3) {
        if (vx.dim(2) != ci) throw DimensionError("linear: " + shape_pair(vx, vw));
        lead = vx.dim(0) * vx.dim(1);
        out_shape = {vx.dim(0), vx.dim(1), co};
    } else {
        throw DimensionError("linear: input must be rank-2 or rank-3, got " + vx.shape_string());
    }
    Tensor out(out_shape, 0.0);
    MMap y(out.data(), lead, co);
    y = CMap(vx.data(), lead, ci) * CMap(vw.data(), ci, co);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(vb.data(), co);
    Node n;
    n.op = Op::linear;
    n.a = x;
    n.b = w;
    n.c = bias;
    n.track = tracked(x) || tracked(w) || tracked(bias);
    n.value = std::move(out);
    return push(std::move(n), "linear");
}

NodeId Tape::transpose(NodeId a) {
    const Tensor& va = value(a);
    if (va.rank() != 2) throw DimensionError("transpose: rank-2 only, got " + va.shape_string());
    Tensor out({va.dim(1), va.dim(0)}, 0.0);
    MMap(out.data(), out.dim(0), out.dim(1)) =
        CMap(va.data(), va.dim(0), va.dim(1)).transpose();
    Node n;
    n.op = Op::transpose;
    n.a = a;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "transpose");
}

NodeId Tape::reshape(NodeId a, std::vector<int> shape) {
    const Tensor& va = value(a);
    Tensor out(shape, 0.0);
    if (out.numel() != va.numel())
        throw DimensionError("reshape: element count mismatch, " + va.shape_string() +
                             " -> " + out.shape_string());
    std::copy(va.data(), va.data() + va.numel(), out.data());
    Node n;
    n.op = Op::reshape_;
    n.a = a;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "reshape");
}

NodeId Tape::concat_cols(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw InvalidInputError("concat_cols: no inputs");
    const Tensor& first = value(xs[0]);
    const int rank = first.rank();
    if (rank != 2 && rank != 3)
        throw DimensionError("concat_cols: rank-2/3 only, got " + first.shape_string());
    int total_c = 0;
    bool track = false;
    for (NodeId id : xs) {
        const Tensor& v = value(id);
        if (v.rank() != rank || v.dim(0) != first.dim(0) ||
            (rank == 3 && v.dim(1) != first.dim(1)))
            throw DimensionError("concat_cols: " + shape_pair(first, v));
        total_c += v.dim(rank - 1);
        track = track || tracked(id);
    }
    const int lead = rank == 2 ? first.dim(0) : first.dim(0) * first.dim(1);
    std::vector<int> shape = rank == 2 ? std::vector<int>{first.dim(0), total_c}
                                       : std::vector<int>{first.dim(0), first.dim(1), total_c};
    Tensor out(shape, 0.0);
    int col = 0;
    for (NodeId id : xs) {
        const Tensor& v = value(id);
        const int c = v.dim(rank - 1);
        for (int r = 0; r < lead; ++r)
            std::memcpy(out.data() + static_cast<std::size_t>(r) * total_c + col,
                        v.data() + static_cast<std::size_t>(r) * c, sizeof(double) * c);
        col += c;
    }
    Node n;
    n.op = Op::concat_cols;
    n.inputs = xs;
    n.track = track;
    n.value = std::move(out);
    return push(std::move(n), "concat_cols");
}

NodeId Tape::stack_rows(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw InvalidInputError("stack_rows: no inputs");
    int cols = -1, rows = 0;
    bool track = false;
    for (NodeId id : xs) {
        const Tensor& v = value(id);
        const int c = v.rank() == 1 ? v.dim(0) : (v.rank() == 2 ? v.dim(1) : -1);
        if (c < 0) throw DimensionError("stack_rows: rank-1/2 only, got " + v.shape_string());
        if (cols < 0) cols = c;
        if (c != cols) throw DimensionError("stack_rows: column mismatch");
        rows += v.rank() == 1 ? 1 : v.dim(0);
        track = track || tracked(id);
    }
    Tensor out({rows, cols}, 0.0);
    int r = 0;
    for (NodeId id : xs) {
        const Tensor& v = value(id);
        const int nr = v.rank() == 1 ? 1 : v.dim(0);
        std::memcpy(out.data() + static_cast<std::size_t>(r) * cols, v.data(),
                    sizeof(double) * nr * cols);
        r += nr;
    }
    Node n;
    n.op = Op::stack_rows;
    n.inputs = xs;
    n.track = track;
    n.value = std::move(out);
    return push(std::move(n), "stack_rows");
}

NodeId Tape::slice(NodeId a, int begin, int len) {
    const Tensor& va = value(a);
    if (va.rank() != 1) throw DimensionError("slice: rank-1 only, got " + va.shape_string());
    if (begin < 0 || len < 1 || begin + len > va.dim(0))
        throw IndexError("slice [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                         ") outside length " + std::to_string(va.dim(0)));
    Tensor out({len}, 0.0);
    for (int i = 0; i < len; ++i) out[i] = va[begin + i];
    Node n;
    n.op = Op::slice;
    n.a = a;
    n.i0 = begin;
    n.i1 = len;
    n.track = tracked(a);
    n.value = std::move(out);
    return push(std::move(n), "slice");
}

NodeId Tape::scalar_times(NodeId s, Tensor m) {
    const Tensor& vs = value(s);
    if (vs.numel() != 1) throw DimensionError("scalar_times: scalar input must have one element");
    Tensor out(m.shape(), 0.0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = vs[0] * m[i];
    Node n;
    n.op = Op::scalar_times;
    n.a = s;
    n.daux.assign(m.data(), m.data() + m.numel());
    n.track = tracked(s);
    n.value = std::move(out);
    return push(std::move(n), "scalar_times");
}

NodeId Tape::const_scale(NodeId x, std::vector<double> w) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape(), 0.0);
    if (vx.rank() == 1) {
        if (static_cast<int>(w.size()) != vx.dim(0))
            throw DimensionError("const_scale: weight length mismatch");
        for (int i = 0; i < vx.dim(0); ++i) out[i] = w[i] * vx[i];
    } else if (vx.rank() == 2) {
        if (static_cast<int>(w.size()) != vx.dim(0))
            throw DimensionError("const_scale: one weight per row required");
        for (int r = 0; r < vx.dim(0); ++r)
            for (int c = 0; c < vx.dim(1); ++c) out.at2(r, c) = w[r] * vx.at2(r, c);
    } else {
        throw DimensionError("const_scale: rank-1/2 only, got " + vx.shape_string());
    }
    Node n;
    n.op = Op::const_scale;
    n.a = x;
    n.daux = std::move(w);
    n.track = tracked(x);
    n.value = std::move(out);
    return push(std::move(n), "const_scale");
}

NodeId Tape::gather_neighbors(NodeId x, std::shared_ptr<const graph::NeighborGraph> g) {
    if (!g) throw InvalidInputError("gather_neighbors: null graph");
    const Tensor& vx = value(x);
    if (vx.rank() != 2) throw DimensionError("gather_neighbors: rank-2 only, got " + vx.shape_string());
    if (vx.dim(0) != g->n)
        throw DimensionError("gather_neighbors: graph covers " + std::to_string(g->n) +
                             " points, features have " + std::to_string(vx.dim(0)));
    const int n = g->n, k = g->k, c = vx.dim(1);
    Tensor out({n, k, c}, 0.0);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < k; ++s)
            std::memcpy(out.data() + (static_cast<std::size_t>(i) * k + s) * c,
                        vx.data() + static_cast<std::size_t>(g->at(i, s)) * c,
                        sizeof(double) * c);
    Node n_;
    n_.op = Op::gather;
    n_.a = x;
    n_.graph = std::move(g);
    n_.track = tracked(x);
    n_.value = std::move(out);
    return push(std::move(n_), "gather_neighbors");
}

NodeId Tape::repeat_neighbors(NodeId x, int k) {
    const Tensor& vx = value(x);
    if (vx.rank() != 2) throw DimensionError("repeat_neighbors: rank-2 only, got " + vx.shape_string());
    if (k < 1) throw InvalidInputError("repeat_neighbors: k must be positive");
    const int n = vx.dim(0), c = vx.dim(1);
    Tensor out({n, k, c}, 0.0);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < k; ++s)
            std::memcpy(out.data() + (static_cast<std::size_t>(i) * k + s) * c,
                        vx.data() + static_cast<std::size_t>(i) * c, sizeof(double) * c);
    Node n_;
    n_.op = Op::repeat;
    n_.a = x;
    n_.i0 = k;
    n_.track = tracked(x);
    n_.value = std::move(out);
    return push(std::move(n_), "repeat_neighbors");
}

NodeId Tape::max_neighbors(NodeId x) {
    const Tensor& vx = value(x);
    if (vx.rank() != 3) throw DimensionError("max_neighbors: rank-3 only, got " + vx.shape_string());
    const int n = vx.dim(0), k = vx.dim(1), c = vx.dim(2);
    Tensor out({n, c}, 0.0);
    std::vector<int> arg(static_cast<std::size_t>(n) * c, 0);
    for (int i = 0; i < n; ++i)
        for (int cc = 0; cc < c; ++cc) {
            double best = vx.at3(i, 0, cc);
            int best_s = 0;
            for (int s = 1; s < k; ++s) {
                const double v = vx.at3(i, s, cc);
                if (v > best) {  // ties keep the lowest slot
                    best = v;
                    best_s = s;
                }
            }
            out.at2(i, cc) = best;
            arg[static_cast<std::size_t>(i) * c + cc] = best_s;
        }
    Node n_;
    n_.op = Op::max_nb;
    n_.a = x;
    n_.iaux = std::move(arg);
    n_.track = tracked(x);
    n_.value = std::move(out);
    return push(std::move(n_), "max_neighbors");
}

NodeId Tape::sum(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    Node n;
    n.op = Op::sum;
    n.a = a;
    n.track = tracked(a);
    n.value = Tensor::scalar(s);
    return push(std::move(n), "sum");
}

NodeId Tape::mean(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    Node n;
    n.op = Op::mean;
    n.a = a;
    n.track = tracked(a);
    n.value = Tensor::scalar(s / static_cast<double>(va.numel()));
    return push(std::move(n), "mean");
}

NodeId Tape::l1_loss(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("l1_loss: " + shape_pair(va, vb));
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += std::abs(va[i] - vb[i]);
    Node n;
    n.op = Op::l1;
    n.a = a;
    n.b = b;
    n.track = tracked(a) || tracked(b);
    n.value = Tensor::scalar(s / static_cast<double>(va.numel()));
    return push(std::move(n), "l1_loss");
}

NodeId Tape::mse_loss(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("mse_loss: " + shape_pair(va, vb));
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) {
        const double d = va[i] - vb[i];
        s += d * d;
    }
    Node n;
    n.op = Op::mse;
    n.a = a;
    n.b = b;
    n.track = tracked(a) || tracked(b);
    n.value = Tensor::scalar(s / static_cast<double>(va.numel()));
    return push(std::move(n), "mse_loss");
}

NodeId Tape::weighted_softmax_ce(NodeId logits, std::vector<int> targets,
                                 std::vector<double> class_weights) {
    const Tensor& vl = value(logits);
    if (vl.rank() != 2) throw DimensionError("weighted_softmax_ce: logits must be rank-2");
    const int n = vl.dim(0), nb = vl.dim(1);
    if (static_cast<int>(targets.size()) != n)
        throw DimensionError("weighted_softmax_ce: one target per row required");
    if (static_cast<int>(class_weights.size()) != nb)
        throw DimensionError("weighted_softmax_ce: one weight per class required");
    for (int t : targets)
        if (t < 0 || t >= nb) throw IndexError("target class " + std::to_string(t) + " outside bins");

    std::vector<double> probs(static_cast<std::size_t>(n) * nb);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = vl.data() + static_cast<std::size_t>(i) * nb;
        double mx = row[0];
        for (int j = 1; j < nb; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < nb; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z);
        for (int j = 0; j < nb; ++j)
            probs[static_cast<std::size_t>(i) * nb + j] = std::exp(row[j] - mx) / z;
        loss += class_weights[targets[i]] * (-(row[targets[i]] - mx - logz));
    }
    Node n_;
    n_.op = Op::softmax_ce;
    n_.a = logits;
    n_.iaux = std::move(targets);
    n_.daux = std::move(probs);
    n_.daux.insert(n_.daux.end(), class_weights.begin(), class_weights.end());
    n_.track = tracked(logits);
    n_.value = Tensor::scalar(loss / n);
    return push(std::move(n_), "weighted_softmax_ce");
}

NodeId Tape::soft_softmax_ce(NodeId logits, std::vector<double> targets,
                             std::vector<double> row_weights) {
    const Tensor& vl = value(logits);
    if (vl.rank() != 2) throw DimensionError("soft_softmax_ce: logits must be rank-2");
    const int n = vl.dim(0), nb = vl.dim(1);
    if (static_cast<int>(targets.size()) != n * nb)
        throw DimensionError("soft_softmax_ce: targets must match logits elementwise");
    if (static_cast<int>(row_weights.size()) != n)
        throw DimensionError("soft_softmax_ce: one weight per row required");
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < nb; ++j) {
            const double q = targets[static_cast<std::size_t>(i) * nb + j];
            if (q < 0.0) throw InvalidInputError("soft_softmax_ce: negative target mass");
            s += q;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw InvalidInputError("soft_softmax_ce: target row " + std::to_string(i) +
                                    " sums to " + std::to_string(s));
    }

    std::vector<double> probs(static_cast<std::size_t>(n) * nb);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = vl.data() + static_cast<std::size_t>(i) * nb;
        double mx = row[0];
        for (int j = 1; j < nb; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < nb; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z);
        double row_loss = 0.0;
        for (int j = 0; j < nb; ++j) {
            probs[static_cast<std::size_t>(i) * nb + j] = std::exp(row[j] - mx) / z;
            row_loss -= targets[static_cast<std::size_t>(i) * nb + j] * (row[j] - mx - logz);
        }
        loss += row_weights[i] * row_loss;
    }
    Node n_;
    n_.op = Op::soft_ce;
    n_.a = logits;
    n_.daux = std::move(probs);
    n_.daux.insert(n_.daux.end(), targets.begin(), targets.end());
    n_.daux.insert(n_.daux.end(), row_weights.begin(), row_weights.end());
    n_.track = tracked(logits);
    n_.value = Tensor::scalar(loss / n);
    return push(std::move(n_), "soft_softmax_ce");
}

NodeId Tape::decode_expected(NodeId logits) {
    const Tensor& vl = value(logits);
    if (vl.rank() != 2) throw DimensionError("decode_expected: logits must be rank-2");
    const int n = vl.dim(0), nb = vl.dim(1);
    std::vector<double> probs(static_cast<std::size_t>(n) * nb);
    Tensor out({n}, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = vl.data() + static_cast<std::size_t>(i) * nb;
        double mx = row[0];
        for (int j = 1; j < nb; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < nb; ++j) z += std::exp(row[j] - mx);
        double e = 0.0;
        for (int j = 0; j < nb; ++j) {
            const double p = std::exp(row[j] - mx) / z;
            probs[static_cast<std::size_t>(i) * nb + j] = p;
            e += p * ((j + 0.5) / nb);
        }
        out[i] = e;
    }
    Node n_;
    n_.op = Op::decode;
    n_.a = logits;
    n_.daux = std::move(probs);
    n_.track = tracked(logits);
    n_.value = std::move(out);
    return push(std::move(n_), "decode_expected");
}

NodeId Tape::signed_distance_to_fixed_mesh(NodeId points,
                                           std::shared_ptr<const geom::MeshDistanceIndex> mesh) {
    if (!mesh) throw InvalidInputError("signed_distance_to_fixed_mesh: null mesh");
    const Tensor& vp = value(points);
    if (vp.rank() != 2 || vp.dim(1) != 3)
        throw DimensionError("points must be [m,3], got " + vp.shape_string());
    const int m = vp.dim(0);
    Tensor out({m}, 0.0);
    std::vector<double> sdir(static_cast<std::size_t>(m) * 3, 0.0);
    for (int i = 0; i < m; ++i) {
        const geom::Vec3 p(vp.at2(i, 0), vp.at2(i, 1), vp.at2(i, 2));
        const auto hit = mesh->closest(p);
        const double sign = mesh->contains(p) ? -1.0 : 1.0;
        out[i] = sign * hit.dist;
        if (hit.dist > 1e-12) {
            const geom::Vec3 dir = (p - hit.point) / hit.dist;
            for (int t = 0; t < 3; ++t) sdir[static_cast<std::size_t>(i) * 3 + t] = sign * dir[t];
        }
    }
    Node n;
    n.op = Op::fixed_mesh_dist;
    n.a = points;
    n.mesh = std::move(mesh);
    n.daux = std::move(sdir);
    n.track = tracked(points);
    n.value = std::move(out);
    return push(std::move(n), "signed_distance_to_fixed_mesh");
}

NodeId Tape::signed_distance_to_deforming_mesh(
    NodeId mesh_verts, std::shared_ptr<const std::vector<std::array<int, 3>>> faces,
    NodeId points) {
    if (!faces || faces->empty()) throw InvalidInputError("deforming mesh needs faces");
    const Tensor& vv = value(mesh_verts);
    const Tensor& vp = value(points);
    if (vv.rank() != 2 || vv.dim(1) != 3)
        throw DimensionError("mesh vertices must be [v,3], got " + vv.shape_string());
    if (vp.rank() != 2 || vp.dim(1) != 3)
        throw DimensionError("points must be [m,3], got " + vp.shape_string());

    std::vector<geom::Vec3> verts(vv.dim(0));
    for (int i = 0; i < vv.dim(0); ++i)
        verts[i] = geom::Vec3(vv.at2(i, 0), vv.at2(i, 1), vv.at2(i, 2));
    geom::MeshDistanceIndex index(verts, *faces);

    const int m = vp.dim(0);
    Tensor out({m}, 0.0);
    std::vector<int> face_ids(m, -1);
    std::vector<double> aux(static_cast<std::size_t>(m) * 6, 0.0);  // bary(3), sdir(3)
    for (int i = 0; i < m; ++i) {
        const geom::Vec3 p(vp.at2(i, 0), vp.at2(i, 1), vp.at2(i, 2));
        const auto hit = index.closest(p);
        const double sign = index.contains(p) ? -1.0 : 1.0;
        out[i] = sign * hit.dist;
        face_ids[i] = hit.face;
        double* row = aux.data() + static_cast<std::size_t>(i) * 6;
        for (int t = 0; t < 3; ++t) row[t] = hit.bary[t];
        if (hit.dist > 1e-12) {
            const geom::Vec3 dir = (p - hit.point) / hit.dist;
            for (int t = 0; t < 3; ++t) row[3 + t] = sign * dir[t];
        }
    }
    Node n;
    n.op = Op::deform_mesh_dist;
    n.a = mesh_verts;
    n.b = points;
    n.faces = std::move(faces);
    n.iaux = std::move(face_ids);
    n.daux = std::move(aux);
    n.track = tracked(mesh_verts) || tracked(points);
    n.value = std::move(out);
    return push(std::move(n), "signed_distance_to_deforming_mesh");
}

Tensor& Tape::grad_slot(NodeId id) {
    if (grads_[id].empty()) grads_[id] = Tensor(nodes_[id].value.shape(), 0.0);
    return grads_[id];
}

void Tape::add_grad(NodeId id, const Tensor& g) {
    if (!tracked(id)) return;
    Tensor& slot = grad_slot(id);
    for (std::size_t i = 0; i < slot.numel(); ++i) slot[i] += g[i];
}

void Tape::backward(NodeId loss) {
    const Tensor& vl = value(loss);
    if (vl.numel() != 1)
        throw DimensionError("backward expects a single-element loss, got " + vl.shape_string());
    if (!tracked(loss))
        throw InvalidInputError("loss does not depend on any leaf");
    grads_.assign(nodes_.size(), Tensor());
    grad_slot(loss)[0] = 1.0;
    for (int id = loss; id >= 0; --id) {
        if (!nodes_[id].track || grads_[id].empty()) continue;
        backward_node(id);
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    switch (n.op) {
        case Op::leaf:
        case Op::constant:
            break;
        case Op::add: {
            add_grad(n.a, g);
            add_grad(n.b, g);
            break;
        }
        case Op::subtract: {
            add_grad(n.a, g);
            if (tracked(n.b)) {
                Tensor& gb = grad_slot(n.b);
                for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
            }
            break;
        }
        case Op::mul: {
            const Tensor& va = nodes_[n.a].value;
            const Tensor& vb = nodes_[n.b].value;
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
            }
            if (tracked(n.b)) {
                Tensor& gb = grad_slot(n.b);
                for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
            }
            break;
        }
        case Op::affine: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.p0;
            }
            break;
        }
        case Op::sin_: {
            if (tracked(n.a)) {
                const Tensor& va = nodes_[n.a].value;
                Tensor& ga = grad_slot(n.a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * std::cos(va[i]);
            }
            break;
        }
        case Op::cos_: {
            if (tracked(n.a)) {
                const Tensor& va = nodes_[n.a].value;
                Tensor& ga = grad_slot(n.a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] -= g[i] * std::sin(va[i]);
            }
            break;
        }
        case Op::relu: {
            if (tracked(n.a)) {
                const Tensor& va = nodes_[n.a].value;
                Tensor& ga = grad_slot(n.a);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (va[i] > 0.0) ga[i] += g[i];
            }
            break;
        }
        case Op::smooth_clamp: {
            if (tracked(n.a)) {
                const Tensor& va = nodes_[n.a].value;
                Tensor& ga = grad_slot(n.a);
                const double k = n.p0;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    ga[i] += g[i] * (sigmoid(k * va[i]) - sigmoid(k * (va[i] - 1.0)));
            }
            break;
        }
        case Op::matmul: {
            const Tensor& va = nodes_[n.a].value;
            const Tensor& vb = nodes_[n.b].value;
            CMap G(g.data(), va.dim(0), vb.dim(1));
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                MMap(ga.data(), va.dim(0), va.dim(1)) +=
                    G * CMap(vb.data(), vb.dim(0), vb.dim(1)).transpose();
            }
            if (tracked(n.b)) {
                Tensor& gb = grad_slot(n.b);
                MMap(gb.data(), vb.dim(0), vb.dim(1)) +=
                    CMap(va.data(), va.dim(0), va.dim(1)).transpose() * G;
            }
            break;
        }
        case Op::linear: {
            const Tensor& vx = nodes_[n.a].value;
            const Tensor& vw = nodes_[n.b].value;
            const int ci = vw.dim(0), co = vw.dim(1);
            const int lead = static_cast<int>(vx.numel()) / ci;
            CMap G(g.data(), lead, co);
            if (tracked(n.a)) {
                Tensor& gx = grad_slot(n.a);
                MMap(gx.data(), lead, ci) += G * CMap(vw.data(), ci, co).transpose();
            }
            if (tracked(n.b)) {
                Tensor& gw = grad_slot(n.b);
                MMap(gw.data(), ci, co) += CMap(vx.data(), lead, ci).transpose() * G;
            }
            if (tracked(n.c)) {
                Tensor& gb = grad_slot(n.c);
                Eigen::Map<Eigen::RowVectorXd>(gb.data(), co) += G.colwise().sum();
            }
            break;
        }
        case Op::transpose: {
            if (tracked(n.a)) {
                const Tensor& va = nodes_[n.a].value;
                Tensor& ga = grad_slot(n.a);
                MMap(ga.data(), va.dim(0), va.dim(1)) +=
                    CMap(g.data(), va.dim(1), va.dim(0)).transpose();
            }
            break;
        }
        case Op::reshape_: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                for (int i = 0; i < g.numel(); ++i) ga.data()[i] += g.data()[i];
            }
            break;
        }
        case Op::concat_cols: {
            const int rank = n.value.rank();
            const int total_c = n.value.dim(rank - 1);
            const int lead = static_cast<int>(n.value.numel()) / total_c;
            int col = 0;
            for (NodeId id_in : n.inputs) {
                const Tensor& v = nodes_[id_in].value;
                const int c = v.dim(v.rank() - 1);
                if (tracked(id_in)) {
                    Tensor& gi = grad_slot(id_in);
                    for (int r = 0; r < lead; ++r)
                        for (int t = 0; t < c; ++t)
                            gi[static_cast<std::size_t>(r) * c + t] +=
                                g[static_cast<std::size_t>(r) * total_c + col + t];
                }
                col += c;
            }
            break;
        }
        case Op::stack_rows: {
            const int cols = n.value.dim(1);
            int r = 0;
            for (NodeId id_in : n.inputs) {
                const Tensor& v = nodes_[id_in].value;
                const int nr = v.rank() == 1 ? 1 : v.dim(0);
                if (tracked(id_in)) {
                    Tensor& gi = grad_slot(id_in);
                    for (std::size_t t = 0; t < gi.numel(); ++t)
                        gi[t] += g[static_cast<std::size_t>(r) * cols + t];
                }
                r += nr;
            }
            break;
        }
        case Op::slice: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                for (int i = 0; i < n.i1; ++i) ga[n.i0 + i] += g[i];
            }
            break;
        }
        case Op::scalar_times: {
            if (tracked(n.a)) {
                Tensor& gs = grad_slot(n.a);
                double acc = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * n.daux[i];
                gs[0] += acc;
            }
            break;
        }
        case Op::const_scale: {
            if (tracked(n.a)) {
                const Tensor& vx = nodes_[n.a].value;
                Tensor& ga = grad_slot(n.a);
                if (vx.rank() == 1) {
                    for (int i = 0; i < vx.dim(0); ++i) ga[i] += g[i] * n.daux[i];
                } else {
                    for (int r = 0; r < vx.dim(0); ++r)
                        for (int c = 0; c < vx.dim(1); ++c)
                            ga[static_cast<std::size_t>(r) * vx.dim(1) + c] +=
                                g[static_cast<std::size_t>(r) * vx.dim(1) + c] * n.daux[r];
                }
            }
            break;
        }
        case Op::gather: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int nn = n.graph->n, k = n.graph->k;
                const int c = n.value.dim(2);
                for (int i = 0; i < nn; ++i)
                    for (int s = 0; s < k; ++s) {
                        const int j = n.graph->at(i, s);
                        for (int t = 0; t < c; ++t)
                            ga[static_cast<std::size_t>(j) * c + t] +=
                                g[(static_cast<std::size_t>(i) * k + s) * c + t];
                    }
            }
            break;
        }
        case Op::repeat: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int nn = n.value.dim(0), k = n.value.dim(1), c = n.value.dim(2);
                for (int i = 0; i < nn; ++i)
                    for (int s = 0; s < k; ++s)
                        for (int t = 0; t < c; ++t)
                            ga[static_cast<std::size_t>(i) * c + t] +=
                                g[(static_cast<std::size_t>(i) * k + s) * c + t];
            }
            break;
        }
        case Op::max_nb: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int nn = n.value.dim(0), c = n.value.dim(1);
                const int k = nodes_[n.a].value.dim(1);
                for (int i = 0; i < nn; ++i)
                    for (int t = 0; t < c; ++t) {
                        const int s = n.iaux[static_cast<std::size_t>(i) * c + t];
                        ga[(static_cast<std::size_t>(i) * k + s) * c + t] +=
                            g[static_cast<std::size_t>(i) * c + t];
                    }
            }
            break;
        }
        case Op::sum: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
            }
            break;
        }
        case Op::mean: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const double s = g[0] / static_cast<double>(ga.numel());
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += s;
            }
            break;
        }
        case Op::l1: {
            const Tensor& va = nodes_[n.a].value;
            const Tensor& vb = nodes_[n.b].value;
            const double s = g[0] / static_cast<double>(va.numel());
            for (std::size_t i = 0; i < va.numel(); ++i) {
                const double d = va[i] - vb[i];
                const double sg = d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
                if (tracked(n.a)) grad_slot(n.a)[i] += sg;
                if (tracked(n.b)) grad_slot(n.b)[i] -= sg;
            }
            break;
        }
        case Op::mse: {
            const Tensor& va = nodes_[n.a].value;
            const Tensor& vb = nodes_[n.b].value;
            const double s = 2.0 * g[0] / static_cast<double>(va.numel());
            for (std::size_t i = 0; i < va.numel(); ++i) {
                const double d = s * (va[i] - vb[i]);
                if (tracked(n.a)) grad_slot(n.a)[i] += d;
                if (tracked(n.b)) grad_slot(n.b)[i] -= d;
            }
            break;
        }
        case Op::softmax_ce: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int rows = nodes_[n.a].value.dim(0);
                const int nb = nodes_[n.a].value.dim(1);
                const double* probs = n.daux.data();
                const double* w = n.daux.data() + static_cast<std::size_t>(rows) * nb;
                const double s = g[0] / rows;
                for (int i = 0; i < rows; ++i) {
                    const double wi = w[n.iaux[i]] * s;
                    for (int j = 0; j < nb; ++j) {
                        double d = probs[static_cast<std::size_t>(i) * nb + j];
                        if (j == n.iaux[i]) d -= 1.0;
                        ga[static_cast<std::size_t>(i) * nb + j] += wi * d;
                    }
                }
            }
            break;
        }
        case Op::soft_ce: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int rows = nodes_[n.a].value.dim(0);
                const int nb = nodes_[n.a].value.dim(1);
                const std::size_t block = static_cast<std::size_t>(rows) * nb;
                const double* probs = n.daux.data();
                const double* q = n.daux.data() + block;
                const double* w = n.daux.data() + 2 * block;
                const double s = g[0] / rows;
                for (int i = 0; i < rows; ++i) {
                    const double wi = w[i] * s;
                    for (int j = 0; j < nb; ++j) {
                        const std::size_t at = static_cast<std::size_t>(i) * nb + j;
                        ga[at] += wi * (probs[at] - q[at]);
                    }
                }
            }
            break;
        }
        case Op::decode: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int rows = n.value.dim(0);
                const int nb = nodes_[n.a].value.dim(1);
                for (int i = 0; i < rows; ++i) {
                    const double e = n.value[i];
                    for (int j = 0; j < nb; ++j) {
                        const double p = n.daux[static_cast<std::size_t>(i) * nb + j];
                        ga[static_cast<std::size_t>(i) * nb + j] +=
                            g[i] * p * ((j + 0.5) / nb - e);
                    }
                }
            }
            break;
        }
        case Op::fixed_mesh_dist: {
            if (tracked(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const int m = n.value.dim(0);
                for (int i = 0; i < m; ++i)
                    for (int t = 0; t < 3; ++t)
                        ga[static_cast<std::size_t>(i) * 3 + t] +=
                            g[i] * n.daux[static_cast<std::size_t>(i) * 3 + t];
            }
            break;
        }
        case Op::deform_mesh_dist: {
            const int m = n.value.dim(0);
            for (int i = 0; i < m; ++i) {
                const double* row = n.daux.data() + static_cast<std::size_t>(i) * 6;
                if (tracked(n.b)) {
                    Tensor& gp = grad_slot(n.b);
                    for (int t = 0; t < 3; ++t)
                        gp[static_cast<std::size_t>(i) * 3 + t] += g[i] * row[3 + t];
                }
                if (tracked(n.a)) {
                    Tensor& gv = grad_slot(n.a);
                    const auto& face = (*n.faces)[n.iaux[i]];
                    for (int kcorner = 0; kcorner < 3; ++kcorner)
                        for (int t = 0; t < 3; ++t)
                            gv[static_cast<std::size_t>(face[kcorner]) * 3 + t] -=
                                g[i] * row[kcorner] * row[3 + t];
                }
            }
            break;
        }
    }
}

}  // namespace hc::ad
