#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fd_check.hpp"
#include "handcontact/checkpoint.hpp"
#include "handcontact/contactnet.hpp"
#include "handcontact/error.hpp"
#include "handcontact/optim.hpp"
#include "handcontact/rng.hpp"

using namespace hc;
namespace fs = std::filesystem;

namespace {

// a small two-body cloud with deterministic geometry
net::FeaturedCloud toy_cloud(int hand_n, int obj_n, std::uint64_t seed) {
    Rng rng(seed);
    geom::PointSet hand, obj;
    std::vector<geom::Vec3> hn, on;
    for (int i = 0; i < hand_n; ++i) {
        hand.emplace_back(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                          rng.uniform(0.0, 0.08));
        hn.push_back(geom::Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized());
    }
    for (int i = 0; i < obj_n; ++i) {
        obj.emplace_back(rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                         rng.uniform(-0.06, 0.0));
        on.push_back(geom::Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized());
    }
    return net::featurize(hand, hn, obj, on);
}

net::NetworkConfig tiny_config() {
    net::NetworkConfig cfg;
    cfg.k = 3;
    cfg.spatial_dilation = 1;
    cfg.semantic_dilation = 1;
    cfg.edge_width = 6;
    cfg.head_width1 = 8;
    cfg.head_width2 = 7;
    return cfg;
}

std::vector<int> toy_bins(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> bins(n);
    for (int& b : bins) b = static_cast<int>(rng.below(net::kContactBins));
    return bins;
}

fs::path tmp_dir() {
    const fs::path d = fs::temp_directory_path() / "hc_network_test";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("featurize") {
    const auto cloud = toy_cloud(6, 5, 42);
    REQUIRE(cloud.total_points() == 11);
    CHECK(cloud.hand_points == 6);
    REQUIRE(cloud.features.dim(1) == net::kPointFeatures);

    SUBCASE("body flag and normal passthrough") {
        for (int i = 0; i < 11; ++i) {
            CHECK(cloud.features.at2(i, 0) == (i < 6 ? 1.0 : 0.0));
            const double nx = cloud.features.at2(i, 2);
            const double ny = cloud.features.at2(i, 3);
            const double nz = cloud.features.at2(i, 4);
            CHECK(std::abs(std::sqrt(nx * nx + ny * ny + nz * nz) - 1.0) < 1e-12);
        }
    }
    SUBCASE("gap feature is the cross-body nearest distance") {
        for (int i = 0; i < 6; ++i) {
            double best = 1e30;
            const geom::Vec3 p(cloud.positions.at2(i, 0), cloud.positions.at2(i, 1),
                               cloud.positions.at2(i, 2));
            for (int j = 6; j < 11; ++j) {
                const geom::Vec3 q(cloud.positions.at2(j, 0), cloud.positions.at2(j, 1),
                                   cloud.positions.at2(j, 2));
                best = std::min(best, (p - q).norm());
            }
            CHECK(cloud.features.at2(i, 1) == doctest::Approx(std::min(best, 0.1)).epsilon(1e-12));
        }
    }
    SUBCASE("gap clamps at the cap") {
        geom::PointSet hand{{0.0, 0.0, 0.0}}, obj{{1.0, 0.0, 0.0}};
        std::vector<geom::Vec3> n{{0.0, 0.0, 1.0}};
        const auto far_cloud = net::featurize(hand, n, obj, n);
        CHECK(far_cloud.features.at2(0, 1) == net::kGapClamp);
        CHECK(far_cloud.features.at2(1, 1) == net::kGapClamp);
    }
    SUBCASE("input validation") {
        geom::PointSet pts{{0.0, 0.0, 0.0}};
        std::vector<geom::Vec3> nrm;
        CHECK_THROWS_AS((void)net::featurize(pts, nrm, pts, nrm), DimensionError);
        std::vector<geom::Vec3> one{{0.0, 0.0, 1.0}};
        CHECK_THROWS_AS((void)net::featurize({}, {}, pts, one), InvalidInputError);
    }
}

TEST_CASE("weight initialization") {
    const auto cfg = tiny_config();
    const auto w1 = net::NetworkWeights::init(cfg, 7);
    const auto w2 = net::NetworkWeights::init(cfg, 7);
    const auto w3 = net::NetworkWeights::init(cfg, 8);

    // spatial l1/l2, semantic l1/l2, head l1/l2/l3 -> 7 layers, weight+bias each
    REQUIRE(w1.params.size() == 14);

    SUBCASE("shapes and fan-in bounds") {
        CHECK(w1.find("spatial.l1.w").shape() == std::vector<int>{10, 6});
        CHECK(w1.find("semantic.l2.w").shape() == std::vector<int>{6, 6});
        CHECK(w1.find("head.l1.w").shape() == std::vector<int>{2 * 6 + 5, 8});
        CHECK(w1.find("head.l3.w").shape() == std::vector<int>{7, 10});
        CHECK(w1.find("head.l3.b").shape() == std::vector<int>{10});
        for (const auto& [name, t] : w1.params) {
            const Tensor& wt = w1.find(name);
            const int fan_in = wt.rank() == 2 ? wt.dim(0) : 0;
            double bound = 0.0;
            if (name == "spatial.l1.w" || name == "spatial.l1.b" || name == "semantic.l1.w" ||
                name == "semantic.l1.b")
                bound = std::sqrt(1.0 / 10);
            else if (name.rfind("head.l1", 0) == 0)
                bound = std::sqrt(1.0 / 17);
            else if (name.rfind("head.l2", 0) == 0)
                bound = std::sqrt(1.0 / 8);
            else if (name.rfind("head.l3", 0) == 0)
                bound = std::sqrt(1.0 / 7);
            else
                bound = std::sqrt(1.0 / 6);
            (void)fan_in;
            for (int i = 0; i < t.numel(); ++i) CHECK(std::abs(t.data()[i]) <= bound);
        }
    }
    SUBCASE("seed determinism") {
        for (std::size_t p = 0; p < w1.params.size(); ++p) {
            REQUIRE(w1.params[p].first == w2.params[p].first);
            for (int i = 0; i < w1.params[p].second.numel(); ++i)
                CHECK(w1.params[p].second.data()[i] == w2.params[p].second.data()[i]);
        }
        bool any_diff = false;
        for (std::size_t p = 0; p < w1.params.size(); ++p)
            for (int i = 0; i < w1.params[p].second.numel(); ++i)
                if (w1.params[p].second.data()[i] != w3.params[p].second.data()[i]) any_diff = true;
        CHECK(any_diff);
    }
    SUBCASE("unknown parameter name throws") {
        CHECK_THROWS_AS((void)w1.find("head.l9.w"), IndexError);
    }
}

TEST_CASE("forward pass") {
    const auto cfg = tiny_config();
    const auto weights = net::NetworkWeights::init(cfg, 3);
    const auto cloud = toy_cloud(9, 7, 5);
    const auto graphs = net::build_graphs(cloud, cfg);

    SUBCASE("logit shape and determinism") {
        ad::Tape t1;
        const auto b1 = net::bind(t1, weights, true);
        const auto l1 = net::forward(t1, b1, weights, cloud, graphs);
        CHECK(t1.value(l1).shape() == std::vector<int>{16, net::kContactBins});

        const auto est = net::estimate(weights, cloud, graphs);
        REQUIRE(est.logits.same_shape(t1.value(l1)));
        for (int i = 0; i < est.logits.numel(); ++i)
            CHECK(est.logits.data()[i] == t1.value(l1).data()[i]);
        for (double v : est.value) {
            CHECK(v >= 0.05);
            CHECK(v <= 0.95);
        }
    }
    SUBCASE("semantic branch reacts to features, not positions") {
        auto moved = cloud;
        for (int i = 0; i < moved.positions.numel(); ++i) moved.positions.data()[i] += 0.37;
        const auto g2 = net::build_graphs(moved, cfg);
        CHECK(g2.semantic->indices == graphs.semantic->indices);
        CHECK(g2.spatial->indices == graphs.spatial->indices);  // rigid shift keeps knn
        const auto est1 = net::estimate(weights, cloud, graphs);
        const auto est2 = net::estimate(weights, moved, g2);
        for (int i = 0; i < est1.logits.numel(); ++i)
            CHECK(est1.logits.data()[i] == est2.logits.data()[i]);
    }
    SUBCASE("combined-graph ablation shares one graph") {
        auto ccfg = cfg;
        ccfg.combined_graph = true;
        const auto g = net::build_graphs(cloud, ccfg);
        CHECK(g.spatial.get() == g.semantic.get());
        const auto est = net::estimate(weights, cloud, g);
        CHECK(est.logits.dim(0) == 16);
    }
}

TEST_CASE("loss targets and class weights") {
    SUBCASE("bin mapping clamps to the valid range") {
        const std::vector<double> c{0.0, 0.049, 0.05, 0.1, 0.55, 0.9499, 0.95, 1.0, 1.7, -0.2};
        const auto bins = net::target_bins(c);
        CHECK(bins == std::vector<int>{0, 0, 0, 1, 5, 9, 9, 9, 9, 0});
    }
    SUBCASE("equal frequencies give unit weights") {
        std::vector<int> bins;
        for (int b = 0; b < 10; ++b)
            for (int r = 0; r < 3; ++r) bins.push_back(b);
        for (double w : net::inverse_frequency_weights(bins)) CHECK(w == 1.0);
    }
    SUBCASE("skewed frequencies rebalance with mean one") {
        // bin0 x3, bin4 x1: inverse freqs 4/3 and 4, mean 8/3
        const std::vector<int> bins{0, 0, 0, 4};
        const auto w = net::inverse_frequency_weights(bins);
        CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(w[4] == doctest::Approx(1.5).epsilon(1e-12));
        double present_sum = 0.0;
        for (int b = 0; b < 10; ++b) {
            if (b != 0 && b != 4) CHECK(w[b] == 0.0);
            present_sum += w[b];
        }
        CHECK(present_sum == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("invalid bins throw") {
        CHECK_THROWS_AS((void)net::inverse_frequency_weights({}), InvalidInputError);
        CHECK_THROWS_AS((void)net::inverse_frequency_weights({0, 11}), IndexError);
    }
}

TEST_CASE("end-to-end weight gradients against finite differences") {
    const auto cfg = tiny_config();
    const auto weights = net::NetworkWeights::init(cfg, 11);
    const auto cloud = toy_cloud(8, 6, 13);
    const auto graphs = net::build_graphs(cloud, cfg);
    const auto bins = toy_bins(14, 17);
    const auto cw = net::inverse_frequency_weights(bins);

    std::vector<Tensor> inputs;
    for (const auto& [name, t] : weights.params) inputs.push_back(t);

    hc::testutil::check_gradients(
        inputs,
        [&](ad::Tape& t, const std::vector<ad::NodeId>& in) {
            net::BoundNetwork bound{in};
            const auto logits = net::forward(t, bound, weights, cloud, graphs);
            return net::supervised_loss(t, logits, bins, cw);
        },
        1e-5, 1e-6);
}

TEST_CASE("spot finite differences at production widths") {
    const net::NetworkConfig cfg;  // defaults
    auto weights = net::NetworkWeights::init(cfg, 19);
    const auto cloud = toy_cloud(14, 10, 23);
    const auto graphs = net::build_graphs(cloud, cfg);
    const auto bins = toy_bins(24, 29);
    const auto cw = net::inverse_frequency_weights(bins);

    const auto loss_at = [&]() {
        ad::Tape t;
        const auto bound = net::bind(t, weights, false);
        const auto logits = net::forward(t, bound, weights, cloud, graphs);
        return t.value(net::supervised_loss(t, logits, bins, cw)).data()[0];
    };

    // analytic gradients once
    ad::Tape t;
    const auto bound = net::bind(t, weights, true);
    const auto logits = net::forward(t, bound, weights, cloud, graphs);
    t.backward(net::supervised_loss(t, logits, bins, cw));

    Rng rng(31);
    const double h = 1e-6;
    for (std::size_t p = 0; p < weights.params.size(); ++p) {
        Tensor& wt = weights.params[p].second;
        const Tensor& g = t.grad(bound.ids[p]);
        for (int probe = 0; probe < 5; ++probe) {
            const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(wt.numel())));
            const double keep = wt.data()[i];
            wt.data()[i] = keep + h;
            const double up = loss_at();
            wt.data()[i] = keep - h;
            const double dn = loss_at();
            wt.data()[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double an = g.data()[i];
            CHECK(std::abs(an - fd) <= 1e-5 * std::max({1.0, std::abs(an), std::abs(fd)}));
        }
    }
}

TEST_CASE("adam") {
    SUBCASE("first step matches the closed form") {
        net::NamedTensors params;
        params.emplace_back("p", Tensor({3}, {1.0, -2.0, 0.5}));
        auto state = opt::AdamState::zeros_like(params);
        opt::AdamConfig cfg;
        cfg.lr = 0.01;
        const Tensor g({3}, {2.0, -4.0, 1e-12});
        adam_step(params, {g}, state, cfg);
        CHECK(state.step == 1);
        for (int i = 0; i < 3; ++i) {
            const double gi = g.data()[i];
            const double expect = (i == 0   ? 1.0
                                   : i == 1 ? -2.0
                                            : 0.5) -
                                  cfg.lr * gi / (std::sqrt(gi * gi) + cfg.eps);
            CHECK(params[0].second.data()[i] == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    SUBCASE("minimizes a quadratic") {
        net::NamedTensors params;
        params.emplace_back("p", Tensor({1}, {0.0}));
        auto state = opt::AdamState::zeros_like(params);
        opt::AdamConfig cfg;
        cfg.lr = 0.05;
        for (int it = 0; it < 2000; ++it) {
            const double p = params[0].second.data()[0];
            const Tensor g({1}, {2.0 * (p - 3.0)});
            adam_step(params, {g}, state, cfg);
        }
        CHECK(params[0].second.data()[0] == doctest::Approx(3.0).epsilon(1e-6));
    }
    SUBCASE("mismatched gradient list throws") {
        net::NamedTensors params;
        params.emplace_back("p", Tensor({2}, 0.0));
        auto state = opt::AdamState::zeros_like(params);
        opt::AdamConfig cfg;
        CHECK_THROWS_AS(adam_step(params, {}, state, cfg), DimensionError);
        CHECK_THROWS_AS(adam_step(params, {Tensor({3}, 0.0)}, state, cfg), DimensionError);
    }
}

TEST_CASE("checkpoint io") {
    const fs::path dir = tmp_dir();
    const auto cfg = tiny_config();
    const auto weights = net::NetworkWeights::init(cfg, 77);

    io::Checkpoint ck;
    for (const auto& [name, t] : weights.params) ck.tensors.emplace_back("net." + name, t);
    auto state = opt::AdamState::zeros_like(weights.params);
    state.m[0].data()[0] = 0.123456789123456789;
    state.v[0].data()[0] = 1e-300;  // subnormal-adjacent values must survive
    for (std::size_t p = 0; p < state.m.size(); ++p) {
        ck.tensors.emplace_back("adam.m." + std::to_string(p), state.m[p]);
        ck.tensors.emplace_back("adam.v." + std::to_string(p), state.v[p]);
    }
    ck.meta.emplace_back("epoch", 17);
    ck.meta.emplace_back("adam.step", 423);
    Rng rng(99);
    const auto rs = rng.state();
    for (int i = 0; i < 4; ++i) ck.meta.emplace_back("rng." + std::to_string(i), rs[i]);

    const std::string path = (dir / "round.ck").string();
    save_checkpoint(path, ck);

    SUBCASE("round trip is bit-exact and order-preserving") {
        const auto back = io::load_checkpoint(path);
        REQUIRE(back.tensors.size() == ck.tensors.size());
        REQUIRE(back.meta.size() == ck.meta.size());
        for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
            CHECK(back.tensors[i].first == ck.tensors[i].first);
            REQUIRE(back.tensors[i].second.same_shape(ck.tensors[i].second));
            const auto& a = back.tensors[i].second;
            const auto& b = ck.tensors[i].second;
            CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) == 0);
        }
        for (std::size_t i = 0; i < ck.meta.size(); ++i) {
            CHECK(back.meta[i].first == ck.meta[i].first);
            CHECK(back.meta[i].second == ck.meta[i].second);
        }
        CHECK(back.meta_or("epoch", 0) == 17);
        CHECK(back.meta_or("missing", 5) == 5);
        CHECK(back.find_tensor("net.head.l3.b") != nullptr);
        CHECK(back.find_tensor("nope") == nullptr);
    }
    SUBCASE("rewrite is byte-identical") {
        const std::string path2 = (dir / "again.ck").string();
        save_checkpoint(path2, io::load_checkpoint(path));
        std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
        const std::string b1((std::istreambuf_iterator<char>(f1)), {});
        const std::string b2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(b1 == b2);
        CHECK(!b1.empty());
    }
    SUBCASE("damage is rejected") {
        CHECK_THROWS_AS((void)io::load_checkpoint((dir / "missing.ck").string()), ParseError);

        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        in.close();

        const std::string trunc_path = (dir / "trunc.ck").string();
        std::ofstream(trunc_path, std::ios::binary)
            .write(bytes.data(), static_cast<long>(bytes.size() / 2));
        CHECK_THROWS_AS((void)io::load_checkpoint(trunc_path), ParseError);

        const std::string magic_path = (dir / "magic.ck").string();
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream(magic_path, std::ios::binary).write(bad.data(), static_cast<long>(bad.size()));
        CHECK_THROWS_AS((void)io::load_checkpoint(magic_path), ParseError);

        const std::string trail_path = (dir / "trail.ck").string();
        std::string extra = bytes + '\0';
        std::ofstream(trail_path, std::ios::binary)
            .write(extra.data(), static_cast<long>(extra.size()));
        CHECK_THROWS_AS((void)io::load_checkpoint(trail_path), ParseError);
    }
}
