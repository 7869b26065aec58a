#include <doctest.h>

#include <cmath>
#include <cstring>

#include "capsnet/models.hpp"
#include "capsnet/rng.hpp"
#include "capsnet/trainer.hpp"
#include "support/oracles.hpp"

using namespace capsnet;

namespace {

bool graphs_bitwise_equal(const CapsuleGraph& a, const CapsuleGraph& b) {
    if (a.edges.size() != b.edges.size() || a.nodes.size() != b.nodes.size()) return false;
    for (std::size_t i = 0; i < a.edges.size(); ++i) {
        const auto& ea = a.edges[i];
        const auto& eb = b.edges[i];
        if (ea.weight.has_value() != eb.weight.has_value()) return false;
        if (ea.weight &&
            std::memcmp(ea.weight->data().data(), eb.weight->data().data(),
                        ea.weight->size() * sizeof(double)) != 0)
            return false;
    }
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        if (std::memcmp(a.nodes[i].bias.data().data(), b.nodes[i].bias.data().data(),
                        a.nodes[i].bias.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

// y = w*x + b single identity capsule
CapsuleGraph linear_model(double w) {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{}});
    g.nodes.push_back({"o", CapsuleFn::identity(), Tensor::scalar(0.0)});
    g.edges.push_back({"x", "o", WeightingOp::scalar_mult(), Shape{}, Tensor::scalar(w)});
    return g;
}

Dataset line_dataset(double slope, double intercept) {
    Dataset data;
    for (int i = -4; i <= 4; ++i) {
        const double x = i / 4.0;
        data.samples.push_back({{{"x", Tensor::scalar(x)}}, {{"o", Tensor::scalar(slope * x + intercept)}}});
    }
    return data;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("init_params is deterministic per seed") {
    const CapsuleGraph g = fixtures().at("mlp_path");
    const CapsuleGraph a = init_params(g, 42);
    const CapsuleGraph b = init_params(g, 42);
    const CapsuleGraph c = init_params(g, 43);
    CHECK(graphs_bitwise_equal(a, b));
    CHECK_FALSE(graphs_bitwise_equal(a, c));
}

TEST_CASE("init_params zeroes biases and bounds weights") {
    const CapsuleGraph g = init_params(fixtures().at("mlp_path"), 7);
    for (const auto& n : g.nodes)
        for (std::size_t i = 0; i < n.bias.size(); ++i) CHECK(n.bias[i] == 0.0);
    for (const auto& e : g.edges) {
        REQUIRE(e.weight.has_value());
        const auto [m, n] = std::pair{e.weight->shape()[0], e.weight->shape()[1]};
        const double r = std::sqrt(6.0 / static_cast<double>(m + n));
        for (std::size_t i = 0; i < e.weight->size(); ++i) {
            CHECK((*e.weight)[i] >= -r);
            CHECK((*e.weight)[i] < r);
        }
    }
}

TEST_CASE("sampled weights center near zero") {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{100}});
    g.nodes.push_back({"o", CapsuleFn::identity(), Tensor::zeros({100})});
    g.edges.push_back({"x", "o", WeightingOp::matmul(), Shape{100, 100}, std::nullopt});
    const CapsuleGraph init = init_params(g, 2024);
    const Tensor& w = *init.edges[0].weight;
    double mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i];
    mean /= static_cast<double>(w.size());
    const double r = std::sqrt(6.0 / 200.0);
    const double sigma_mean = r / std::sqrt(3.0 * static_cast<double>(w.size()));
    CHECK(std::abs(mean) < 3.0 * sigma_mean);
}

TEST_CASE("a zero-gradient step leaves parameters unchanged") {
    const CapsuleGraph g = linear_model(1.0);
    // y(0.5) = 0.5 and the target matches, so nothing moves
    const Sample sample{{{"x", Tensor::scalar(0.5)}}, {{"o", Tensor::scalar(0.5)}}};
    const auto [updated, loss] = sgd_step(g, sample, 0.1);
    CHECK(loss == 0.0);
    CHECK(graphs_bitwise_equal(g, updated));
}

TEST_CASE("one hand-computed step moves the weight") {
    const CapsuleGraph g = linear_model(1.0);
    const Sample sample{{{"x", Tensor::scalar(1.0)}}, {{"o", Tensor::scalar(0.0)}}};
    const auto [updated, loss] = sgd_step(g, sample, 0.1);
    CHECK(loss == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(updated.edges[0].weight->value() == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(updated.nodes[0].bias.value() == doctest::Approx(-0.1).epsilon(1e-15));
    CHECK_THROWS_AS(sgd_step(g, sample, 0.0), InvalidSpec);
}

TEST_CASE("small steps do not increase the sample loss") {
    Rng rng(5);
    const CapsuleGraph g = init_params(fixtures().at("mlp_path"), 11);
    std::vector<double> xd(5), td(4);
    for (double& v : xd) v = rng.uniform(-1.0, 1.0);
    for (double& v : td) v = rng.uniform(0.0, 1.0);
    const Sample sample{{{"x", Tensor({5}, xd)}}, {{"o", Tensor({4}, td)}}};

    for (double lr : {1e-3, 1e-4}) {
        const auto [updated, before] = sgd_step(g, sample, lr);
        const double after =
            total_loss(eval(updated, sample.inputs), LossSpec{LossKind::MeanSquaredError, sample.targets});
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("train with zero epochs is a no-op") {
    const CapsuleGraph g = linear_model(0.3);
    TrainConfig config;
    config.epochs = 0;
    const TrainResult result = train(g, line_dataset(2.0, 1.0), config);
    CHECK(result.history.empty());
    CHECK(graphs_bitwise_equal(g, result.graph));
}

TEST_CASE("linear regression recovers slope and intercept") {
    TrainConfig config;
    config.learning_rate = 0.1;
    config.epochs = 500;
    config.seed = 7;
    const TrainResult result = train(linear_model(0.0), line_dataset(2.0, 1.0), config);
    CHECK(std::abs(result.graph.edges[0].weight->value() - 2.0) < 1e-3);
    CHECK(std::abs(result.graph.nodes[0].bias.value() - 1.0) < 1e-3);
    REQUIRE(result.history.size() == 500);
    CHECK(result.history.back() < result.history.front());
}

TEST_CASE("training is bit-reproducible and preserves shapes") {
    TrainConfig config;
    config.learning_rate = 0.2;
    config.epochs = 40;
    config.seed = 99;
    const CapsuleGraph g = init_params(fixtures().at("mlp_path"), 5);
    Dataset data;
    Rng rng(1);
    for (int s = 0; s < 6; ++s) {
        std::vector<double> xd(5), td(4);
        for (double& v : xd) v = rng.uniform(-1.0, 1.0);
        for (double& v : td) v = rng.uniform(0.0, 1.0);
        data.samples.push_back({{{"x", Tensor({5}, xd)}}, {{"o", Tensor({4}, td)}}});
    }
    const TrainResult a = train(g, data, config);
    const TrainResult b = train(g, data, config);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i] == b.history[i]);
    CHECK(graphs_bitwise_equal(a.graph, b.graph));
    for (std::size_t i = 0; i < a.graph.edges.size(); ++i)
        CHECK(a.graph.edges[i].weight->shape() == g.edges[i].weight->shape());
}

} // TEST_SUITE
