#include <doctest.h>

#include <algorithm>

#include "capsnet/graph.hpp"
#include "capsnet/models.hpp"
#include "capsnet/rng.hpp"
#include "support/dag_gen.hpp"

using namespace capsnet;

namespace {

CapsuleGraph scalar_pair_cycle() {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{}});
    g.nodes.push_back({"a", CapsuleFn::sigmoid(), Tensor::scalar(0.0)});
    g.nodes.push_back({"b", CapsuleFn::sigmoid(), Tensor::scalar(0.0)});
    g.edges.push_back({"x", "a", WeightingOp::scalar_mult(), Shape{}, Tensor::scalar(1.0)});
    g.edges.push_back({"a", "b", WeightingOp::scalar_mult(), Shape{}, Tensor::scalar(1.0)});
    g.edges.push_back({"b", "a", WeightingOp::scalar_mult(), Shape{}, Tensor::scalar(1.0)});
    return g;
}

bool mentions(const std::vector<std::string>& violations, const std::string& needle) {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const std::string& v) { return v.find(needle) != std::string::npos; });
}

} // namespace

TEST_SUITE("graph") {

TEST_CASE("the trivial single-input graph is valid") {
    CapsuleGraph g;
    g.inputs.push_back({"x1", Shape{}});
    CHECK(validate(g).ok());
}

TEST_CASE("cycles are reported with the offending node ids") {
    const auto report = validate(scalar_pair_cycle());
    REQUIRE_FALSE(report.ok());
    CHECK(mentions(report.violations, "cycle"));
    CHECK(mentions(report.violations, "a"));
    CHECK(mentions(report.violations, "b"));
}

TEST_CASE("a weight feeding a wrong-sized bias names the edge") {
    CapsuleGraph g = build_mlp({{5, 7}, CapsuleFn::sigmoid(), CapsuleFn::sigmoid()});
    g.nodes[0].bias = Tensor::zeros({6}); // 7x5 weight now feeds a 6-entry bias
    const auto report = validate(g);
    REQUIRE_FALSE(report.ok());
    CHECK(mentions(report.violations, "x->o"));
}

TEST_CASE("structural violations are each reported") {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{}});
    g.inputs.push_back({"x", Shape{}}); // duplicate id
    g.nodes.push_back({"h", CapsuleFn::sigmoid(), Tensor::scalar(0.0)});
    g.edges.push_back({"h", "h", WeightingOp::scalar_mult(), Shape{}, std::nullopt}); // self loop
    g.edges.push_back({"q", "h", WeightingOp::scalar_mult(), Shape{}, std::nullopt}); // unknown endpoint
    const auto report = validate(g);
    CHECK(mentions(report.violations, "duplicate node id"));
    CHECK(mentions(report.violations, "self loop"));
    CHECK(mentions(report.violations, "unknown endpoint"));
}

TEST_CASE("edges into inputs and missing in-edges are violations") {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{}});
    g.inputs.push_back({"y", Shape{}});
    g.nodes.push_back({"h", CapsuleFn::sigmoid(), Tensor::scalar(0.0)});
    g.edges.push_back({"x", "y", WeightingOp::scalar_mult(), Shape{}, std::nullopt});
    const auto report = validate(g);
    CHECK(mentions(report.violations, "cannot have incoming"));
    CHECK(mentions(report.violations, "no incoming edge"));
}

TEST_CASE("weight discipline per op kind") {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{2}});
    g.nodes.push_back({"h", CapsuleFn::identity(), Tensor::zeros({2})});
    SUBCASE("matmul weight must be declared") {
        g.edges.push_back({"x", "h", WeightingOp::matmul(), std::nullopt, std::nullopt});
        CHECK(mentions(validate(g).violations, "requires a declared weight shape"));
    }
    SUBCASE("identity transfer takes no weight") {
        g.edges.push_back({"x", "h", WeightingOp::identity_transfer(), Shape{2, 2}, std::nullopt});
        CHECK(mentions(validate(g).violations, "takes no weight"));
    }
    SUBCASE("scalar mult weight must be rank 0") {
        g.edges.push_back({"x", "h", WeightingOp::scalar_mult(), Shape{2}, std::nullopt});
        CHECK(mentions(validate(g).violations, "rank 0"));
    }
    SUBCASE("weight tensor must match the declared shape") {
        g.edges.push_back({"x", "h", WeightingOp::matmul(), Shape{2, 2}, Tensor::zeros({2, 3})});
        CHECK(mentions(validate(g).violations, "does not match declared"));
    }
}

TEST_CASE("disconnected graphs are flagged") {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{}});
    g.inputs.push_back({"y", Shape{}});
    CHECK(mentions(validate(g).violations, "not weakly connected"));
}

TEST_CASE("classify partitions the vertex set") {
    const auto zoo = fixtures();

    const NodeClasses mlp = classify(zoo.at("mlp_path"));
    CHECK(mlp.inputs == std::vector<std::string>{"x"});
    CHECK(mlp.hidden == std::vector<std::string>{"h1", "h2", "h3"});
    CHECK(mlp.outputs == std::vector<std::string>{"o"});

    const NodeClasses trivial = classify(zoo.at("trivial"));
    CHECK(trivial.inputs == std::vector<std::string>{"x1"});
    CHECK(trivial.hidden.empty());
    CHECK(trivial.outputs.empty());

    const NodeClasses diamond = classify(zoo.at("diamond"));
    CHECK(diamond.inputs == std::vector<std::string>{"x1"});
    CHECK(diamond.hidden == std::vector<std::string>{"a", "b"});
    CHECK(diamond.outputs == std::vector<std::string>{"c"});

    CHECK_THROWS_AS(classify(scalar_pair_cycle()), InvalidGraph);
}

TEST_CASE("topo order is deterministic with lexicographic ties") {
    const auto zoo = fixtures();
    CHECK(topo_order(zoo.at("chain3")) == std::vector<std::string>{"x1", "h1", "h2"});
    CHECK(topo_order(zoo.at("diamond")) == std::vector<std::string>{"x1", "a", "b", "c"});
    CHECK_THROWS_AS(topo_order(scalar_pair_cycle()), CycleDetected);
}

TEST_CASE("topo order property on random DAGs") {
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 3 + rng.below(8);
        const ScalarNet g = dag_gen::random_connected_dag(rng, n);
        const auto order = topo_order(g);
        REQUIRE(order.size() == g.vertex_count());
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (const auto& e : g.edges) CHECK(pos.at(e.from) < pos.at(e.to));
    }
}

TEST_CASE("infer_shapes walks the default models") {
    const auto zoo = fixtures();
    const auto mlp = infer_shapes(zoo.at("mlp_path"));
    CHECK(mlp.at("x") == Shape{5});
    CHECK(mlp.at("h1") == Shape{7});
    CHECK(mlp.at("h2") == Shape{7});
    CHECK(mlp.at("h3") == Shape{7});
    CHECK(mlp.at("o") == Shape{4});

    // per-op formulas: conv trims by k-1, pooling divides, reshape
    // flattens, matmul maps to the class count
    const auto cnn = infer_shapes(zoo.at("cnn_path"));
    CHECK(cnn.at("x") == Shape{1, 12, 12});
    CHECK(cnn.at("h1") == Shape{4, 10, 10});
    CHECK(cnn.at("h2") == Shape{4, 5, 5});
    CHECK(cnn.at("h3") == Shape{8, 3, 3});
    CHECK(cnn.at("h4") == Shape{8, 1, 1});
    CHECK(cnn.at("h5") == Shape{8});
    CHECK(cnn.at("o") == Shape{10});
}

TEST_CASE("identity transfer chains preserve the input shape") {
    CapsuleGraph g;
    g.inputs.push_back({"x", Shape{3, 2}});
    g.nodes.push_back({"h1", CapsuleFn::identity(), Tensor::zeros({3, 2})});
    g.nodes.push_back({"h2", CapsuleFn::identity(), Tensor::zeros({3, 2})});
    g.edges.push_back({"x", "h1", WeightingOp::identity_transfer(), std::nullopt, std::nullopt});
    g.edges.push_back({"h1", "h2", WeightingOp::identity_transfer(), std::nullopt, std::nullopt});
    const auto shapes = infer_shapes(g);
    CHECK(shapes.at("h1") == Shape{3, 2});
    CHECK(shapes.at("h2") == Shape{3, 2});
}

TEST_CASE("infer_shapes names the first conflicting node in topo order") {
    CapsuleGraph g = build_mlp({{5, 7, 7}, CapsuleFn::sigmoid(), CapsuleFn::sigmoid()});
    g.nodes[0].bias = Tensor::zeros({3}); // h1 now inconsistent; o depends on it
    try {
        infer_shapes(g);
        FAIL("expected ShapeConflict");
    } catch (const ShapeConflict& e) {
        CHECK(std::string(e.what()).find("h1") != std::string::npos);
    }
}

TEST_CASE("valid graphs always shape-infer and order") {
    for (const auto& [name, g] : fixtures()) {
        CAPTURE(name);
        REQUIRE(validate(g).ok());
        CHECK_NOTHROW(infer_shapes(g));
        CHECK(topo_order(g).size() == g.vertex_count());
    }
}

} // TEST_SUITE
