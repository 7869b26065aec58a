#include <doctest.h>

#include "capsnet/json_io.hpp"
#include "capsnet/models.hpp"
#include "capsnet/trainer.hpp"

using namespace capsnet;

TEST_SUITE("io") {

TEST_CASE("graph documents round trip byte for byte") {
    for (const auto& [name, g] : fixtures()) {
        CAPTURE(name);
        const std::string once = save_graph_json(g);
        const CapsuleGraph loaded = load_graph_json(once);
        CHECK(save_graph_json(loaded) == once);
    }
}

TEST_CASE("round-tripped graphs answer queries identically") {
    for (const char* name : {"mlp_path", "cnn_path", "diamond", "arm_merge"}) {
        const CapsuleGraph g = fixtures().at(name);
        const CapsuleGraph loaded = load_graph_json(save_graph_json(g));
        CHECK(validate(loaded).ok() == validate(g).ok());
        const NodeClasses ca = classify(g), cb = classify(loaded);
        CHECK(ca.inputs == cb.inputs);
        CHECK(ca.hidden == cb.hidden);
        CHECK(ca.outputs == cb.outputs);
        CHECK(topo_order(g) == topo_order(loaded));
        CHECK(infer_shapes(g) == infer_shapes(loaded));
    }
}

TEST_CASE("inlined parameters survive the round trip") {
    CapsuleGraph g = init_params(fixtures().at("mlp_path"), 12);
    g.nodes[0].bias = Tensor({7}, {1, 2, 3, 4, 5, 6, 7});
    const CapsuleGraph loaded = load_graph_json(save_graph_json(g));
    CHECK(loaded.fully_weighted());
    for (std::size_t i = 0; i < 7; ++i) CHECK(loaded.find_node("h1")->bias[i] == g.nodes[0].bias[i]);
    const Edge* e = loaded.find_edge("x", "h1");
    REQUIRE(e);
    for (std::size_t i = 0; i < e->weight->size(); ++i)
        CHECK((*e->weight)[i] == (*g.find_edge("x", "h1")->weight)[i]);
}

TEST_CASE("unknown keys are rejected everywhere") {
    CHECK_THROWS_AS(load_graph_json(R"({"inputs":[],"nodes":[],"edges":[],"extra":1})"), ParseError);
    CHECK_THROWS_AS(load_graph_json(R"({"inputs":[{"id":"x","shape":[],"color":"red"}],"nodes":[],"edges":[]})"),
                    ParseError);
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[]}],"nodes":[{"id":"h","cap":"sigmoid","bias_shape":[],"nope":0}],"edges":[]})"),
        ParseError);
    CHECK_THROWS_AS(load_graph_json("not json at all"), ParseError);
    CHECK_THROWS_AS(load_graph_json(R"({"inputs":[],"nodes":[]})"), ParseError); // edges missing
}

TEST_CASE("node and edge field rules are enforced") {
    // downsample needs cap_arg
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[1,2,2]}],"nodes":[{"id":"h","cap":"downsample","bias_shape":[1,1,1]}],"edges":[{"from":"x","to":"h","op":"identity_transfer"}]})"),
        ParseError);
    // cap_arg is downsample-only
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[]}],"nodes":[{"id":"h","cap":"sigmoid","cap_arg":2,"bias_shape":[]}],"edges":[{"from":"x","to":"h","op":"scalar_mult","weight_shape":[]}]})"),
        ParseError);
    // reshape takes no weight
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[4]}],"nodes":[{"id":"h","cap":"identity","bias_shape":[2,2]}],"edges":[{"from":"x","to":"h","op":"reshape","op_arg":[2,2],"weight_shape":[2,2]}]})"),
        ParseError);
    // weight array length must match
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[]}],"nodes":[{"id":"h","cap":"sigmoid","bias_shape":[]}],"edges":[{"from":"x","to":"h","op":"scalar_mult","weight_shape":[],"weight":[1.0,2.0]}]})"),
        ParseError);
    // bias array length must match
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[]}],"nodes":[{"id":"h","cap":"sigmoid","bias_shape":[],"bias":[0.0,1.0]}],"edges":[{"from":"x","to":"h","op":"scalar_mult","weight_shape":[]}]})"),
        ParseError);
    // unknown names
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[]}],"nodes":[{"id":"h","cap":"swish","bias_shape":[]}],"edges":[]})"),
        ParseError);
    CHECK_THROWS_AS(
        load_graph_json(
            R"({"inputs":[{"id":"x","shape":[]}],"nodes":[{"id":"h","cap":"sigmoid","bias_shape":[]}],"edges":[{"from":"x","to":"h","op":"hadamard"}]})"),
        ParseError);
}

TEST_CASE("a syntactically fine but cyclic document loads and then fails validation") {
    const std::string text = R"({
      "inputs": [{"id":"x","shape":[]}],
      "nodes": [
        {"id":"a","cap":"sigmoid","bias_shape":[]},
        {"id":"b","cap":"sigmoid","bias_shape":[]}
      ],
      "edges": [
        {"from":"x","to":"a","op":"scalar_mult","weight_shape":[]},
        {"from":"a","to":"b","op":"scalar_mult","weight_shape":[]},
        {"from":"b","to":"a","op":"scalar_mult","weight_shape":[]}
      ]
    })";
    const CapsuleGraph g = load_graph_json(text);
    CHECK_FALSE(validate(g).ok());
}

TEST_CASE("derivation documents round trip") {
    const Derivation d = derive(fixtures().at("arm_merge"));
    const std::string text = save_derivation_json(d);
    const Derivation loaded = load_derivation_json(text);
    CHECK(save_derivation_json(loaded) == text);
    CHECK(is_isomorphic(replay(loaded), fixtures().at("arm_merge")));

    CHECK_THROWS_AS(load_derivation_json(R"({"steps":[{"rule":"variable","node":"x","subset":[]}]})"),
                    ParseError);
    CHECK_THROWS_AS(load_derivation_json(R"({"steps":[{"rule":"growth","node":"h"}]})"), ParseError);
    CHECK_THROWS_AS(load_derivation_json(R"({"steps":[{"rule":"mitosis","node":"h","subset":["x"]}]})"),
                    ParseError);
    CHECK_THROWS_AS(load_derivation_json(R"({"steps":"zap"})"), ParseError);
}

TEST_CASE("value documents bind against shapes") {
    const auto raw = load_values_json(R"({"x":[1.0,2.0],"y":[0.5]})");
    const auto bound = bind_values(raw, {{"x", Shape{2}}, {"y", Shape{}}});
    CHECK(bound.at("x")[1] == 2.0);
    CHECK(bound.at("y").value() == 0.5);

    CHECK_THROWS_AS(bind_values(raw, {{"x", Shape{2}}}), InvalidGraph);             // extra y
    CHECK_THROWS_AS(bind_values(raw, {{"x", Shape{3}}, {"y", Shape{}}}), ShapeMismatch);
    CHECK_THROWS_AS(bind_values({}, {{"x", Shape{2}}}), MissingInput);
    CHECK_THROWS_AS(load_values_json(R"({"x":"nope"})"), ParseError);

    ValueMap vm;
    vm.outputs.emplace("x", Tensor({2}, {1.0, 2.0}));
    const std::string text = save_values_json(vm.outputs);
    CHECK(text.find("\"shape\"") != std::string::npos);
    CHECK(text.find("\"data\"") != std::string::npos);
}

TEST_CASE("dataset csv round trips against a graph") {
    const CapsuleGraph g = fixtures().at("two_input_neuron");
    Dataset data;
    data.samples.push_back({{{"x1", Tensor::scalar(0.0)}, {"x2", Tensor::scalar(1.0)}},
                            {{"h1", Tensor::scalar(1.0)}}});
    data.samples.push_back({{{"x1", Tensor::scalar(1.0)}, {"x2", Tensor::scalar(0.25)}},
                            {{"h1", Tensor::scalar(0.0)}}});
    const std::string text = save_dataset_csv(data);
    CHECK(text.rfind("in:x1:0,in:x2:0,out:h1:0\n", 0) == 0);

    const Dataset loaded = load_dataset_csv(text, g);
    REQUIRE(loaded.samples.size() == 2);
    CHECK(loaded.samples[1].inputs.at("x2").value() == 0.25);
    CHECK(loaded.samples[0].targets.at("h1").value() == 1.0);
}

TEST_CASE("dataset csv rejects malformed documents") {
    const CapsuleGraph g = fixtures().at("two_input_neuron");
    CHECK_THROWS_AS(load_dataset_csv("", g), ParseError);
    CHECK_THROWS_AS(load_dataset_csv("in:x1:0,out:h1:0\n0,1\n", g), ParseError);           // x2 missing
    CHECK_THROWS_AS(load_dataset_csv("in:x1:0,in:x2:0,out:h1:0\n0,1\n", g), ParseError);   // short row
    CHECK_THROWS_AS(load_dataset_csv("in:x1:0,in:x2:0,out:h1:0\n0,1,zap\n", g), ParseError);
    CHECK_THROWS_AS(load_dataset_csv("in:x1:0,in:x1:0,in:x2:0,out:h1:0\n0,0,1,1\n", g), ParseError);
    CHECK_THROWS_AS(load_dataset_csv("in:x1:0,in:x2:0,in:q:0,out:h1:0\n0,0,1,1\n", g), ParseError);
    CHECK_THROWS_AS(load_dataset_csv("in:x1:9,in:x2:0,out:h1:0\n0,0,1\n", g), ParseError); // bad index
}

TEST_CASE("history csv is a stable golden format") {
    CHECK(save_history_csv({0.5, 0.25}) == "epoch,mean_loss\n1,0.5\n2,0.25\n");
    CHECK(save_history_csv({}) == "epoch,mean_loss\n");
}

TEST_CASE("dot export is deterministic and symbol annotated") {
    const CapsuleGraph g = fixtures().at("cnn_path");
    const std::string dot = export_dot(g);
    CHECK(dot == export_dot(g));
    CHECK(dot.rfind("digraph capsnet {", 0) == 0);
    CHECK(dot.find("\"x\" [shape=box];") != std::string::npos);
    CHECK(dot.find("∗") != std::string::npos); // convolution
    CHECK(dot.find("→") != std::string::npos); // identity transfer
    CHECK(dot.find("◁") != std::string::npos); // reshape
    CHECK(dot.find("×") != std::string::npos); // matrix multiplication
    CHECK(dot.find("\"x\" -> \"h1\"") != std::string::npos);
}

} // TEST_SUITE
