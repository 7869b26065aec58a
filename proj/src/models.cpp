#include "capsnet/models.hpp"

#include "capsnet/generation.hpp"

namespace capsnet {

MlpSpec default_mlp_spec() {
    return MlpSpec{{5, 7, 7, 7, 4}, CapsuleFn::sigmoid(), CapsuleFn::sigmoid()};
}

CnnSpec default_cnn_spec() {
    return CnnSpec{};
}

CapsuleGraph build_mlp(const MlpSpec& spec) {
    if (spec.widths.size() < 2) throw InvalidSpec("build_mlp: at least two layer widths required");
    for (std::size_t w : spec.widths)
        if (w == 0) throw InvalidSpec("build_mlp: layer widths must be positive");

    CapsuleGraph g;
    g.inputs.push_back({"x", {spec.widths[0]}});
    std::string prev = "x";
    for (std::size_t layer = 1; layer < spec.widths.size(); ++layer) {
        const bool last = layer + 1 == spec.widths.size();
        const std::string id = last ? "o" : "h" + std::to_string(layer);
        g.nodes.push_back({id, last ? spec.output : spec.hidden, Tensor::zeros({spec.widths[layer]})});
        g.edges.push_back({prev, id, WeightingOp::matmul(),
                           Shape{spec.widths[layer], spec.widths[layer - 1]}, std::nullopt});
        prev = id;
    }
    return g;
}

CapsuleGraph build_cnn(const CnnSpec& spec) {
    if (spec.input_shape.size() != 3) throw InvalidSpec("build_cnn: input shape must be [c,h,w]");
    if (spec.classes == 0) throw InvalidSpec("build_cnn: class count must be positive");

    auto conv_out = [](const Shape& in, const ConvStage& stage) -> Shape {
        if (stage.kernels == 0 || stage.kernel_size == 0)
            throw InvalidSpec("build_cnn: kernel count and size must be positive");
        if (stage.kernel_size > in[1] || stage.kernel_size > in[2])
            throw InvalidSpec("build_cnn: kernel size " + std::to_string(stage.kernel_size) +
                              " exceeds feature map " + shape_str(in));
        return {stage.kernels, in[1] - stage.kernel_size + 1, in[2] - stage.kernel_size + 1};
    };
    auto pool_out = [](const Shape& in, std::size_t window) -> Shape {
        if (window == 0 || in[1] % window != 0 || in[2] % window != 0)
            throw InvalidSpec("build_cnn: window " + std::to_string(window) + " does not divide feature map " +
                              shape_str(in));
        return {in[0], in[1] / window, in[2] / window};
    };

    const Shape s1 = conv_out(spec.input_shape, spec.stage1);
    const Shape s2 = pool_out(s1, spec.stage1.window);
    const Shape s3 = conv_out(s2, spec.stage2);
    const Shape s4 = pool_out(s3, spec.stage2.window);
    const Shape flat = {shape_size(s4)};

    CapsuleGraph g;
    g.inputs.push_back({"x", spec.input_shape});
    g.nodes.push_back({"h1", CapsuleFn::relu(), Tensor::zeros(s1)});
    g.nodes.push_back({"h2", CapsuleFn::downsample(spec.stage1.window), Tensor::zeros(s2)});
    g.nodes.push_back({"h3", CapsuleFn::relu(), Tensor::zeros(s3)});
    g.nodes.push_back({"h4", CapsuleFn::downsample(spec.stage2.window), Tensor::zeros(s4)});
    g.nodes.push_back({"h5", CapsuleFn::identity(), Tensor::zeros(flat)});
    g.nodes.push_back({"o", CapsuleFn::softmax(), Tensor::zeros({spec.classes})});

    g.edges.push_back({"x", "h1", WeightingOp::conv2d(),
                       Shape{spec.stage1.kernels, spec.input_shape[0], spec.stage1.kernel_size,
                             spec.stage1.kernel_size},
                       std::nullopt});
    g.edges.push_back({"h1", "h2", WeightingOp::identity_transfer(), std::nullopt, std::nullopt});
    g.edges.push_back({"h2", "h3", WeightingOp::conv2d(),
                       Shape{spec.stage2.kernels, spec.stage1.kernels, spec.stage2.kernel_size,
                             spec.stage2.kernel_size},
                       std::nullopt});
    g.edges.push_back({"h3", "h4", WeightingOp::identity_transfer(), std::nullopt, std::nullopt});
    g.edges.push_back({"h4", "h5", WeightingOp::reshape(flat), std::nullopt, std::nullopt});
    g.edges.push_back({"h5", "o", WeightingOp::matmul(), Shape{spec.classes, flat[0]}, std::nullopt});
    return g;
}

std::map<std::string, CapsuleGraph> fixtures() {
    std::map<std::string, CapsuleGraph> out;

    out.emplace("trivial", apply_variable("x1"));

    const ScalarNet one_in = apply_growth(apply_variable("x1"), {"x1"}, "h1");
    out.emplace("single_neuron", one_in);
    out.emplace("chain3", apply_growth(one_in, {"h1"}, "h2"));
    out.emplace("fan2", apply_growth(one_in, {"x1"}, "h2"));
    out.emplace("triangle", apply_growth(one_in, {"x1", "h1"}, "h2"));

    const ScalarNet two_in = apply_neuron({"x1", "x2"}, "h1");
    out.emplace("two_input_neuron", two_in);
    const std::vector<std::vector<std::string>> subsets = {
        {"x1"}, {"x2"}, {"h1"}, {"x1", "x2"}, {"x1", "h1"}, {"x2", "h1"}, {"x1", "x2", "h1"}};
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        std::string name = "grow2_";
        for (const auto& id : subsets[i]) name += id;
        out.emplace(name, apply_growth(two_in, subsets[i], "h2"));
    }

    const ScalarNet arm_a = apply_growth(apply_variable("x1"), {"x1"}, "h1");
    const ScalarNet arm_b = apply_growth(apply_variable("x2"), {"x2"}, "h2");
    out.emplace("arm_a", arm_a);
    out.emplace("arm_b", arm_b);
    out.emplace("arm_merge", apply_convergence({arm_a, arm_b}, {{"h1"}, {"h2"}}, "h3"));

    out.emplace("diamond",
                induced_network(Skeleton{{"x1", "a", "b", "c"},
                                         {{"x1", "a"}, {"x1", "b"}, {"a", "c"}, {"b", "c"}}}));

    // Tensor path exercising squash, tanh, softmax and scalar weighting.
    CapsuleGraph mixed;
    mixed.inputs.push_back({"x", {3}});
    mixed.nodes.push_back({"h1", CapsuleFn::squash(), Tensor::zeros({4})});
    mixed.nodes.push_back({"h2", CapsuleFn::tanh(), Tensor::zeros({3})});
    mixed.nodes.push_back({"o", CapsuleFn::softmax(), Tensor::zeros({3})});
    mixed.edges.push_back({"x", "h1", WeightingOp::matmul(), Shape{4, 3}, std::nullopt});
    mixed.edges.push_back({"h1", "h2", WeightingOp::matmul(), Shape{3, 4}, std::nullopt});
    mixed.edges.push_back({"h2", "o", WeightingOp::scalar_mult(), Shape{}, std::nullopt});
    out.emplace("mixed_caps", std::move(mixed));

    out.emplace("mlp_path", build_mlp(default_mlp_spec()));
    out.emplace("cnn_path", build_cnn(default_cnn_spec()));
    return out;
}

} // namespace capsnet
