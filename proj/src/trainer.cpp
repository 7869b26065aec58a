#include "capsnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capsnet/rng.hpp"

namespace capsnet {

namespace {

std::pair<std::size_t, std::size_t> fans(const Edge& e) {
    const Shape& w = *e.weight_shape;
    switch (e.op.kind) {
        case OpKind::ScalarMult:
            return {1, 1};
        case OpKind::MatMul:
            return {w[1], w[0]};
        case OpKind::Conv2D:
            return {w[1] * w[2] * w[3], w[0] * w[2] * w[3]};
        default:
            return {1, 1};
    }
}

} // namespace

CapsuleGraph init_params(const CapsuleGraph& g, std::uint64_t seed) {
    ValidationReport report = validate(g);
    if (!report.ok()) throw InvalidGraph("init_params requires a valid graph: " + report.violations.front());

    CapsuleGraph out = g;
    Rng rng(seed);

    std::vector<Edge*> weighted;
    for (auto& e : out.edges)
        if (op_requires_weight(e.op.kind)) weighted.push_back(&e);
    std::sort(weighted.begin(), weighted.end(), [](const Edge* a, const Edge* b) {
        return std::tie(a->from, a->to) < std::tie(b->from, b->to);
    });
    for (Edge* e : weighted) {
        const auto [fan_in, fan_out] = fans(*e);
        const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> data(shape_size(*e->weight_shape));
        for (double& v : data) v = rng.uniform(-r, r);
        e->weight = Tensor(*e->weight_shape, std::move(data));
    }
    for (auto& n : out.nodes) n.bias = Tensor::zeros(n.bias.shape());
    return out;
}

std::pair<CapsuleGraph, double> sgd_step(const CapsuleGraph& g, const Sample& sample, double learning_rate,
                                         LossKind loss_kind) {
    if (!(learning_rate > 0.0)) throw InvalidSpec("learning rate must be positive");

    const ValueMap values = eval(g, sample.inputs);
    const LossSpec loss{loss_kind, sample.targets};
    const double before = total_loss(values, loss);
    const auto [sens, grads] = backward(g, values, loss);

    CapsuleGraph out = g;
    for (auto& e : out.edges) {
        if (!e.weight) continue;
        auto it = grads.weight_grads.find({e.from, e.to});
        if (it != grads.weight_grads.end()) e.weight = add(*e.weight, scale(it->second, -learning_rate));
    }
    for (auto& n : out.nodes) {
        auto it = grads.bias_grads.find(n.id);
        if (it != grads.bias_grads.end()) n.bias = add(n.bias, scale(it->second, -learning_rate));
    }
    return {std::move(out), before};
}

TrainResult train(const CapsuleGraph& g, const Dataset& data, const TrainConfig& config) {
    if (!(config.learning_rate > 0.0)) throw InvalidSpec("learning rate must be positive");

    TrainResult result{g, {}};
    if (config.epochs == 0) return result;
    if (data.samples.empty()) throw InvalidSpec("dataset is empty");

    Rng rng(config.seed);
    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double sum = 0.0;
        for (std::size_t idx : order) {
            auto [updated, loss] = sgd_step(result.graph, data.samples[idx], config.learning_rate, config.loss);
            result.graph = std::move(updated);
            sum += loss;
        }
        result.history.push_back(sum / static_cast<double>(data.samples.size()));
    }
    return result;
}

} // namespace capsnet
