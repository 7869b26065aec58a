#pragma once

#include <cstdint>
#include <vector>

#include "capsnet/backprop.hpp"

namespace capsnet {

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::MeanSquaredError;
};

struct Sample {
    std::map<std::string, Tensor> inputs;
    std::map<std::string, Tensor> targets;
};

struct Dataset {
    std::vector<Sample> samples;
};

// Glorot-uniform weights (r = sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic per seed. Edges are visited in (from,to) order.
CapsuleGraph init_params(const CapsuleGraph& g, std::uint64_t seed);

// One forward/backward/update round on a single sample; returns the new
// parameters and the pre-update loss.
std::pair<CapsuleGraph, double> sgd_step(const CapsuleGraph& g, const Sample& sample, double learning_rate,
                                         LossKind loss = LossKind::MeanSquaredError);

struct TrainResult {
    CapsuleGraph graph;
    std::vector<double> history; // mean loss per epoch
};

// Per-sample SGD with a seed-determined shuffle each epoch.
TrainResult train(const CapsuleGraph& g, const Dataset& data, const TrainConfig& config);

} // namespace capsnet
