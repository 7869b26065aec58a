#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "capsnet/forward.hpp"

namespace capsnet {

enum class LossKind {
    MeanSquaredError,
    SoftmaxCrossEntropy,
};

// Loss over the output nodes: one target per output node.
struct LossSpec {
    LossKind kind = LossKind::MeanSquaredError;
    std::map<std::string, Tensor> targets;
};

// Error signal at each capsule node's recorded total input.
struct SensitivityMap {
    std::map<std::string, Tensor> delta;
};

struct GradientSet {
    std::map<std::pair<std::string, std::string>, Tensor> weight_grads;
    std::map<std::string, Tensor> bias_grads;
};

// Sum of per-output losses. MSE is 0.5*|Y-T|^2; cross entropy is
// -sum(T*log Y) and expects Y to come from a softmax capsule.
double total_loss(const ValueMap& values, const LossSpec& loss);

// Reverse-mode sweep over the DAG in reverse topological order.
// Sensitivities are the bias gradients; weight gradients follow from the
// per-op adjoints.
std::pair<SensitivityMap, GradientSet> backward(const CapsuleGraph& g, const ValueMap& values,
                                                const LossSpec& loss);

// upstream * d cap/d u. Elementwise for Identity/Sigmoid/Tanh/ReLU, a
// full Jacobian product for Softmax and Squash, the window-mean adjoint
// (spread as 1/s^2) for Downsample.
Tensor cap_jacobian(const CapsuleFn& cap, const Tensor& u, const Tensor& upstream);

struct OpAdjoints {
    std::optional<Tensor> weight_grad;
    Tensor input_grad;
};

// Given the sensitivity arriving at an edge's head, the gradient with
// respect to the edge weight and the contribution to the source node.
OpAdjoints op_adjoints(const WeightingOp& op, const std::optional<Tensor>& weight, const Tensor& y_src,
                       const Tensor& delta);

// Central-difference verification: max relative error over every weight
// and bias entry, with |a-n| / max(|a|,|n|,1e-8).
double grad_check(const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs, const LossSpec& loss,
                  double epsilon = 1e-5);

} // namespace capsnet
