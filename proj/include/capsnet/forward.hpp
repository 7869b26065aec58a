#pragma once

#include <map>
#include <string>

#include "capsnet/graph.hpp"

namespace capsnet {

// Outputs and total inputs recorded by an evaluation. `pre_activations`
// has one entry per capsule node; `outputs` covers every node. For
// Downsample capsules the recorded total input already includes the
// post-window bias add, so it equals the node output.
struct ValueMap {
    std::map<std::string, Tensor> outputs;
    std::map<std::string, Tensor> pre_activations;
};

// Applies a capsule function to a total-input tensor.
Tensor apply_capsule(const CapsuleFn& cap, const Tensor& u);

// Evaluates the graph: input nodes pass their tensors through, every
// capsule node combines its weighted predecessors (lexicographic edge
// order), adds its bias, and applies its capsule function.
ValueMap eval(const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs);

// Wrappers for the path-shaped models; they additionally check each
// stage's output shape against infer_shapes.
ValueMap eval_mlp_path(const CapsuleGraph& g, const Tensor& input);
ValueMap eval_cnn_path(const CapsuleGraph& g, const Tensor& input);

} // namespace capsnet
