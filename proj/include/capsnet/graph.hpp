#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capsnet/tensor.hpp"

namespace capsnet {

// Per-edge tensor-weighting operation.
enum class OpKind {
    IdentityTransfer,
    ScalarMult,
    MatMul,
    Conv2D,
    Reshape,
};

struct WeightingOp {
    OpKind kind = OpKind::IdentityTransfer;
    Shape reshape_target; // Reshape only

    static WeightingOp identity_transfer() { return {OpKind::IdentityTransfer, {}}; }
    static WeightingOp scalar_mult() { return {OpKind::ScalarMult, {}}; }
    static WeightingOp matmul() { return {OpKind::MatMul, {}}; }
    static WeightingOp conv2d() { return {OpKind::Conv2D, {}}; }
    static WeightingOp reshape(Shape target) { return {OpKind::Reshape, std::move(target)}; }
};

bool op_requires_weight(OpKind kind);
const char* op_name(OpKind kind);

// Capsule function applied to a node's total input.
enum class CapKind {
    Identity,
    Sigmoid,
    Tanh,
    ReLU,
    Softmax,
    Squash,
    Downsample,
};

struct CapsuleFn {
    CapKind kind = CapKind::Identity;
    std::size_t window = 1; // Downsample only

    static CapsuleFn identity() { return {CapKind::Identity, 1}; }
    static CapsuleFn sigmoid() { return {CapKind::Sigmoid, 1}; }
    static CapsuleFn tanh() { return {CapKind::Tanh, 1}; }
    static CapsuleFn relu() { return {CapKind::ReLU, 1}; }
    static CapsuleFn softmax() { return {CapKind::Softmax, 1}; }
    static CapsuleFn squash() { return {CapKind::Squash, 1}; }
    static CapsuleFn downsample(std::size_t window) { return {CapKind::Downsample, window}; }
};

const char* cap_name(CapKind kind);

struct InputNode {
    std::string id;
    Shape shape;
};

struct CapsuleNode {
    std::string id;
    CapsuleFn cap;
    Tensor bias;
};

struct Edge {
    std::string from;
    std::string to;
    WeightingOp op;
    // Declared whenever the op takes a weight; the tensor itself may be
    // absent on a structural graph until the trainer initializes it.
    std::optional<Shape> weight_shape;
    std::optional<Tensor> weight;
};

// Weakly connected DAG of input nodes and capsule nodes. Immutable once
// validated; construction helpers live in the generation and model
// modules.
struct CapsuleGraph {
    std::vector<InputNode> inputs;
    std::vector<CapsuleNode> nodes;
    std::vector<Edge> edges;

    bool has_node(const std::string& id) const;
    const InputNode* find_input(const std::string& id) const;
    const CapsuleNode* find_node(const std::string& id) const;
    const Edge* find_edge(const std::string& from, const std::string& to) const;
    std::size_t vertex_count() const { return inputs.size() + nodes.size(); }

    // True when every weight-taking edge carries an actual tensor.
    bool fully_weighted() const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Checks every structural invariant and reports all violations found.
ValidationReport validate(const CapsuleGraph& g);

struct NodeClasses {
    std::vector<std::string> inputs;  // declared input nodes
    std::vector<std::string> hidden;  // capsule nodes with successors
    std::vector<std::string> outputs; // capsule nodes without successors
};

NodeClasses classify(const CapsuleGraph& g);

// Deterministic topological order, lexicographic tie-break.
std::vector<std::string> topo_order(const CapsuleGraph& g);

// Output shape of every node; throws ShapeConflict at the first
// inconsistent node in topological order.
std::map<std::string, Shape> infer_shapes(const CapsuleGraph& g);

// Incoming edges of `id`, sorted by source id. The fixed summation
// order for evaluation and gradient accumulation.
std::vector<const Edge*> in_edges_sorted(const CapsuleGraph& g, const std::string& id);
std::vector<const Edge*> out_edges_sorted(const CapsuleGraph& g, const std::string& id);

} // namespace capsnet
