#include "capsnet/forward.hpp"

#include <cmath>

namespace capsnet {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor softmax_rank1(const Tensor& u) {
    if (u.rank() != 1) throw ShapeMismatch("softmax requires a rank-1 tensor, got " + shape_str(u.shape()));
    double mx = u[0];
    for (std::size_t i = 1; i < u.size(); ++i) mx = std::max(mx, u[i]);
    std::vector<double> out(u.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = std::exp(u[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return Tensor(u.shape(), std::move(out));
}

Tensor squash_fn(const Tensor& u) {
    double sq = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) sq += u[i] * u[i];
    if (sq == 0.0) return Tensor::zeros(u.shape());
    const double norm = std::sqrt(sq);
    // (|u|^2 / (1+|u|^2)) * u/|u| == u * |u| / (1+|u|^2)
    return scale(u, norm / (1.0 + sq));
}

// Weighted contribution of one edge given the source output.
Tensor edge_apply(const Edge& e, const Tensor& y_src) {
    switch (e.op.kind) {
        case OpKind::IdentityTransfer:
            return y_src;
        case OpKind::ScalarMult:
            if (!e.weight) throw InvalidGraph("edge " + e.from + "->" + e.to + " has no weight tensor");
            return scale(y_src, e.weight->value());
        case OpKind::MatMul:
            if (!e.weight) throw InvalidGraph("edge " + e.from + "->" + e.to + " has no weight tensor");
            return matmul(*e.weight, y_src);
        case OpKind::Conv2D:
            if (!e.weight) throw InvalidGraph("edge " + e.from + "->" + e.to + " has no weight tensor");
            return conv2d(y_src, *e.weight);
        case OpKind::Reshape:
            return reshape(y_src, e.op.reshape_target);
    }
    throw InvalidGraph("unknown weighting operation");
}

} // namespace

Tensor apply_capsule(const CapsuleFn& cap, const Tensor& u) {
    switch (cap.kind) {
        case CapKind::Identity:
            return u;
        case CapKind::Sigmoid:
            return map(u, stable_sigmoid);
        case CapKind::Tanh:
            return map(u, [](double x) { return std::tanh(x); });
        case CapKind::ReLU:
            return map(u, [](double x) { return x > 0.0 ? x : 0.0; });
        case CapKind::Softmax:
            return softmax_rank1(u);
        case CapKind::Squash:
            return squash_fn(u);
        case CapKind::Downsample:
            return downsample(u, cap.window);
    }
    throw ShapeMismatch("unknown capsule function");
}

ValueMap eval(const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs) {
    ValidationReport report = validate(g);
    if (!report.ok()) throw InvalidGraph("eval requires a valid graph: " + report.violations.front());

    for (const auto& [id, t] : inputs) {
        if (!g.find_input(id)) throw InvalidGraph("value supplied for unknown input node " + id);
        (void)t;
    }

    ValueMap vm;
    for (const auto& in : g.inputs) {
        auto it = inputs.find(in.id);
        if (it == inputs.end()) throw MissingInput("no value supplied for input node " + in.id);
        if (!shapes_equal(it->second.shape(), in.shape)) {
            throw ShapeMismatch("input " + in.id + " expects shape " + shape_str(in.shape) + ", got " +
                                shape_str(it->second.shape()));
        }
        vm.outputs.emplace(in.id, it->second);
    }

    for (const auto& id : topo_order(g)) {
        const CapsuleNode* node = g.find_node(id);
        if (!node) continue;
        try {
            Tensor sum;
            bool first = true;
            for (const Edge* e : in_edges_sorted(g, id)) {
                Tensor contrib = edge_apply(*e, vm.outputs.at(e->from));
                sum = first ? std::move(contrib) : add(sum, contrib);
                first = false;
            }
            Tensor u, y;
            if (node->cap.kind == CapKind::Downsample) {
                // The bias lives after the window average; the recorded
                // total input is the tensor it is added to.
                u = add(downsample(sum, node->cap.window), node->bias);
                y = u;
            } else {
                u = add(sum, node->bias);
                y = apply_capsule(node->cap, u);
            }
            vm.pre_activations.emplace(id, std::move(u));
            vm.outputs.emplace(id, std::move(y));
        } catch (const NonFiniteValue& err) {
            throw NonFiniteValue("node " + id + ": " + err.what());
        }
    }
    return vm;
}

namespace {

ValueMap eval_path(const CapsuleGraph& g, const Tensor& input, const char* what) {
    if (g.inputs.size() != 1) throw InvalidGraph(std::string(what) + " expects exactly one input node");
    for (const auto& n : g.nodes) {
        if (in_edges_sorted(g, n.id).size() != 1 || out_edges_sorted(g, n.id).size() > 1)
            throw InvalidGraph(std::string(what) + " expects a simple path of capsules");
    }
    ValueMap vm = eval(g, {{g.inputs.front().id, input}});
    const auto shapes = infer_shapes(g);
    for (const auto& [id, shape] : shapes) {
        if (!shapes_equal(vm.outputs.at(id).shape(), shape)) {
            throw ShapeConflict("stage " + id + " produced " + shape_str(vm.outputs.at(id).shape()) +
                                ", expected " + shape_str(shape));
        }
    }
    return vm;
}

} // namespace

ValueMap eval_mlp_path(const CapsuleGraph& g, const Tensor& input) {
    return eval_path(g, input, "eval_mlp_path");
}

ValueMap eval_cnn_path(const CapsuleGraph& g, const Tensor& input) {
    return eval_path(g, input, "eval_cnn_path");
}

} // namespace capsnet
