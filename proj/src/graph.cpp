#include "capsnet/graph.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace capsnet {

bool op_requires_weight(OpKind kind) {
    switch (kind) {
        case OpKind::IdentityTransfer:
        case OpKind::Reshape:
            return false;
        case OpKind::ScalarMult:
        case OpKind::MatMul:
        case OpKind::Conv2D:
            return true;
    }
    return false;
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::IdentityTransfer: return "identity_transfer";
        case OpKind::ScalarMult: return "scalar_mult";
        case OpKind::MatMul: return "matmul";
        case OpKind::Conv2D: return "conv2d";
        case OpKind::Reshape: return "reshape";
    }
    return "?";
}

const char* cap_name(CapKind kind) {
    switch (kind) {
        case CapKind::Identity: return "identity";
        case CapKind::Sigmoid: return "sigmoid";
        case CapKind::Tanh: return "tanh";
        case CapKind::ReLU: return "relu";
        case CapKind::Softmax: return "softmax";
        case CapKind::Squash: return "squash";
        case CapKind::Downsample: return "downsample";
    }
    return "?";
}

bool CapsuleGraph::has_node(const std::string& id) const {
    return find_input(id) != nullptr || find_node(id) != nullptr;
}

const InputNode* CapsuleGraph::find_input(const std::string& id) const {
    for (const auto& n : inputs)
        if (n.id == id) return &n;
    return nullptr;
}

const CapsuleNode* CapsuleGraph::find_node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const Edge* CapsuleGraph::find_edge(const std::string& from, const std::string& to) const {
    for (const auto& e : edges)
        if (e.from == from && e.to == to) return &e;
    return nullptr;
}

bool CapsuleGraph::fully_weighted() const {
    for (const auto& e : edges)
        if (op_requires_weight(e.op.kind) && !e.weight.has_value()) return false;
    return true;
}

std::vector<const Edge*> in_edges_sorted(const CapsuleGraph& g, const std::string& id) {
    std::vector<const Edge*> out;
    for (const auto& e : g.edges)
        if (e.to == id) out.push_back(&e);
    std::sort(out.begin(), out.end(), [](const Edge* a, const Edge* b) { return a->from < b->from; });
    return out;
}

std::vector<const Edge*> out_edges_sorted(const CapsuleGraph& g, const std::string& id) {
    std::vector<const Edge*> out;
    for (const auto& e : g.edges)
        if (e.from == id) out.push_back(&e);
    std::sort(out.begin(), out.end(), [](const Edge* a, const Edge* b) { return a->to < b->to; });
    return out;
}

namespace {

bool valid_shape(const Shape& s) {
    if (s.size() > 4) return false;
    for (std::size_t e : s)
        if (e == 0) return false;
    return true;
}

// Kahn's algorithm with a lexicographic min-heap; the leftover ids on a
// cycle are reported through `cycle`.
std::vector<std::string> topo_order_impl(const CapsuleGraph& g, std::vector<std::string>* cycle) {
    std::map<std::string, std::size_t> indeg;
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& n : g.inputs) indeg[n.id];
    for (const auto& n : g.nodes) indeg[n.id];
    for (const auto& e : g.edges) {
        ++indeg[e.to];
        succ[e.from].push_back(e.to);
    }
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, d] : indeg)
        if (d == 0) ready.push(id);
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& s : succ[id])
            if (--indeg[s] == 0) ready.push(s);
    }
    if (order.size() != indeg.size() && cycle) {
        // Every stuck node has a stuck predecessor, so walking
        // predecessors from any stuck node must revisit one; the ids
        // between the two visits form a directed cycle.
        std::unordered_set<std::string> done(order.begin(), order.end());
        std::map<std::string, std::string> stuck_pred;
        for (const auto& e : g.edges)
            if (!done.count(e.from) && !done.count(e.to)) stuck_pred[e.to] = e.from;
        std::string cur;
        for (const auto& [id, d] : indeg)
            if (!done.count(id) && stuck_pred.count(id)) { cur = id; break; }
        std::vector<std::string> path;
        std::unordered_map<std::string, std::size_t> pos;
        while (!pos.count(cur)) {
            pos[cur] = path.size();
            path.push_back(cur);
            cur = stuck_pred.at(cur);
        }
        cycle->assign(path.begin() + static_cast<std::ptrdiff_t>(pos[cur]), path.end());
        std::sort(cycle->begin(), cycle->end());
    }
    return order;
}

// Output shape of one capsule node given its predecessors' shapes.
// Appends node-local problems to `problems`; returns the recovery shape
// (the declared bias-implied output) so downstream nodes can still be
// checked.
Shape node_output_shape(const CapsuleGraph& g, const CapsuleNode& node,
                        const std::map<std::string, Shape>& known,
                        std::vector<std::string>& problems) {
    const Shape bias_shape = node.bias.shape();
    std::optional<Shape> contrib;
    std::string contrib_edge;
    for (const Edge* e : in_edges_sorted(g, node.id)) {
        auto it = known.find(e->from);
        if (it == known.end()) continue; // endpoint problem reported elsewhere
        const Shape& src = it->second;
        Shape cshape;
        switch (e->op.kind) {
            case OpKind::IdentityTransfer:
            case OpKind::ScalarMult:
                cshape = src;
                break;
            case OpKind::MatMul: {
                if (!e->weight_shape || e->weight_shape->size() != 2) {
                    problems.push_back("edge " + e->from + "->" + e->to + ": matmul needs a rank-2 weight shape");
                    continue;
                }
                const Shape& w = *e->weight_shape;
                if (src.size() == 1 && src[0] == w[1]) {
                    cshape = {w[0]};
                } else if (src.size() == 2 && src[0] == w[1]) {
                    cshape = {w[0], src[1]};
                } else {
                    problems.push_back("edge " + e->from + "->" + e->to + ": weight " + shape_str(w) +
                                       " cannot multiply source " + shape_str(src));
                    continue;
                }
                break;
            }
            case OpKind::Conv2D: {
                if (!e->weight_shape || e->weight_shape->size() != 4) {
                    problems.push_back("edge " + e->from + "->" + e->to + ": conv2d needs a rank-4 kernel shape");
                    continue;
                }
                const Shape& w = *e->weight_shape;
                if (src.size() != 3 || src[0] != w[1] || w[2] > src[1] || w[3] > src[2]) {
                    problems.push_back("edge " + e->from + "->" + e->to + ": kernels " + shape_str(w) +
                                       " cannot convolve source " + shape_str(src));
                    continue;
                }
                cshape = {w[0], src[1] - w[2] + 1, src[2] - w[3] + 1};
                break;
            }
            case OpKind::Reshape: {
                if (shape_size(e->op.reshape_target) != shape_size(src)) {
                    problems.push_back("edge " + e->from + "->" + e->to + ": reshape target " +
                                       shape_str(e->op.reshape_target) + " changes element count of " +
                                       shape_str(src));
                    continue;
                }
                cshape = e->op.reshape_target;
                break;
            }
        }
        if (!contrib) {
            contrib = cshape;
            contrib_edge = e->from + "->" + e->to;
        } else if (!shapes_equal(*contrib, cshape)) {
            problems.push_back("node " + node.id + ": edge " + e->from + "->" + e->to + " contributes " +
                               shape_str(cshape) + " but edge " + contrib_edge + " contributes " +
                               shape_str(*contrib));
        }
    }
    if (!contrib) return bias_shape;

    if (node.cap.kind == CapKind::Downsample) {
        const Shape& pre = *contrib;
        const std::size_t s = node.cap.window;
        if (pre.size() != 3 || s == 0 || pre[1] % s != 0 || pre[2] % s != 0) {
            problems.push_back("node " + node.id + ": downsample window " + std::to_string(s) +
                               " does not divide incoming shape " + shape_str(pre));
            return bias_shape;
        }
        Shape out = {pre[0], pre[1] / s, pre[2] / s};
        if (!shapes_equal(out, bias_shape)) {
            problems.push_back("node " + node.id + ": bias shape " + shape_str(bias_shape) +
                               " does not match downsampled shape " + shape_str(out));
        }
        return out;
    }
    if (!shapes_equal(*contrib, bias_shape)) {
        problems.push_back("node " + node.id + ": bias shape " + shape_str(bias_shape) +
                           " does not match contribution " + shape_str(*contrib) + " from edge " +
                           contrib_edge);
        return bias_shape;
    }
    if (node.cap.kind == CapKind::Softmax && contrib->size() != 1) {
        problems.push_back("node " + node.id + ": softmax requires a rank-1 input, got " + shape_str(*contrib));
    }
    return *contrib;
}

std::map<std::string, Shape> infer_shapes_impl(const CapsuleGraph& g, std::vector<std::string>* collect) {
    std::map<std::string, Shape> shapes;
    for (const auto& n : g.inputs) shapes[n.id] = n.shape;
    for (const auto& id : topo_order_impl(g, nullptr)) {
        const CapsuleNode* node = g.find_node(id);
        if (!node) continue;
        std::vector<std::string> problems;
        Shape out = node_output_shape(g, *node, shapes, problems);
        if (!problems.empty()) {
            if (!collect) throw ShapeConflict(problems.front());
            collect->insert(collect->end(), problems.begin(), problems.end());
        }
        shapes[id] = std::move(out);
    }
    return shapes;
}

} // namespace

ValidationReport validate(const CapsuleGraph& g) {
    ValidationReport report;
    auto flag = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

    if (g.vertex_count() == 0) {
        flag("graph has no nodes");
        return report;
    }

    std::set<std::string> ids;
    for (const auto& n : g.inputs) {
        if (n.id.empty()) flag("input node with empty id");
        if (!ids.insert(n.id).second) flag("duplicate node id " + n.id);
        if (!valid_shape(n.shape)) flag("input " + n.id + " has illegal shape " + shape_str(n.shape));
    }
    for (const auto& n : g.nodes) {
        if (n.id.empty()) flag("capsule node with empty id");
        if (!ids.insert(n.id).second) flag("duplicate node id " + n.id);
        if (n.cap.kind == CapKind::Downsample && n.cap.window == 0)
            flag("node " + n.id + ": downsample window must be >= 1");
    }

    bool endpoints_ok = true;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : g.edges) {
        const std::string tag = "edge " + e.from + "->" + e.to;
        if (!ids.count(e.from) || !ids.count(e.to)) {
            flag(tag + ": unknown endpoint");
            endpoints_ok = false;
            continue;
        }
        if (e.from == e.to) flag(tag + ": self loop");
        if (!seen.insert({e.from, e.to}).second) flag(tag + ": duplicate edge");
        if (g.find_input(e.to)) flag(tag + ": input node " + e.to + " cannot have incoming edges");
        if (op_requires_weight(e.op.kind)) {
            if (!e.weight_shape) {
                flag(tag + ": " + op_name(e.op.kind) + " requires a declared weight shape");
            } else {
                if (!valid_shape(*e.weight_shape))
                    flag(tag + ": illegal weight shape " + shape_str(*e.weight_shape));
                std::size_t want = e.op.kind == OpKind::ScalarMult ? 0 : e.op.kind == OpKind::MatMul ? 2 : 4;
                if (e.weight_shape->size() != want)
                    flag(tag + ": " + op_name(e.op.kind) + " weight must have rank " + std::to_string(want) +
                         ", got " + shape_str(*e.weight_shape));
                if (e.weight && !shapes_equal(e.weight->shape(), *e.weight_shape))
                    flag(tag + ": weight tensor shape " + shape_str(e.weight->shape()) +
                         " does not match declared " + shape_str(*e.weight_shape));
            }
        } else {
            if (e.weight || e.weight_shape) flag(tag + ": " + op_name(e.op.kind) + " takes no weight");
            if (e.op.kind == OpKind::Reshape && !valid_shape(e.op.reshape_target))
                flag(tag + ": illegal reshape target " + shape_str(e.op.reshape_target));
        }
    }

    for (const auto& n : g.nodes) {
        bool has_in = false;
        for (const auto& e : g.edges)
            if (e.to == n.id) { has_in = true; break; }
        if (!has_in) flag("capsule node " + n.id + " has no incoming edge");
    }

    std::vector<std::string> cycle;
    topo_order_impl(g, &cycle);
    if (!cycle.empty()) {
        std::string msg = "cycle through nodes:";
        for (const auto& id : cycle) msg += " " + id;
        flag(msg);
    }

    // Weak connectivity via union-find over ids.
    if (endpoints_ok) {
        std::map<std::string, std::string> parent;
        for (const auto& id : ids) parent[id] = id;
        std::function<std::string(const std::string&)> find = [&](const std::string& x) -> std::string {
            std::string r = x;
            while (parent[r] != r) r = parent[r];
            parent[x] = r;
            return r;
        };
        for (const auto& e : g.edges) parent[find(e.from)] = find(e.to);
        std::set<std::string> roots;
        for (const auto& id : ids) roots.insert(find(id));
        if (roots.size() > 1) {
            std::string msg = "graph is not weakly connected; components rooted at:";
            for (const auto& r : roots) msg += " " + r;
            flag(msg);
        }
    }

    if (report.ok()) infer_shapes_impl(g, &report.violations);
    return report;
}

NodeClasses classify(const CapsuleGraph& g) {
    ValidationReport report = validate(g);
    if (!report.ok()) throw InvalidGraph("classify requires a valid graph: " + report.violations.front());
    NodeClasses cls;
    std::unordered_set<std::string> with_out;
    for (const auto& e : g.edges) with_out.insert(e.from);
    for (const auto& n : g.inputs) cls.inputs.push_back(n.id);
    for (const auto& n : g.nodes) {
        if (with_out.count(n.id))
            cls.hidden.push_back(n.id);
        else
            cls.outputs.push_back(n.id);
    }
    std::sort(cls.inputs.begin(), cls.inputs.end());
    std::sort(cls.hidden.begin(), cls.hidden.end());
    std::sort(cls.outputs.begin(), cls.outputs.end());
    return cls;
}

std::vector<std::string> topo_order(const CapsuleGraph& g) {
    std::vector<std::string> cycle;
    std::vector<std::string> order = topo_order_impl(g, &cycle);
    if (!cycle.empty()) {
        std::string msg = "cycle through nodes:";
        for (const auto& id : cycle) msg += " " + id;
        throw CycleDetected(msg);
    }
    return order;
}

std::map<std::string, Shape> infer_shapes(const CapsuleGraph& g) {
    for (const auto& e : g.edges) {
        if (!g.has_node(e.from) || !g.has_node(e.to))
            throw InvalidGraph("edge " + e.from + "->" + e.to + ": unknown endpoint");
    }
    topo_order(g); // throws CycleDetected
    return infer_shapes_impl(g, nullptr);
}

} // namespace capsnet
