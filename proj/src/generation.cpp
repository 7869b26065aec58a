#include "capsnet/generation.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace capsnet {

namespace {

std::vector<std::string> sorted_unique(const std::vector<std::string>& ids, const char* what) {
    if (ids.empty()) throw EmptySubset(std::string(what) + ": subset must be nonempty");
    std::vector<std::string> out = ids;
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
        throw InvalidGraph(std::string(what) + ": duplicate id in subset");
    return out;
}

std::vector<double> resolve_weights(const std::vector<double>& weights, std::size_t n, const char* what) {
    if (weights.empty()) return std::vector<double>(n, 1.0);
    if (weights.size() != n)
        throw InvalidSpec(std::string(what) + ": got " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(n) + " connections");
    return weights;
}

void attach_scalar_node(ScalarNet& net, const std::vector<std::string>& sorted_subset,
                        const std::string& node_id, const CapsuleFn& cap, double bias,
                        const std::vector<double>& weights) {
    net.nodes.push_back({node_id, cap, Tensor::scalar(bias)});
    for (std::size_t i = 0; i < sorted_subset.size(); ++i) {
        net.edges.push_back({sorted_subset[i], node_id, WeightingOp::scalar_mult(), Shape{},
                             Tensor::scalar(weights[i])});
    }
}

std::vector<std::string> all_ids(const CapsuleGraph& g) {
    std::vector<std::string> ids;
    for (const auto& n : g.inputs) ids.push_back(n.id);
    for (const auto& n : g.nodes) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

const char* rule_name(DerivationStep::Rule rule) {
    switch (rule) {
        case DerivationStep::Rule::Variable: return "variable";
        case DerivationStep::Rule::Neuron: return "neuron";
        case DerivationStep::Rule::Growth: return "growth";
        case DerivationStep::Rule::Convergence: return "convergence";
    }
    return "?";
}

ScalarNet apply_variable(const std::string& id) {
    if (id.empty()) throw InvalidGraph("apply_variable: empty id");
    ScalarNet net;
    net.inputs.push_back({id, Shape{}});
    return net;
}

ScalarNet apply_neuron(const std::vector<std::string>& input_ids, const std::string& node_id, CapsuleFn cap,
                       double bias, const std::vector<double>& weights) {
    const auto subset = sorted_unique(input_ids, "apply_neuron");
    for (const auto& id : subset) {
        if (id == node_id) throw NodeCollision("apply_neuron: node id " + node_id + " collides with an input");
    }
    ScalarNet net;
    for (const auto& id : subset) net.inputs.push_back({id, Shape{}});
    attach_scalar_node(net, subset, node_id, cap, bias, resolve_weights(weights, subset.size(), "apply_neuron"));
    return net;
}

ScalarNet apply_growth(const ScalarNet& base, const std::vector<std::string>& subset,
                       const std::string& node_id, CapsuleFn cap, double bias,
                       const std::vector<double>& weights) {
    const auto sorted = sorted_unique(subset, "apply_growth");
    if (base.has_node(node_id)) throw NodeCollision("apply_growth: node id " + node_id + " already exists");
    for (const auto& id : sorted) {
        if (!base.has_node(id)) throw InvalidGraph("apply_growth: subset id " + id + " is not in the base");
    }
    ScalarNet net = base;
    attach_scalar_node(net, sorted, node_id, cap, bias, resolve_weights(weights, sorted.size(), "apply_growth"));
    return net;
}

ScalarNet apply_convergence(const std::vector<ScalarNet>& bases,
                            const std::vector<std::vector<std::string>>& parts, const std::string& node_id,
                            CapsuleFn cap, double bias, const std::vector<double>& weights) {
    if (bases.size() < 2) throw InvalidSpec("apply_convergence: needs at least two base networks");
    if (parts.size() != bases.size())
        throw InvalidSpec("apply_convergence: one subset per base network required");

    std::set<std::string> seen;
    std::vector<std::string> merged_subset;
    for (std::size_t k = 0; k < bases.size(); ++k) {
        const auto part = sorted_unique(parts[k], "apply_convergence");
        for (const auto& id : all_ids(bases[k])) {
            if (!seen.insert(id).second)
                throw NotDisjoint("apply_convergence: base networks share node " + id);
        }
        for (const auto& id : part) {
            if (!bases[k].has_node(id))
                throw InvalidGraph("apply_convergence: subset id " + id + " is not in its base");
            merged_subset.push_back(id);
        }
    }
    if (seen.count(node_id)) throw NodeCollision("apply_convergence: node id " + node_id + " already exists");

    ScalarNet net;
    for (const auto& base : bases) {
        net.inputs.insert(net.inputs.end(), base.inputs.begin(), base.inputs.end());
        net.nodes.insert(net.nodes.end(), base.nodes.begin(), base.nodes.end());
        net.edges.insert(net.edges.end(), base.edges.begin(), base.edges.end());
    }
    std::sort(merged_subset.begin(), merged_subset.end());
    attach_scalar_node(net, merged_subset, node_id, cap, bias,
                       resolve_weights(weights, merged_subset.size(), "apply_convergence"));
    return net;
}

namespace {

// Weakly connected components over an id set, each sorted, ordered by
// smallest member.
std::vector<std::set<std::string>> weak_components(const std::set<std::string>& verts,
                                                   const std::vector<std::pair<std::string, std::string>>& arcs) {
    std::map<std::string, std::vector<std::string>> nbr;
    for (const auto& [a, b] : arcs) {
        nbr[a].push_back(b);
        nbr[b].push_back(a);
    }
    std::set<std::string> visited;
    std::vector<std::set<std::string>> comps;
    for (const auto& v : verts) {
        if (visited.count(v)) continue;
        std::set<std::string> comp;
        std::vector<std::string> stack{v};
        while (!stack.empty()) {
            std::string cur = stack.back();
            stack.pop_back();
            if (!comp.insert(cur).second) continue;
            visited.insert(cur);
            for (const auto& w : nbr[cur])
                if (verts.count(w) && !comp.count(w)) stack.push_back(w);
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

bool skeleton_acyclic(const std::set<std::string>& verts,
                      const std::vector<std::pair<std::string, std::string>>& arcs) {
    std::map<std::string, std::size_t> indeg;
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& v : verts) indeg[v];
    for (const auto& [a, b] : arcs) {
        ++indeg[b];
        succ[a].push_back(b);
    }
    std::queue<std::string> ready;
    for (const auto& [v, d] : indeg)
        if (d == 0) ready.push(v);
    std::size_t seen = 0;
    while (!ready.empty()) {
        std::string v = ready.front();
        ready.pop();
        ++seen;
        for (const auto& s : succ[v])
            if (--indeg[s] == 0) ready.push(s);
    }
    return seen == verts.size();
}

void derive_rec(const std::set<std::string>& verts,
                const std::vector<std::pair<std::string, std::string>>& arcs,
                std::vector<DerivationStep>& steps) {
    if (verts.size() == 1) {
        steps.push_back({DerivationStep::Rule::Variable, *verts.begin(), {}});
        return;
    }
    std::set<std::string> with_out;
    for (const auto& [a, b] : arcs) with_out.insert(a);
    std::string sink;
    for (const auto& v : verts) {
        if (!with_out.count(v)) { sink = v; break; } // smallest output node
    }
    std::vector<std::string> in_h;
    std::vector<std::pair<std::string, std::string>> rest;
    for (const auto& e : arcs) {
        if (e.second == sink)
            in_h.push_back(e.first);
        else
            rest.push_back(e);
    }
    std::sort(in_h.begin(), in_h.end());
    std::set<std::string> remaining = verts;
    remaining.erase(sink);

    const auto comps = weak_components(remaining, rest);
    if (comps.size() == 1) {
        derive_rec(remaining, rest, steps);
        steps.push_back({DerivationStep::Rule::Growth, sink, in_h});
    } else {
        for (const auto& comp : comps) {
            std::vector<std::pair<std::string, std::string>> inner;
            for (const auto& e : rest)
                if (comp.count(e.first)) inner.push_back(e);
            derive_rec(comp, inner, steps);
        }
        steps.push_back({DerivationStep::Rule::Convergence, sink, in_h});
    }
}

} // namespace

ScalarNet induced_network(const Skeleton& skeleton, const SkeletonAssignments& assign) {
    if (skeleton.vertices.empty()) throw InvalidGraph("induced_network: skeleton has no vertices");
    std::set<std::string> verts(skeleton.vertices.begin(), skeleton.vertices.end());
    if (verts.size() != skeleton.vertices.size()) throw InvalidGraph("induced_network: duplicate vertex id");
    std::set<std::string> with_in;
    for (const auto& [a, b] : skeleton.arcs) {
        if (!verts.count(a) || !verts.count(b)) throw InvalidGraph("induced_network: arc has unknown endpoint");
        with_in.insert(b);
    }
    if (!skeleton_acyclic(verts, skeleton.arcs)) throw CycleDetected("induced_network: skeleton has a cycle");
    if (weak_components(verts, skeleton.arcs).size() > 1)
        throw NotConnected("induced_network: skeleton is not weakly connected");

    ScalarNet net;
    for (const auto& v : skeleton.vertices) {
        if (!with_in.count(v)) {
            net.inputs.push_back({v, Shape{}});
        } else {
            auto cit = assign.caps.find(v);
            auto bit = assign.biases.find(v);
            net.nodes.push_back({v, cit != assign.caps.end() ? cit->second : CapsuleFn::sigmoid(),
                                 Tensor::scalar(bit != assign.biases.end() ? bit->second : 0.0)});
        }
    }
    for (const auto& arc : skeleton.arcs) {
        auto wit = assign.weights.find(arc);
        net.edges.push_back({arc.first, arc.second, WeightingOp::scalar_mult(), Shape{},
                             Tensor::scalar(wit != assign.weights.end() ? wit->second : 1.0)});
    }
    return net;
}

Derivation derive(const CapsuleGraph& g) {
    if (g.vertex_count() == 0) throw InvalidGraph("derive: graph has no nodes");
    std::set<std::string> verts;
    for (const auto& id : all_ids(g)) {
        if (!verts.insert(id).second) throw InvalidGraph("derive: duplicate node id " + id);
    }
    std::vector<std::pair<std::string, std::string>> arcs;
    for (const auto& e : g.edges) {
        if (!verts.count(e.from) || !verts.count(e.to))
            throw InvalidGraph("derive: edge " + e.from + "->" + e.to + " has unknown endpoint");
        arcs.emplace_back(e.from, e.to);
    }
    if (!skeleton_acyclic(verts, arcs)) throw CycleDetected("derive: graph has a cycle");
    if (weak_components(verts, arcs).size() > 1) throw NotConnected("derive: graph is not weakly connected");

    Derivation d;
    derive_rec(verts, arcs, d.steps);
    return d;
}

ScalarNet replay(const Derivation& d) {
    if (d.steps.empty()) throw InvalidGraph("replay: empty derivation");

    std::vector<ScalarNet> components;
    auto component_of = [&](const std::string& id) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < components.size(); ++i)
            if (components[i].has_node(id)) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };
    auto require_fresh = [&](const std::string& id, const char* what) {
        if (id.empty()) throw InvalidGraph(std::string(what) + ": empty id");
        if (component_of(id) >= 0) throw NodeCollision(std::string(what) + ": id " + id + " already exists");
    };

    for (const auto& step : d.steps) {
        switch (step.rule) {
            case DerivationStep::Rule::Variable: {
                if (!step.subset.empty()) throw InvalidGraph("replay: variable step carries a subset");
                require_fresh(step.node, "replay variable");
                components.push_back(apply_variable(step.node));
                break;
            }
            case DerivationStep::Rule::Neuron: {
                for (const auto& id : step.subset) require_fresh(id, "replay neuron");
                require_fresh(step.node, "replay neuron");
                components.push_back(apply_neuron(step.subset, step.node));
                break;
            }
            case DerivationStep::Rule::Growth: {
                if (step.subset.empty()) throw EmptySubset("replay: growth step with empty subset");
                require_fresh(step.node, "replay growth");
                std::set<std::ptrdiff_t> touched;
                for (const auto& id : step.subset) {
                    const auto c = component_of(id);
                    if (c < 0) throw InvalidGraph("replay: growth subset id " + id + " is unknown");
                    touched.insert(c);
                }
                if (touched.size() != 1)
                    throw InvalidGraph("replay: growth subset spans disjoint networks (needs convergence)");
                auto idx = static_cast<std::size_t>(*touched.begin());
                components[idx] = apply_growth(components[idx], step.subset, step.node);
                break;
            }
            case DerivationStep::Rule::Convergence: {
                if (step.subset.empty()) throw EmptySubset("replay: convergence step with empty subset");
                require_fresh(step.node, "replay convergence");
                std::map<std::ptrdiff_t, std::vector<std::string>> grouped;
                for (const auto& id : step.subset) {
                    const auto c = component_of(id);
                    if (c < 0) throw InvalidGraph("replay: convergence subset id " + id + " is unknown");
                    grouped[c].push_back(id);
                }
                if (grouped.size() < 2)
                    throw InvalidGraph("replay: convergence subset touches fewer than two networks");
                // Order bases by their smallest node id.
                std::vector<std::pair<std::string, std::ptrdiff_t>> order;
                for (const auto& [idx, part] : grouped)
                    order.emplace_back(all_ids(components[static_cast<std::size_t>(idx)]).front(), idx);
                std::sort(order.begin(), order.end());
                std::vector<ScalarNet> bases;
                std::vector<std::vector<std::string>> parts;
                std::vector<std::size_t> removed;
                for (const auto& [mn, idx] : order) {
                    bases.push_back(components[static_cast<std::size_t>(idx)]);
                    parts.push_back(grouped.at(idx));
                    removed.push_back(static_cast<std::size_t>(idx));
                }
                ScalarNet merged = apply_convergence(bases, parts, step.node);
                std::sort(removed.rbegin(), removed.rend());
                for (std::size_t idx : removed) components.erase(components.begin() + static_cast<std::ptrdiff_t>(idx));
                components.push_back(std::move(merged));
                break;
            }
        }
    }
    if (components.size() != 1)
        throw NotConnected("replay: derivation leaves " + std::to_string(components.size()) +
                           " disjoint networks");
    return components.front();
}

namespace {

std::string fresh_node_id(const CapsuleGraph& g) {
    for (std::size_t k = 1;; ++k) {
        std::string candidate = "h" + std::to_string(k);
        if (!g.has_node(candidate)) return candidate;
    }
}

} // namespace

EnumerationResult enumerate_growth(const ScalarNet& base, std::size_t steps, EnumSemantics semantics) {
    if (steps == 0) throw InvalidSpec("enumerate_growth: steps must be >= 1");
    if (base.vertex_count() == 0) throw InvalidGraph("enumerate_growth: empty base network");

    EnumerationResult result;
    std::unordered_set<std::string> seen;
    std::function<void(const ScalarNet&, std::size_t)> rec = [&](const ScalarNet& g, std::size_t depth) {
        if (depth == steps) {
            if (semantics == EnumSemantics::Iso) {
                if (!seen.insert(canonical_form(g)).second) return;
            }
            result.structures.push_back(g);
            return;
        }
        const auto ids = all_ids(g);
        if (ids.size() > 20) throw InvalidSpec("enumerate_growth: base too large to branch over");
        const std::string node = fresh_node_id(g);
        for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << ids.size()); ++mask) {
            std::vector<std::string> subset;
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (mask >> i & 1) subset.push_back(ids[i]);
            rec(apply_growth(g, subset, node), depth + 1);
        }
    };
    rec(base, 0);
    result.count = result.structures.size();
    return result;
}

namespace {

struct DenseGraph {
    int n = 0;
    std::vector<std::uint32_t> out; // adjacency masks
    std::vector<std::uint32_t> in;
    std::vector<int> base_color; // 0 input, 1 capsule
};

DenseGraph to_dense(const CapsuleGraph& g) {
    const auto ids = all_ids(g);
    if (ids.size() > 32) throw InvalidSpec("canonical_form: supports at most 32 nodes");
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);

    DenseGraph dg;
    dg.n = static_cast<int>(ids.size());
    dg.out.assign(ids.size(), 0);
    dg.in.assign(ids.size(), 0);
    dg.base_color.assign(ids.size(), 1);
    for (const auto& node : g.inputs) dg.base_color[static_cast<std::size_t>(index.at(node.id))] = 0;
    for (const auto& e : g.edges) {
        const int a = index.at(e.from), b = index.at(e.to);
        dg.out[static_cast<std::size_t>(a)] |= 1u << b;
        dg.in[static_cast<std::size_t>(b)] |= 1u << a;
    }
    return dg;
}

// 1-WL style refinement: re-rank vertices by (color, sorted out-neighbor
// colors, sorted in-neighbor colors) until the coloring stabilizes.
void refine(const DenseGraph& dg, std::vector<int>& color) {
    const auto n = static_cast<std::size_t>(dg.n);
    for (;;) {
        std::vector<std::vector<int>> sig(n);
        for (std::size_t v = 0; v < n; ++v) {
            auto& s = sig[v];
            s.push_back(color[v]);
            std::vector<int> outs, ins;
            for (std::size_t w = 0; w < n; ++w) {
                if (dg.out[v] >> w & 1) outs.push_back(color[w]);
                if (dg.in[v] >> w & 1) ins.push_back(color[w]);
            }
            std::sort(outs.begin(), outs.end());
            std::sort(ins.begin(), ins.end());
            s.push_back(-1);
            s.insert(s.end(), outs.begin(), outs.end());
            s.push_back(-2);
            s.insert(s.end(), ins.begin(), ins.end());
        }
        std::map<std::vector<int>, int> rank;
        for (const auto& s : sig) rank.emplace(s, 0);
        int next = 0;
        for (auto& [s, r] : rank) r = next++;
        std::vector<int> updated(n);
        for (std::size_t v = 0; v < n; ++v) updated[v] = rank.at(sig[v]);
        if (updated == color) return;
        color = std::move(updated);
    }
}

std::string labeling_key(const DenseGraph& dg, const std::vector<int>& color) {
    const auto n = static_cast<std::size_t>(dg.n);
    std::vector<int> vertex_at(n);
    for (std::size_t v = 0; v < n; ++v) vertex_at[static_cast<std::size_t>(color[v])] = static_cast<int>(v);
    std::string key;
    key.reserve(n + n * n + 1);
    for (std::size_t p = 0; p < n; ++p)
        key.push_back(dg.base_color[static_cast<std::size_t>(vertex_at[p])] ? 'c' : 'i');
    key.push_back('|');
    for (std::size_t p = 0; p < n; ++p) {
        const auto v = static_cast<std::size_t>(vertex_at[p]);
        for (std::size_t q = 0; q < n; ++q) {
            const auto w = static_cast<std::size_t>(vertex_at[q]);
            key.push_back(dg.out[v] >> w & 1 ? '1' : '0');
        }
    }
    return key;
}

// Individualization-refinement search for the lexicographically smallest
// adjacency key. Vertices with identical neighborhoods (twins) are
// interchangeable, so only one per twin class is branched on.
void canon_search(const DenseGraph& dg, std::vector<int> color, std::string& best) {
    refine(dg, color);
    const auto n = static_cast<std::size_t>(dg.n);

    int split_color = -1;
    std::vector<std::size_t> cell;
    for (int c = 0; c < dg.n && split_color < 0; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t v = 0; v < n; ++v)
            if (color[v] == c) members.push_back(v);
        if (members.size() > 1) {
            split_color = c;
            cell = std::move(members);
        }
    }
    if (split_color < 0) {
        std::string key = labeling_key(dg, color);
        if (best.empty() || key < best) best = std::move(key);
        return;
    }

    std::set<std::pair<std::uint32_t, std::uint32_t>> twins;
    for (std::size_t v : cell) {
        if (!twins.insert({dg.in[v], dg.out[v]}).second) continue;
        std::vector<int> branched(color.size());
        for (std::size_t w = 0; w < n; ++w) branched[w] = 2 * color[w];
        branched[v] = 2 * split_color - 1;
        canon_search(dg, std::move(branched), best);
    }
}

} // namespace

std::string canonical_form(const CapsuleGraph& g) {
    if (g.vertex_count() == 0) return "empty";
    const DenseGraph dg = to_dense(g);
    std::vector<int> color(dg.base_color);
    std::string best;
    canon_search(dg, std::move(color), best);
    return std::to_string(dg.n) + ";" + best;
}

bool is_isomorphic(const CapsuleGraph& a, const CapsuleGraph& b) {
    if (a.inputs.size() != b.inputs.size() || a.nodes.size() != b.nodes.size() ||
        a.edges.size() != b.edges.size())
        return false;
    return canonical_form(a) == canonical_form(b);
}

} // namespace capsnet
