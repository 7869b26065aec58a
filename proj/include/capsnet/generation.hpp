#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capsnet/graph.hpp"

namespace capsnet {

// Networks built by the generation rules are capsule graphs at scalar
// granularity: rank-0 tensors, scalar-multiplication edges.
using ScalarNet = CapsuleGraph;

// One rule application. A derivation is replayed as a sequence: variable
// and neuron steps open new disjoint networks, growth extends the one
// network containing its subset, convergence merges the networks its
// subset touches. The sequence is the post-order walk of the rule tree.
struct DerivationStep {
    enum class Rule { Variable, Neuron, Growth, Convergence };
    Rule rule = Rule::Variable;
    std::string node;                // the node the step introduces
    std::vector<std::string> subset; // sources wired into it (empty for Variable)
};

struct Derivation {
    std::vector<DerivationStep> steps;
};

const char* rule_name(DerivationStep::Rule rule);

// Rule of variable: the trivial one-input network.
ScalarNet apply_variable(const std::string& id);

// Rule of neuron: fresh inputs `input_ids` wired into a new node.
// Weights parallel the sorted subset; empty means all ones.
ScalarNet apply_neuron(const std::vector<std::string>& input_ids, const std::string& node_id,
                       CapsuleFn cap = CapsuleFn::sigmoid(), double bias = 0.0,
                       const std::vector<double>& weights = {});

// Rule of growth: wire a nonempty subset of an existing network into a
// new node.
ScalarNet apply_growth(const ScalarNet& base, const std::vector<std::string>& subset,
                       const std::string& node_id, CapsuleFn cap = CapsuleFn::sigmoid(), double bias = 0.0,
                       const std::vector<double>& weights = {});

// Rule of convergence: join >= 2 node-disjoint networks at a new node;
// parts[k] is the nonempty subset taken from bases[k].
ScalarNet apply_convergence(const std::vector<ScalarNet>& bases,
                            const std::vector<std::vector<std::string>>& parts, const std::string& node_id,
                            CapsuleFn cap = CapsuleFn::sigmoid(), double bias = 0.0,
                            const std::vector<double>& weights = {});

// Bare DAG skeleton plus optional per-node/per-edge assignments.
struct Skeleton {
    std::vector<std::string> vertices;
    std::vector<std::pair<std::string, std::string>> arcs;
};

struct SkeletonAssignments {
    std::map<std::string, CapsuleFn> caps;
    std::map<std::string, double> biases;
    std::map<std::pair<std::string, std::string>, double> weights;
};

// The scalar network a connected DAG induces: sources become inputs and
// every other vertex computes f(sum w*y + b).
ScalarNet induced_network(const Skeleton& skeleton, const SkeletonAssignments& assign = {});

// Constructive generation-theorem witness: peel the lexicographically
// smallest output node; growth if the remainder stays connected, else
// convergence over its components. replay(derive(g)) rebuilds g.
Derivation derive(const CapsuleGraph& g);

// Executes the steps, checking every rule precondition.
ScalarNet replay(const Derivation& d);

enum class EnumSemantics {
    Labeled, // one structure per derivation path
    Iso,     // deduplicated by canonical form
};

struct EnumerationResult {
    std::size_t count = 0;
    std::vector<ScalarNet> structures;
};

// All results of `steps` growth-rule applications on `base`. A labeled
// step from an m-node network branches over the 2^m - 1 nonempty
// subsets.
EnumerationResult enumerate_growth(const ScalarNet& base, std::size_t steps,
                                   EnumSemantics semantics = EnumSemantics::Labeled);

// Canonical string under node relabeling, with input nodes distinguished
// from capsule nodes. Capsule functions, biases, and weights are
// deliberately ignored: structure means connectivity.
std::string canonical_form(const CapsuleGraph& g);

bool is_isomorphic(const CapsuleGraph& a, const CapsuleGraph& b);

} // namespace capsnet
