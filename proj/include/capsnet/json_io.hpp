#pragma once

#include <string>

#include "capsnet/generation.hpp"
#include "capsnet/trainer.hpp"

namespace capsnet {

// Graph definition document. Inputs, nodes and edges are emitted in
// sorted order so repeated saves are byte-identical; loading is strict
// and rejects unknown keys.
std::string save_graph_json(const CapsuleGraph& g);
CapsuleGraph load_graph_json(const std::string& text);

// Derivation document: ordered step array with rule tag, subset ids and
// the introduced node id.
std::string save_derivation_json(const Derivation& d);
Derivation load_derivation_json(const std::string& text);

// Per-node flat value arrays, e.g. {"x": [1.0, 2.0]}.
std::map<std::string, std::vector<double>> load_values_json(const std::string& text);

// Evaluation results: {"node": {"shape": [...], "data": [...]}}.
std::string save_values_json(const std::map<std::string, Tensor>& values);

// Binds raw value arrays to tensors of the given shapes; every key in
// `shapes` must be present and exactly sized.
std::map<std::string, Tensor> bind_values(const std::map<std::string, std::vector<double>>& raw,
                                          const std::map<std::string, Shape>& shapes);

// Dataset CSV with header columns in:<node>:<flat-index> then
// out:<node>:<flat-index>; one row per sample.
Dataset load_dataset_csv(const std::string& text, const CapsuleGraph& g);
std::string save_dataset_csv(const Dataset& data);

// "epoch,mean_loss" rows.
std::string save_history_csv(const std::vector<double>& history);

// GraphViz export; node ids label the vertices, edges carry the
// weighting-op symbol.
std::string export_dot(const CapsuleGraph& g);

} // namespace capsnet
