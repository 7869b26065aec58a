#include "capsnet/json_io.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace capsnet {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            throw ParseError(std::string(where) + ": unknown key \"" + key + "\"");
        }
    }
}

json parse(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError(std::string(what) + ": malformed JSON");
    return j;
}

Shape shape_from_json(const json& j, const char* where) {
    if (!j.is_array()) throw ParseError(std::string(where) + ": shape must be an array");
    Shape s;
    for (const auto& e : j) {
        if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0)
            throw ParseError(std::string(where) + ": shape extents must be positive integers");
        s.push_back(e.get<std::size_t>());
    }
    if (s.size() > 4) throw ParseError(std::string(where) + ": rank exceeds 4");
    return s;
}

std::vector<double> doubles_from_json(const json& j, const char* where) {
    if (!j.is_array()) throw ParseError(std::string(where) + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : j) {
        if (!e.is_number()) throw ParseError(std::string(where) + ": expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::string required_string(const json& obj, const char* key, const char* where) {
    if (!obj.contains(key) || !obj[key].is_string() || obj[key].get<std::string>().empty())
        throw ParseError(std::string(where) + ": missing or empty \"" + std::string(key) + "\"");
    return obj[key].get<std::string>();
}

CapKind cap_from_name(const std::string& name, const char* where) {
    for (CapKind k : {CapKind::Identity, CapKind::Sigmoid, CapKind::Tanh, CapKind::ReLU, CapKind::Softmax,
                      CapKind::Squash, CapKind::Downsample}) {
        if (name == cap_name(k)) return k;
    }
    throw ParseError(std::string(where) + ": unknown capsule function \"" + name + "\"");
}

OpKind op_from_name(const std::string& name, const char* where) {
    for (OpKind k : {OpKind::IdentityTransfer, OpKind::ScalarMult, OpKind::MatMul, OpKind::Conv2D,
                     OpKind::Reshape}) {
        if (name == op_name(k)) return k;
    }
    throw ParseError(std::string(where) + ": unknown weighting operation \"" + name + "\"");
}

json shape_to_json(const Shape& s) {
    json arr = json::array();
    for (std::size_t e : s) arr.push_back(e);
    return arr;
}

json tensor_data_to_json(const Tensor& t) {
    json arr = json::array();
    for (double v : t.data()) arr.push_back(v);
    return arr;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string save_graph_json(const CapsuleGraph& g) {
    json doc;
    doc["inputs"] = json::array();
    doc["nodes"] = json::array();
    doc["edges"] = json::array();

    std::vector<const InputNode*> inputs;
    for (const auto& n : g.inputs) inputs.push_back(&n);
    std::sort(inputs.begin(), inputs.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* n : inputs) {
        doc["inputs"].push_back({{"id", n->id}, {"shape", shape_to_json(n->shape)}});
    }

    std::vector<const CapsuleNode*> nodes;
    for (const auto& n : g.nodes) nodes.push_back(&n);
    std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* n : nodes) {
        json entry = {{"id", n->id},
                      {"cap", cap_name(n->cap.kind)},
                      {"bias_shape", shape_to_json(n->bias.shape())},
                      {"bias", tensor_data_to_json(n->bias)}};
        if (n->cap.kind == CapKind::Downsample) entry["cap_arg"] = n->cap.window;
        doc["nodes"].push_back(std::move(entry));
    }

    std::vector<const Edge*> edges;
    for (const auto& e : g.edges) edges.push_back(&e);
    std::sort(edges.begin(), edges.end(), [](auto* a, auto* b) {
        return std::tie(a->from, a->to) < std::tie(b->from, b->to);
    });
    for (const auto* e : edges) {
        json entry = {{"from", e->from}, {"to", e->to}, {"op", op_name(e->op.kind)}};
        if (e->op.kind == OpKind::Reshape) entry["op_arg"] = shape_to_json(e->op.reshape_target);
        if (e->weight_shape) entry["weight_shape"] = shape_to_json(*e->weight_shape);
        if (e->weight) entry["weight"] = tensor_data_to_json(*e->weight);
        doc["edges"].push_back(std::move(entry));
    }
    return doc.dump(2) + "\n";
}

CapsuleGraph load_graph_json(const std::string& text) {
    json doc = parse(text, "graph document");
    if (!doc.is_object()) throw ParseError("graph document: top level must be an object");
    reject_unknown_keys(doc, {"inputs", "nodes", "edges"}, "graph document");
    for (const char* key : {"inputs", "nodes", "edges"}) {
        if (!doc.contains(key) || !doc[key].is_array())
            throw ParseError(std::string("graph document: \"") + key + "\" array is required");
    }

    CapsuleGraph g;
    for (const auto& entry : doc["inputs"]) {
        if (!entry.is_object()) throw ParseError("graph inputs: entries must be objects");
        reject_unknown_keys(entry, {"id", "shape"}, "graph input");
        const std::string id = required_string(entry, "id", "graph input");
        if (!entry.contains("shape")) throw ParseError("graph input " + id + ": \"shape\" is required");
        g.inputs.push_back({id, shape_from_json(entry["shape"], "graph input")});
    }
    for (const auto& entry : doc["nodes"]) {
        if (!entry.is_object()) throw ParseError("graph nodes: entries must be objects");
        reject_unknown_keys(entry, {"id", "cap", "cap_arg", "bias_shape", "bias"}, "graph node");
        const std::string id = required_string(entry, "id", "graph node");
        const CapKind cap = cap_from_name(required_string(entry, "cap", "graph node"), "graph node");
        std::size_t window = 1;
        if (cap == CapKind::Downsample) {
            if (!entry.contains("cap_arg") || !entry["cap_arg"].is_number_unsigned() ||
                entry["cap_arg"].get<std::uint64_t>() == 0)
                throw ParseError("graph node " + id + ": downsample requires a positive integer \"cap_arg\"");
            window = entry["cap_arg"].get<std::size_t>();
        } else if (entry.contains("cap_arg")) {
            throw ParseError("graph node " + id + ": \"cap_arg\" only applies to downsample");
        }
        if (!entry.contains("bias_shape")) throw ParseError("graph node " + id + ": \"bias_shape\" is required");
        const Shape bias_shape = shape_from_json(entry["bias_shape"], "graph node");
        Tensor bias = Tensor::zeros(bias_shape);
        if (entry.contains("bias")) {
            auto data = doubles_from_json(entry["bias"], "graph node bias");
            if (data.size() != shape_size(bias_shape))
                throw ParseError("graph node " + id + ": bias array does not match bias_shape");
            try {
                bias = Tensor(bias_shape, std::move(data));
            } catch (const NonFiniteValue&) {
                throw ParseError("graph node " + id + ": bias contains non-finite values");
            }
        }
        CapsuleFn fn{cap, window};
        g.nodes.push_back({id, fn, std::move(bias)});
    }
    for (const auto& entry : doc["edges"]) {
        if (!entry.is_object()) throw ParseError("graph edges: entries must be objects");
        reject_unknown_keys(entry, {"from", "to", "op", "op_arg", "weight_shape", "weight"}, "graph edge");
        Edge e;
        e.from = required_string(entry, "from", "graph edge");
        e.to = required_string(entry, "to", "graph edge");
        const std::string tag = "graph edge " + e.from + "->" + e.to;
        const OpKind op = op_from_name(required_string(entry, "op", "graph edge"), "graph edge");
        if (op == OpKind::Reshape) {
            if (!entry.contains("op_arg")) throw ParseError(tag + ": reshape requires an \"op_arg\" shape");
            e.op = WeightingOp::reshape(shape_from_json(entry["op_arg"], "graph edge"));
        } else {
            if (entry.contains("op_arg")) throw ParseError(tag + ": \"op_arg\" only applies to reshape");
            e.op = WeightingOp{op, {}};
        }
        if (op_requires_weight(op)) {
            if (!entry.contains("weight_shape"))
                throw ParseError(tag + ": \"" + op_name(op) + "\" requires a \"weight_shape\"");
            e.weight_shape = shape_from_json(entry["weight_shape"], "graph edge");
            if (entry.contains("weight")) {
                auto data = doubles_from_json(entry["weight"], "graph edge weight");
                if (data.size() != shape_size(*e.weight_shape))
                    throw ParseError(tag + ": weight array does not match weight_shape");
                try {
                    e.weight = Tensor(*e.weight_shape, std::move(data));
                } catch (const NonFiniteValue&) {
                    throw ParseError(tag + ": weight contains non-finite values");
                }
            }
        } else if (entry.contains("weight") || entry.contains("weight_shape")) {
            throw ParseError(tag + ": \"" + op_name(op) + "\" takes no weight");
        }
        g.edges.push_back(std::move(e));
    }
    return g;
}

std::string save_derivation_json(const Derivation& d) {
    json doc;
    doc["steps"] = json::array();
    for (const auto& step : d.steps) {
        json entry = {{"rule", rule_name(step.rule)}, {"node", step.node}};
        if (step.rule != DerivationStep::Rule::Variable) entry["subset"] = step.subset;
        doc["steps"].push_back(std::move(entry));
    }
    return doc.dump(2) + "\n";
}

Derivation load_derivation_json(const std::string& text) {
    json doc = parse(text, "derivation document");
    if (!doc.is_object()) throw ParseError("derivation document: top level must be an object");
    reject_unknown_keys(doc, {"steps"}, "derivation document");
    if (!doc.contains("steps") || !doc["steps"].is_array())
        throw ParseError("derivation document: \"steps\" array is required");

    Derivation d;
    for (const auto& entry : doc["steps"]) {
        if (!entry.is_object()) throw ParseError("derivation steps: entries must be objects");
        reject_unknown_keys(entry, {"rule", "node", "subset"}, "derivation step");
        DerivationStep step;
        const std::string rule = required_string(entry, "rule", "derivation step");
        if (rule == "variable")
            step.rule = DerivationStep::Rule::Variable;
        else if (rule == "neuron")
            step.rule = DerivationStep::Rule::Neuron;
        else if (rule == "growth")
            step.rule = DerivationStep::Rule::Growth;
        else if (rule == "convergence")
            step.rule = DerivationStep::Rule::Convergence;
        else
            throw ParseError("derivation step: unknown rule \"" + rule + "\"");
        step.node = required_string(entry, "node", "derivation step");
        if (step.rule == DerivationStep::Rule::Variable) {
            if (entry.contains("subset"))
                throw ParseError("derivation step: variable carries no subset");
        } else {
            if (!entry.contains("subset") || !entry["subset"].is_array())
                throw ParseError("derivation step: \"" + rule + "\" requires a subset array");
            for (const auto& id : entry["subset"]) {
                if (!id.is_string()) throw ParseError("derivation step: subset entries must be strings");
                step.subset.push_back(id.get<std::string>());
            }
        }
        d.steps.push_back(std::move(step));
    }
    return d;
}

std::map<std::string, std::vector<double>> load_values_json(const std::string& text) {
    json doc = parse(text, "values document");
    if (!doc.is_object()) throw ParseError("values document: top level must be an object");
    std::map<std::string, std::vector<double>> out;
    for (const auto& [key, value] : doc.items()) {
        out.emplace(key, doubles_from_json(value, "values document"));
    }
    return out;
}

std::string save_values_json(const std::map<std::string, Tensor>& values) {
    json doc = json::object();
    for (const auto& [id, t] : values) {
        doc[id] = {{"shape", shape_to_json(t.shape())}, {"data", tensor_data_to_json(t)}};
    }
    return doc.dump(2) + "\n";
}

std::map<std::string, Tensor> bind_values(const std::map<std::string, std::vector<double>>& raw,
                                          const std::map<std::string, Shape>& shapes) {
    std::map<std::string, Tensor> out;
    for (const auto& [id, shape] : shapes) {
        auto it = raw.find(id);
        if (it == raw.end()) throw MissingInput("no values supplied for node " + id);
        if (it->second.size() != shape_size(shape))
            throw ShapeMismatch("values for " + id + " have " + std::to_string(it->second.size()) +
                                " entries, expected " + std::to_string(shape_size(shape)));
        out.emplace(id, Tensor(shape, it->second));
    }
    for (const auto& [id, data] : raw) {
        (void)data;
        if (!shapes.count(id)) throw InvalidGraph("values supplied for unexpected node " + id);
    }
    return out;
}

namespace {

struct Column {
    bool is_input = false;
    std::string node;
    std::size_t index = 0;
};

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

Column parse_column(const std::string& header) {
    const auto parts = split(header, ':');
    if (parts.size() != 3 || (parts[0] != "in" && parts[0] != "out") || parts[1].empty())
        throw ParseError("dataset: malformed column \"" + header + "\"");
    Column col;
    col.is_input = parts[0] == "in";
    col.node = parts[1];
    try {
        col.index = std::stoul(parts[2]);
    } catch (...) {
        throw ParseError("dataset: malformed column index in \"" + header + "\"");
    }
    return col;
}

} // namespace

Dataset load_dataset_csv(const std::string& text, const CapsuleGraph& g) {
    const NodeClasses cls = classify(g);
    const auto shapes = infer_shapes(g);
    std::map<std::string, std::size_t> in_sizes, out_sizes;
    for (const auto& id : cls.inputs) in_sizes[id] = shape_size(shapes.at(id));
    for (const auto& id : cls.outputs) out_sizes[id] = shape_size(shapes.at(id));

    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("dataset: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<Column> columns;
    std::map<std::string, std::vector<bool>> in_seen, out_seen;
    for (const auto& [id, n] : in_sizes) in_seen[id].assign(n, false);
    for (const auto& [id, n] : out_sizes) out_seen[id].assign(n, false);
    for (const auto& header : split(line, ',')) {
        Column col = parse_column(header);
        auto& sizes = col.is_input ? in_sizes : out_sizes;
        auto& seen = col.is_input ? in_seen : out_seen;
        auto it = sizes.find(col.node);
        if (it == sizes.end())
            throw ParseError("dataset: column \"" + header + "\" names no " +
                             (col.is_input ? "input" : "output") + " node");
        if (col.index >= it->second) throw ParseError("dataset: column \"" + header + "\" index out of range");
        if (seen[col.node][col.index]) throw ParseError("dataset: duplicate column \"" + header + "\"");
        seen[col.node][col.index] = true;
        columns.push_back(col);
    }
    for (const auto& [id, seen] : in_seen)
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (!seen[i]) throw ParseError("dataset: missing column in:" + id + ":" + std::to_string(i));
    for (const auto& [id, seen] : out_seen)
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (!seen[i]) throw ParseError("dataset: missing column out:" + id + ":" + std::to_string(i));

    Dataset data;
    std::size_t row_no = 1;
    while (std::getline(is, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != columns.size())
            throw ParseError("dataset row " + std::to_string(row_no) + ": expected " +
                             std::to_string(columns.size()) + " cells, got " + std::to_string(cells.size()));
        std::map<std::string, std::vector<double>> ins, outs;
        for (const auto& [id, n] : in_sizes) ins[id].assign(n, 0.0);
        for (const auto& [id, n] : out_sizes) outs[id].assign(n, 0.0);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            char* end = nullptr;
            const double v = std::strtod(cells[c].c_str(), &end);
            if (end == cells[c].c_str() || *end != '\0')
                throw ParseError("dataset row " + std::to_string(row_no) + ": bad number \"" + cells[c] + "\"");
            (columns[c].is_input ? ins : outs)[columns[c].node][columns[c].index] = v;
        }
        Sample sample;
        try {
            for (auto& [id, v] : ins) sample.inputs.emplace(id, Tensor(shapes.at(id), std::move(v)));
            for (auto& [id, v] : outs) sample.targets.emplace(id, Tensor(shapes.at(id), std::move(v)));
        } catch (const NonFiniteValue&) {
            throw ParseError("dataset row " + std::to_string(row_no) + ": non-finite value");
        }
        data.samples.push_back(std::move(sample));
    }
    if (data.samples.empty()) throw ParseError("dataset: no sample rows");
    return data;
}

std::string save_dataset_csv(const Dataset& data) {
    if (data.samples.empty()) throw InvalidSpec("save_dataset_csv: dataset is empty");
    const Sample& first = data.samples.front();

    std::ostringstream os;
    bool sep = false;
    for (const auto& [id, t] : first.inputs)
        for (std::size_t i = 0; i < t.size(); ++i)
            os << (sep ? "," : (sep = true, "")) << "in:" << id << ":" << i;
    for (const auto& [id, t] : first.targets)
        for (std::size_t i = 0; i < t.size(); ++i)
            os << ",out:" << id << ":" << i;
    os << "\n";

    for (const auto& sample : data.samples) {
        if (sample.inputs.size() != first.inputs.size() || sample.targets.size() != first.targets.size())
            throw InvalidSpec("save_dataset_csv: samples disagree on node sets");
        sep = false;
        for (const auto& [id, t] : sample.inputs)
            for (std::size_t i = 0; i < t.size(); ++i)
                os << (sep ? "," : (sep = true, "")) << fmt_double(t[i]);
        for (const auto& [id, t] : sample.targets)
            for (std::size_t i = 0; i < t.size(); ++i) os << "," << fmt_double(t[i]);
        os << "\n";
    }
    return os.str();
}

std::string save_history_csv(const std::vector<double>& history) {
    std::ostringstream os;
    os << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) os << (i + 1) << "," << fmt_double(history[i]) << "\n";
    return os.str();
}

namespace {

std::string dot_quote(const std::string& id) {
    std::string out = "\"";
    for (char c : id) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

const char* op_symbol(OpKind kind) {
    switch (kind) {
        case OpKind::IdentityTransfer: return "→"; // →
        case OpKind::ScalarMult: return "·";       // ·
        case OpKind::MatMul: return "×";           // ×
        case OpKind::Conv2D: return "∗";           // ∗
        case OpKind::Reshape: return "◁";          // ◁
    }
    return "?";
}

} // namespace

std::string export_dot(const CapsuleGraph& g) {
    std::ostringstream os;
    os << "digraph capsnet {\n  rankdir=LR;\n";
    std::vector<std::string> input_ids, node_ids;
    for (const auto& n : g.inputs) input_ids.push_back(n.id);
    for (const auto& n : g.nodes) node_ids.push_back(n.id);
    std::sort(input_ids.begin(), input_ids.end());
    std::sort(node_ids.begin(), node_ids.end());
    for (const auto& id : input_ids) os << "  " << dot_quote(id) << " [shape=box];\n";
    for (const auto& id : node_ids)
        os << "  " << dot_quote(id) << " [shape=ellipse,xlabel=" << dot_quote(cap_name(g.find_node(id)->cap.kind))
           << "];\n";
    std::vector<const Edge*> edges;
    for (const auto& e : g.edges) edges.push_back(&e);
    std::sort(edges.begin(), edges.end(), [](auto* a, auto* b) {
        return std::tie(a->from, a->to) < std::tie(b->from, b->to);
    });
    for (const auto* e : edges) {
        os << "  " << dot_quote(e->from) << " -> " << dot_quote(e->to) << " [label="
           << dot_quote(op_symbol(e->op.kind)) << "];\n";
    }
    os << "}\n";
    return os.str();
}

} // namespace capsnet
