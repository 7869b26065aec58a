#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "capsnet/json_io.hpp"
#include "capsnet/models.hpp"

namespace {

using namespace capsnet;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write " + path);
    out << content;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CapsuleGraph load_graph_file(const std::string& path) {
    return load_graph_json(read_file(path));
}

// Zoo exports and hand-written documents may omit weights; a seeded
// initialization fills them in before any numeric command runs.
CapsuleGraph ensure_weights(CapsuleGraph g, std::uint64_t seed) {
    if (!g.fully_weighted()) g = init_params(g, seed);
    return g;
}

LossKind parse_loss(const std::string& name) {
    return name == "xent" ? LossKind::SoftmaxCrossEntropy : LossKind::MeanSquaredError;
}

std::string edge_list_string(const CapsuleGraph& g) {
    std::vector<const Edge*> edges;
    for (const auto& e : g.edges) edges.push_back(&e);
    std::sort(edges.begin(), edges.end(), [](auto* a, auto* b) {
        return std::tie(a->from, a->to) < std::tie(b->from, b->to);
    });
    std::string out;
    for (const auto* e : edges) {
        if (!out.empty()) out += " ";
        out += e->from + "->" + e->to;
    }
    return out;
}

int cmd_validate(const std::string& graph_path) {
    const CapsuleGraph g = load_graph_file(graph_path);
    const ValidationReport report = validate(g);
    if (report.ok()) {
        std::cout << "ok\n";
        return kExitOk;
    }
    for (const auto& v : report.violations) std::cout << v << "\n";
    return kExitValidation;
}

int cmd_eval(const std::string& graph_path, const std::string& inputs_path) {
    const CapsuleGraph g = load_graph_file(graph_path);
    std::map<std::string, Shape> input_shapes;
    for (const auto& n : g.inputs) input_shapes[n.id] = n.shape;
    const auto inputs = bind_values(load_values_json(read_file(inputs_path)), input_shapes);
    const ValueMap vm = eval(g, inputs);
    std::cout << save_values_json(vm.outputs);
    return kExitOk;
}

int cmd_gradcheck(const std::string& graph_path, const std::string& inputs_path,
                  const std::string& targets_path, const std::string& loss_name, double eps,
                  std::uint64_t seed) {
    const CapsuleGraph g = ensure_weights(load_graph_file(graph_path), seed);
    const auto shapes = infer_shapes(g);
    const NodeClasses cls = classify(g);

    std::map<std::string, Shape> input_shapes, target_shapes;
    for (const auto& id : cls.inputs) input_shapes[id] = shapes.at(id);
    for (const auto& id : cls.outputs) target_shapes[id] = shapes.at(id);

    const auto inputs = bind_values(load_values_json(read_file(inputs_path)), input_shapes);
    LossSpec loss{parse_loss(loss_name), bind_values(load_values_json(read_file(targets_path)), target_shapes)};
    std::cout << fmt_double(grad_check(g, inputs, loss, eps)) << "\n";
    return kExitOk;
}

int cmd_train(const std::string& graph_path, const std::string& data_path, double lr, std::size_t epochs,
              std::uint64_t seed, const std::string& loss_name, const std::string& out_path,
              const std::string& history_path) {
    const CapsuleGraph g = ensure_weights(load_graph_file(graph_path), seed);
    const Dataset data = load_dataset_csv(read_file(data_path), g);
    TrainConfig config;
    config.learning_rate = lr;
    config.epochs = epochs;
    config.seed = seed;
    config.loss = parse_loss(loss_name);
    const TrainResult result = train(g, data, config);
    write_file(out_path, save_graph_json(result.graph));
    write_file(history_path, save_history_csv(result.history));
    if (!result.history.empty()) std::cout << "final mean loss " << fmt_double(result.history.back()) << "\n";
    return kExitOk;
}

int cmd_enumerate(const std::string& base_name, std::size_t steps, const std::string& semantics, bool list) {
    const ScalarNet base = base_name == "2in1n" ? apply_neuron({"x1", "x2"}, "h1")
                                                : apply_growth(apply_variable("x1"), {"x1"}, "h1");
    const EnumerationResult result =
        enumerate_growth(base, steps, semantics == "iso" ? EnumSemantics::Iso : EnumSemantics::Labeled);
    std::cout << result.count << "\n";
    if (list) {
        for (const auto& g : result.structures) std::cout << edge_list_string(g) << "\n";
    }
    return kExitOk;
}

int cmd_derive(const std::string& graph_path, const std::string& out_path) {
    const CapsuleGraph g = load_graph_file(graph_path);
    write_file(out_path, save_derivation_json(derive(g)));
    return kExitOk;
}

int cmd_replay(const std::string& deriv_path, const std::string& out_path) {
    const Derivation d = load_derivation_json(read_file(deriv_path));
    write_file(out_path, save_graph_json(replay(d)));
    return kExitOk;
}

int cmd_export_dot(const std::string& graph_path, const std::string& out_path) {
    write_file(out_path, export_dot(load_graph_file(graph_path)));
    return kExitOk;
}

int cmd_zoo(const std::string& model, const std::string& out_path) {
    const CapsuleGraph g = model == "cnn" ? build_cnn(default_cnn_spec()) : build_mlp(default_mlp_spec());
    write_file(out_path, save_graph_json(g));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"capsule-network construction, evaluation, training and generation tools"};
    app.require_subcommand(1);

    std::string graph_path, inputs_path, targets_path, data_path, deriv_path;
    std::string train_out = "trained.json", history_out = "history.csv";
    std::string derive_out = "derivation.json", replay_out = "replayed.json", dot_out = "graph.dot";
    std::string zoo_out;
    std::string loss_name = "mse", semantics = "labeled", base_name = "1in1n", zoo_model;
    double eps = 1e-5, lr = 0.1;
    std::size_t epochs = 1, steps = 1;
    std::uint64_t seed = 0;
    bool list = false;

    auto* validate_cmd = app.add_subcommand("validate", "check a graph document against every invariant");
    validate_cmd->add_option("graph", graph_path, "graph JSON file")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a graph and print per-node outputs");
    eval_cmd->add_option("graph", graph_path)->required();
    eval_cmd->add_option("--inputs", inputs_path, "JSON file of per-input flat arrays")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
    grad_cmd->add_option("graph", graph_path)->required();
    grad_cmd->add_option("--inputs", inputs_path)->required();
    grad_cmd->add_option("--targets", targets_path)->required();
    grad_cmd->add_option("--loss", loss_name)->check(CLI::IsMember({"mse", "xent"}));
    grad_cmd->add_option("--eps", eps)->check(CLI::Range(1e-12, 1e-3));
    grad_cmd->add_option("--seed", seed);

    auto* train_cmd = app.add_subcommand("train", "per-sample SGD over a CSV dataset");
    train_cmd->add_option("graph", graph_path)->required();
    train_cmd->add_option("--data", data_path)->required();
    train_cmd->add_option("--lr", lr)->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--loss", loss_name)->check(CLI::IsMember({"mse", "xent"}));
    train_cmd->add_option("--out", train_out, "trained graph file");
    train_cmd->add_option("--history", history_out, "loss history CSV");

    auto* enum_cmd = app.add_subcommand("enumerate", "count growth-rule results from a base network");
    enum_cmd->add_option("--base", base_name)->check(CLI::IsMember({"1in1n", "2in1n"}));
    enum_cmd->add_option("--steps", steps)->required()->check(CLI::PositiveNumber);
    enum_cmd->add_option("--semantics", semantics)->check(CLI::IsMember({"labeled", "iso"}));
    enum_cmd->add_flag("--list", list, "print each structure's edge list");

    auto* derive_cmd = app.add_subcommand("derive", "write a rule-application witness for a graph");
    derive_cmd->add_option("graph", graph_path)->required();
    derive_cmd->add_option("--out", derive_out);

    auto* replay_cmd = app.add_subcommand("replay", "rebuild the graph a derivation describes");
    replay_cmd->add_option("derivation", deriv_path)->required();
    replay_cmd->add_option("--out", replay_out);

    auto* dot_cmd = app.add_subcommand("export-dot", "write GraphViz DOT for a graph");
    dot_cmd->add_option("graph", graph_path)->required();
    dot_cmd->add_option("--out", dot_out);

    auto* zoo_cmd = app.add_subcommand("zoo", "write a default model document");
    zoo_cmd->add_option("model", zoo_model)->required()->check(CLI::IsMember({"mlp", "cnn"}));
    zoo_cmd->add_option("--out", zoo_out, "output file (defaults to <model>.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*validate_cmd) return cmd_validate(graph_path);
        if (*eval_cmd) return cmd_eval(graph_path, inputs_path);
        if (*grad_cmd) return cmd_gradcheck(graph_path, inputs_path, targets_path, loss_name, eps, seed);
        if (*train_cmd)
            return cmd_train(graph_path, data_path, lr, epochs, seed, loss_name, train_out, history_out);
        if (*enum_cmd) return cmd_enumerate(base_name, steps, semantics, list);
        if (*derive_cmd) return cmd_derive(graph_path, derive_out);
        if (*replay_cmd) return cmd_replay(deriv_path, replay_out);
        if (*dot_cmd) return cmd_export_dot(graph_path, dot_out);
        if (*zoo_cmd) return cmd_zoo(zoo_model, zoo_out.empty() ? zoo_model + ".json" : zoo_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NonFiniteValue& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
