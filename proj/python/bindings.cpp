#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "capsnet/json_io.hpp"
#include "capsnet/models.hpp"

namespace py = pybind11;

namespace {

using namespace capsnet;

LossKind loss_from_name(const std::string& name) {
    if (name == "mse") return LossKind::MeanSquaredError;
    if (name == "xent") return LossKind::SoftmaxCrossEntropy;
    throw InvalidSpec("loss must be \"mse\" or \"xent\", got \"" + name + "\"");
}

EnumSemantics semantics_from_name(const std::string& name) {
    if (name == "labeled") return EnumSemantics::Labeled;
    if (name == "iso") return EnumSemantics::Iso;
    throw InvalidSpec("semantics must be \"labeled\" or \"iso\", got \"" + name + "\"");
}

} // namespace

PYBIND11_MODULE(_capsnet, m) {
    m.doc() = "Capsule-network graphs: tensors, evaluation, backprop, generation rules.";

    py::register_exception<Error>(m, "CapsnetError");

    py::class_<Tensor>(m, "Tensor")
        .def(py::init([](const Shape& shape, const std::vector<double>& data) {
                 return Tensor(shape, data);
             }),
             py::arg("shape"), py::arg("data"))
        .def_static("scalar", &Tensor::scalar, py::arg("value"))
        .def_static("zeros", [](const Shape& shape) { return Tensor::zeros(shape); }, py::arg("shape"))
        .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
        .def_property_readonly("data",
                               [](const Tensor& t) {
                                   return std::vector<double>(t.data().begin(), t.data().end());
                               })
        .def("__len__", &Tensor::size)
        .def("__repr__", [](const Tensor& t) {
            return "Tensor(shape=" + shape_str(t.shape()) + ", size=" + std::to_string(t.size()) + ")";
        });

    py::class_<CapsuleGraph>(m, "CapsuleGraph")
        .def_static("from_json", [](const std::string& text) { return load_graph_json(text); },
                    py::arg("text"))
        .def("to_json", [](const CapsuleGraph& g) { return save_graph_json(g); })
        .def("to_dot", [](const CapsuleGraph& g) { return export_dot(g); })
        .def("validate", [](const CapsuleGraph& g) { return validate(g).violations; })
        .def("classify",
             [](const CapsuleGraph& g) {
                 const NodeClasses cls = classify(g);
                 py::dict d;
                 d["inputs"] = cls.inputs;
                 d["hidden"] = cls.hidden;
                 d["outputs"] = cls.outputs;
                 return d;
             })
        .def("topo_order", [](const CapsuleGraph& g) { return topo_order(g); })
        .def("infer_shapes", [](const CapsuleGraph& g) { return infer_shapes(g); })
        .def("fully_weighted", &CapsuleGraph::fully_weighted)
        .def("__repr__", [](const CapsuleGraph& g) {
            return "CapsuleGraph(" + std::to_string(g.inputs.size()) + " inputs, " +
                   std::to_string(g.nodes.size()) + " capsules, " + std::to_string(g.edges.size()) +
                   " edges)";
        });

    m.def("matmul", &matmul, py::arg("a"), py::arg("b"));
    m.def("conv2d", &conv2d, py::arg("input"), py::arg("kernels"));
    m.def("downsample", &downsample, py::arg("input"), py::arg("window"));
    m.def("reshape", [](const Tensor& t, const Shape& s) { return reshape(t, s); }, py::arg("input"),
          py::arg("shape"));

    m.def("build_mlp",
          [](const std::vector<std::size_t>& widths) {
              MlpSpec spec = default_mlp_spec();
              if (!widths.empty()) spec.widths = widths;
              return build_mlp(spec);
          },
          py::arg("widths") = std::vector<std::size_t>{});
    m.def("build_cnn", [] { return build_cnn(default_cnn_spec()); });
    m.def("fixtures", [] { return fixtures(); });

    m.def("evaluate",
          [](const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs) {
              const ValueMap vm = eval(g, inputs);
              py::dict d;
              d["outputs"] = vm.outputs;
              d["pre_activations"] = vm.pre_activations;
              return d;
          },
          py::arg("graph"), py::arg("inputs"));

    m.def("backward",
          [](const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs,
             const std::map<std::string, Tensor>& targets, const std::string& loss) {
              const ValueMap vm = eval(g, inputs);
              const LossSpec spec{loss_from_name(loss), targets};
              auto [sens, grads] = backward(g, vm, spec);
              py::dict d;
              d["loss"] = total_loss(vm, spec);
              d["delta"] = sens.delta;
              d["weight_grads"] = grads.weight_grads;
              d["bias_grads"] = grads.bias_grads;
              return d;
          },
          py::arg("graph"), py::arg("inputs"), py::arg("targets"), py::arg("loss") = "mse");

    m.def("grad_check",
          [](const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs,
             const std::map<std::string, Tensor>& targets, const std::string& loss, double eps) {
              return grad_check(g, inputs, LossSpec{loss_from_name(loss), targets}, eps);
          },
          py::arg("graph"), py::arg("inputs"), py::arg("targets"), py::arg("loss") = "mse",
          py::arg("eps") = 1e-5);

    m.def("init_params", &init_params, py::arg("graph"), py::arg("seed"));

    m.def("train",
          [](const CapsuleGraph& g,
             const std::vector<std::pair<std::map<std::string, Tensor>, std::map<std::string, Tensor>>>&
                 samples,
             double lr, std::size_t epochs, std::uint64_t seed, const std::string& loss) {
              Dataset data;
              for (const auto& [ins, outs] : samples) data.samples.push_back({ins, outs});
              TrainConfig config{lr, epochs, seed, loss_from_name(loss)};
              TrainResult result = train(g, data, config);
              return py::make_tuple(result.graph, result.history);
          },
          py::arg("graph"), py::arg("samples"), py::arg("lr") = 0.1, py::arg("epochs") = 1,
          py::arg("seed") = 0, py::arg("loss") = "mse");

    m.def("derive_json", [](const CapsuleGraph& g) { return save_derivation_json(derive(g)); },
          py::arg("graph"));
    m.def("replay_json", [](const std::string& text) { return replay(load_derivation_json(text)); },
          py::arg("text"));

    m.def("enumerate_growth",
          [](const CapsuleGraph& base, std::size_t steps, const std::string& semantics) {
              EnumerationResult result = enumerate_growth(base, steps, semantics_from_name(semantics));
              return py::make_tuple(result.count, result.structures);
          },
          py::arg("base"), py::arg("steps"), py::arg("semantics") = "labeled");

    m.def("is_isomorphic", &is_isomorphic, py::arg("a"), py::arg("b"));
    m.def("canonical_form", &canonical_form, py::arg("graph"));
}
