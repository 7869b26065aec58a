#pragma once

#include <map>
#include <string>

#include "capsnet/graph.hpp"

namespace capsnet {

// Multilayer-perceptron capsule path: one capsule per layer, matrix
// multiplication on every edge.
struct MlpSpec {
    std::vector<std::size_t> widths;
    CapsuleFn hidden = CapsuleFn::sigmoid();
    CapsuleFn output = CapsuleFn::sigmoid();
};

struct ConvStage {
    std::size_t kernels = 1;
    std::size_t kernel_size = 3;
    std::size_t window = 1; // mean-pool window after the convolution
};

// Convolutional capsule path: conv -> pool -> conv -> pool -> flatten ->
// fully connected softmax.
struct CnnSpec {
    Shape input_shape = {1, 12, 12};
    ConvStage stage1 = {4, 3, 2};
    ConvStage stage2 = {8, 3, 3};
    std::size_t classes = 10;
};

MlpSpec default_mlp_spec(); // widths 5,7,7,7,4
CnnSpec default_cnn_spec();

// Path X -> H1 -> ... -> O with weight shapes (width[i+1], width[i]).
// Weights are left for the trainer to initialize.
CapsuleGraph build_mlp(const MlpSpec& spec);

// Path X -> H1(conv,relu) -> H2(pool) -> H3(conv,relu) -> H4(pool)
// -> H5(reshape,identity) -> O(matmul,softmax).
CapsuleGraph build_cnn(const CnnSpec& spec);

// Small named graphs used across the test suites: the trivial one-input
// net, the one- and two-input neuron nets, the growth families over
// them, the two-arm convergence triple, a diamond, a mixed-capsule
// tensor path, and the default zoo models.
std::map<std::string, CapsuleGraph> fixtures();

} // namespace capsnet
