#pragma once

// Test-only reference implementations, kept deliberately independent of
// the library's computation paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "capsnet/backprop.hpp"
#include "capsnet/graph.hpp"

namespace oracle {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

inline capsnet::Tensor naive_matmul_vec(const capsnet::Tensor& a, const capsnet::Tensor& b) {
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += a[i * n + j] * b[j];
    return capsnet::Tensor({m}, std::move(out));
}

// Direct six-loop valid cross-correlation.
inline capsnet::Tensor naive_conv2d(const capsnet::Tensor& input, const capsnet::Tensor& kernels) {
    const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const std::size_t k = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
    const std::size_t oh = h - kh + 1, ow = w - kw + 1;
    std::vector<double> out(k * oh * ow, 0.0);
    for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j)
                            out[kk * oh * ow + y * ow + x] += input[ch * h * w + (y + i) * w + (x + j)] *
                                                             kernels[((kk * c + ch) * kh + i) * kw + j];
    return capsnet::Tensor({k, oh, ow}, std::move(out));
}

// Plain sum/n window mean.
inline capsnet::Tensor naive_downsample(const capsnet::Tensor& input, std::size_t s) {
    const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const std::size_t oh = h / s, ow = w / s;
    std::vector<double> out(c * oh * ow, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < s; ++i)
                    for (std::size_t j = 0; j < s; ++j)
                        acc += input[ch * h * w + (y * s + i) * w + (x * s + j)];
                out[ch * oh * ow + y * ow + x] = acc / static_cast<double>(s * s);
            }
    return capsnet::Tensor({c, oh, ow}, std::move(out));
}

// (J^T upstream)_i by central differences on apply_capsule.
inline capsnet::Tensor numeric_cap_jacobian(const capsnet::CapsuleFn& cap, const capsnet::Tensor& u,
                                            const capsnet::Tensor& upstream, double eps = 1e-6) {
    std::vector<double> out(u.size(), 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const capsnet::Tensor yp = capsnet::apply_capsule(cap, u.with_value(i, u[i] + eps));
        const capsnet::Tensor ym = capsnet::apply_capsule(cap, u.with_value(i, u[i] - eps));
        double acc = 0.0;
        for (std::size_t j = 0; j < yp.size(); ++j) acc += upstream[j] * (yp[j] - ym[j]) / (2.0 * eps);
        out[i] = acc;
    }
    return capsnet::Tensor(u.shape(), std::move(out));
}

// Recursive evaluation of a scalar network: y_h = f(sum w*y + b)
// computed by memoized recursion straight off the graph structure.
inline std::map<std::string, double> recursive_scalar_eval(const capsnet::CapsuleGraph& g,
                                                           const std::map<std::string, double>& inputs) {
    std::map<std::string, double> memo;
    std::function<double(const std::string&)> value = [&](const std::string& id) -> double {
        auto it = memo.find(id);
        if (it != memo.end()) return it->second;
        if (g.find_input(id)) return memo[id] = inputs.at(id);
        const capsnet::CapsuleNode* node = g.find_node(id);
        double u = node->bias.value();
        for (const auto& e : g.edges)
            if (e.to == id) u += e.weight->value() * value(e.from);
        double y = u;
        switch (node->cap.kind) {
            case capsnet::CapKind::Identity: y = u; break;
            case capsnet::CapKind::Sigmoid: y = 1.0 / (1.0 + std::exp(-u)); break;
            case capsnet::CapKind::Tanh: y = std::tanh(u); break;
            case capsnet::CapKind::ReLU: y = u > 0.0 ? u : 0.0; break;
            default: throw std::runtime_error("recursive oracle: scalar capsules only");
        }
        return memo[id] = y;
    };
    std::map<std::string, double> out;
    for (const auto& n : g.inputs) out[n.id] = value(n.id);
    for (const auto& n : g.nodes) out[n.id] = value(n.id);
    return out;
}

// Recursive sensitivities for scalar sigmoid/tanh/identity/relu nets
// under MSE: delta_h = (output? y-t : sum_p delta_p * w_{h->p}) * f'(u_h).
inline std::map<std::string, double> recursive_scalar_deltas(const capsnet::CapsuleGraph& g,
                                                             const std::map<std::string, double>& inputs,
                                                             const std::map<std::string, double>& targets) {
    std::map<std::string, double> y = recursive_scalar_eval(g, inputs);
    std::map<std::string, double> u; // pre-activations
    for (const auto& n : g.nodes) {
        double acc = n.bias.value();
        for (const auto& e : g.edges)
            if (e.to == n.id) acc += e.weight->value() * y.at(e.from);
        u[n.id] = acc;
    }
    std::map<std::string, double> memo;
    std::function<double(const std::string&)> delta = [&](const std::string& id) -> double {
        auto it = memo.find(id);
        if (it != memo.end()) return it->second;
        const capsnet::CapsuleNode* node = g.find_node(id);
        bool any_out = false;
        double upstream = 0.0;
        for (const auto& e : g.edges) {
            if (e.from == id) {
                any_out = true;
                upstream += delta(e.to) * e.weight->value();
            }
        }
        if (!any_out) upstream = y.at(id) - targets.at(id);
        double fprime = 1.0;
        switch (node->cap.kind) {
            case capsnet::CapKind::Identity: fprime = 1.0; break;
            case capsnet::CapKind::Sigmoid: {
                const double s = 1.0 / (1.0 + std::exp(-u.at(id)));
                fprime = s * (1.0 - s);
                break;
            }
            case capsnet::CapKind::Tanh: {
                const double t = std::tanh(u.at(id));
                fprime = 1.0 - t * t;
                break;
            }
            case capsnet::CapKind::ReLU: fprime = u.at(id) > 0.0 ? 1.0 : 0.0; break;
            default: throw std::runtime_error("recursive oracle: scalar capsules only");
        }
        return memo[id] = upstream * fprime;
    };
    std::map<std::string, double> out;
    for (const auto& n : g.nodes) out[n.id] = delta(n.id);
    return out;
}

// Exhaustive permutation matching; independent of canonical_form.
inline bool brute_force_isomorphic(const capsnet::CapsuleGraph& a, const capsnet::CapsuleGraph& b) {
    if (a.inputs.size() != b.inputs.size() || a.nodes.size() != b.nodes.size() ||
        a.edges.size() != b.edges.size())
        return false;

    auto ids_of = [](const capsnet::CapsuleGraph& g, bool inputs) {
        std::vector<std::string> ids;
        if (inputs)
            for (const auto& n : g.inputs) ids.push_back(n.id);
        else
            for (const auto& n : g.nodes) ids.push_back(n.id);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    const auto a_in = ids_of(a, true), a_caps = ids_of(a, false);
    auto b_in = ids_of(b, true), b_caps = ids_of(b, false);

    std::set<std::pair<std::string, std::string>> a_edges, b_edges;
    for (const auto& e : a.edges) a_edges.insert({e.from, e.to});
    for (const auto& e : b.edges) b_edges.insert({e.from, e.to});

    std::sort(b_in.begin(), b_in.end());
    do {
        std::sort(b_caps.begin(), b_caps.end());
        do {
            std::map<std::string, std::string> phi;
            for (std::size_t i = 0; i < a_in.size(); ++i) phi[a_in[i]] = b_in[i];
            for (std::size_t i = 0; i < a_caps.size(); ++i) phi[a_caps[i]] = b_caps[i];
            bool ok = true;
            for (const auto& [from, to] : a_edges) {
                if (!b_edges.count({phi[from], phi[to]})) {
                    ok = false;
                    break;
                }
            }
            if (ok) return true;
        } while (std::next_permutation(b_caps.begin(), b_caps.end()));
    } while (std::next_permutation(b_in.begin(), b_in.end()));
    return false;
}

} // namespace oracle
