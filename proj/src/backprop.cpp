#include "capsnet/backprop.hpp"

#include <algorithm>
#include <cmath>

namespace capsnet {

namespace {

Tensor sub(const Tensor& a, const Tensor& b) {
    return add(a, scale(b, -1.0));
}

Tensor transpose2(const Tensor& a) {
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return Tensor({n, m}, std::move(out));
}

double dot_all(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void require_shape(const Tensor& t, const Shape& want, const char* what) {
    if (!shapes_equal(t.shape(), want)) {
        throw ShapeMismatch(std::string(what) + ": expected shape " + shape_str(want) + ", got " +
                            shape_str(t.shape()));
    }
}

// Checks that `values` is structurally consistent with g, i.e. was
// produced by eval on this graph.
void require_fresh(const CapsuleGraph& g, const ValueMap& values) {
    const auto shapes = infer_shapes(g);
    for (const auto& [id, shape] : shapes) {
        auto it = values.outputs.find(id);
        if (it == values.outputs.end()) throw InvalidValues("value map has no output for node " + id);
        if (!shapes_equal(it->second.shape(), shape)) {
            throw InvalidValues("value map output for " + id + " has shape " + shape_str(it->second.shape()) +
                                ", expected " + shape_str(shape));
        }
    }
    for (const auto& n : g.nodes) {
        auto it = values.pre_activations.find(n.id);
        if (it == values.pre_activations.end())
            throw InvalidValues("value map has no total input for node " + n.id);
        if (!it->second.same_shape(n.bias))
            throw InvalidValues("value map total input for " + n.id + " is stale");
    }
}

} // namespace

double total_loss(const ValueMap& values, const LossSpec& loss) {
    double total = 0.0;
    for (const auto& [id, target] : loss.targets) {
        auto it = values.outputs.find(id);
        if (it == values.outputs.end()) throw MissingTarget("no evaluated output for target node " + id);
        const Tensor& y = it->second;
        if (!y.same_shape(target)) {
            throw ShapeMismatch("target for " + id + " has shape " + shape_str(target.shape()) +
                                ", output has " + shape_str(y.shape()));
        }
        if (loss.kind == LossKind::MeanSquaredError) {
            double acc = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double d = y[i] - target[i];
                acc += d * d;
            }
            total += 0.5 * acc;
        } else {
            double acc = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) acc -= target[i] * std::log(y[i]);
            total += acc;
        }
    }
    if (!std::isfinite(total)) throw NonFiniteValue("loss is not finite");
    return total;
}

Tensor cap_jacobian(const CapsuleFn& cap, const Tensor& u, const Tensor& upstream) {
    switch (cap.kind) {
        case CapKind::Identity:
            require_shape(upstream, u.shape(), "identity jacobian");
            return upstream;
        case CapKind::Sigmoid: {
            require_shape(upstream, u.shape(), "sigmoid jacobian");
            Tensor y = apply_capsule(cap, u);
            std::vector<double> out(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) out[i] = upstream[i] * y[i] * (1.0 - y[i]);
            return Tensor(u.shape(), std::move(out));
        }
        case CapKind::Tanh: {
            require_shape(upstream, u.shape(), "tanh jacobian");
            std::vector<double> out(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) {
                const double t = std::tanh(u[i]);
                out[i] = upstream[i] * (1.0 - t * t);
            }
            return Tensor(u.shape(), std::move(out));
        }
        case CapKind::ReLU: {
            require_shape(upstream, u.shape(), "relu jacobian");
            std::vector<double> out(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] > 0.0 ? upstream[i] : 0.0;
            return Tensor(u.shape(), std::move(out));
        }
        case CapKind::Softmax: {
            require_shape(upstream, u.shape(), "softmax jacobian");
            Tensor y = apply_capsule(cap, u);
            const double mix = dot_all(upstream, y);
            std::vector<double> out(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) out[i] = y[i] * (upstream[i] - mix);
            return Tensor(u.shape(), std::move(out));
        }
        case CapKind::Squash: {
            require_shape(upstream, u.shape(), "squash jacobian");
            double sq = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) sq += u[i] * u[i];
            if (sq == 0.0) return Tensor::zeros(u.shape());
            const double norm = std::sqrt(sq);
            const double denom = 1.0 + sq;
            const double s = norm / denom;                              // |u| / (1+|u|^2)
            const double ds_over_n = (1.0 - sq) / (denom * denom * norm); // s'(|u|)/|u|
            const double mix = dot_all(upstream, u) * ds_over_n;
            std::vector<double> out(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) out[i] = s * upstream[i] + mix * u[i];
            return Tensor(u.shape(), std::move(out));
        }
        case CapKind::Downsample: {
            if (u.rank() != 3) throw ShapeMismatch("downsample jacobian: total input must be rank 3");
            const std::size_t s = cap.window;
            const std::size_t c = u.shape()[0], h = u.shape()[1], w = u.shape()[2];
            if (s == 0 || h % s != 0 || w % s != 0)
                throw ShapeMismatch("downsample jacobian: window does not divide input");
            require_shape(upstream, {c, h / s, w / s}, "downsample jacobian");
            const std::size_t oh = h / s, ow = w / s;
            const double inv = 1.0 / static_cast<double>(s * s);
            std::vector<double> out(u.size(), 0.0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t x = 0; x < ow; ++x) {
                        const double v = upstream[ch * oh * ow + y * ow + x] * inv;
                        for (std::size_t i = 0; i < s; ++i)
                            for (std::size_t j = 0; j < s; ++j)
                                out[ch * h * w + (y * s + i) * w + (x * s + j)] = v;
                    }
                }
            }
            return Tensor(u.shape(), std::move(out));
        }
    }
    throw ShapeMismatch("unknown capsule function");
}

OpAdjoints op_adjoints(const WeightingOp& op, const std::optional<Tensor>& weight, const Tensor& y_src,
                       const Tensor& delta) {
    switch (op.kind) {
        case OpKind::IdentityTransfer:
            require_shape(delta, y_src.shape(), "identity-transfer adjoint");
            return {std::nullopt, delta};
        case OpKind::ScalarMult: {
            if (!weight) throw InvalidGraph("scalar_mult adjoint requires a weight");
            require_shape(delta, y_src.shape(), "scalar_mult adjoint");
            return {Tensor::scalar(dot_all(delta, y_src)), scale(delta, weight->value())};
        }
        case OpKind::MatMul: {
            if (!weight || weight->rank() != 2) throw InvalidGraph("matmul adjoint requires a rank-2 weight");
            const std::size_t m = weight->shape()[0], n = weight->shape()[1];
            if (y_src.rank() == 1) {
                require_shape(y_src, {n}, "matmul adjoint source");
                require_shape(delta, {m}, "matmul adjoint delta");
                Tensor wg = matmul(reshape(delta, {m, 1}), reshape(y_src, {1, n}));
                Tensor ig = matmul(transpose2(*weight), delta);
                return {std::move(wg), std::move(ig)};
            }
            if (y_src.rank() == 2) {
                const std::size_t p = y_src.shape()[1];
                require_shape(y_src, {n, p}, "matmul adjoint source");
                require_shape(delta, {m, p}, "matmul adjoint delta");
                Tensor wg = matmul(delta, transpose2(y_src));
                Tensor ig = matmul(transpose2(*weight), delta);
                return {std::move(wg), std::move(ig)};
            }
            throw ShapeMismatch("matmul adjoint: source must be rank 1 or 2");
        }
        case OpKind::Conv2D: {
            if (!weight || weight->rank() != 4) throw InvalidGraph("conv2d adjoint requires a rank-4 kernel bank");
            const auto& ws = weight->shape();
            const std::size_t k = ws[0], c = ws[1], kh = ws[2], kw = ws[3];
            if (y_src.rank() != 3 || y_src.shape()[0] != c)
                throw ShapeMismatch("conv2d adjoint: source shape " + shape_str(y_src.shape()) +
                                    " incompatible with kernels " + shape_str(ws));
            const std::size_t h = y_src.shape()[1], w = y_src.shape()[2];
            const std::size_t oh = h - kh + 1, ow = w - kw + 1;
            require_shape(delta, {k, oh, ow}, "conv2d adjoint delta");

            // dL/dK[k,c,i,j] = sum_{y,x} delta[k,y,x] * src[c,y+i,x+j]
            std::vector<double> wg(k * c * kh * kw, 0.0);
            // dL/dsrc[c,y+i,x+j] += delta[k,y,x] * K[k,c,i,j]
            std::vector<double> ig(c * h * w, 0.0);
            for (std::size_t kk = 0; kk < k; ++kk) {
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t x = 0; x < ow; ++x) {
                        const double d = delta[kk * oh * ow + y * ow + x];
                        if (d == 0.0) continue;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            for (std::size_t i = 0; i < kh; ++i) {
                                for (std::size_t j = 0; j < kw; ++j) {
                                    const std::size_t src_idx = ch * h * w + (y + i) * w + (x + j);
                                    wg[((kk * c + ch) * kh + i) * kw + j] += d * y_src[src_idx];
                                    ig[src_idx] += d * (*weight)[((kk * c + ch) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                }
            }
            return {Tensor({k, c, kh, kw}, std::move(wg)), Tensor({c, h, w}, std::move(ig))};
        }
        case OpKind::Reshape: {
            require_shape(delta, op.reshape_target, "reshape adjoint delta");
            return {std::nullopt, reshape(delta, y_src.shape())};
        }
    }
    throw InvalidGraph("unknown weighting operation");
}

std::pair<SensitivityMap, GradientSet> backward(const CapsuleGraph& g, const ValueMap& values,
                                                const LossSpec& loss) {
    require_fresh(g, values);
    const NodeClasses cls = classify(g);

    std::map<std::string, bool> is_output;
    for (const auto& id : cls.outputs) is_output[id] = true;
    for (const auto& id : cls.outputs) {
        if (!loss.targets.count(id)) throw MissingTarget("no target for output node " + id);
    }
    for (const auto& [id, t] : loss.targets) {
        if (!is_output.count(id)) throw MissingTarget("target for non-output node " + id);
        (void)t;
    }
    if (loss.kind == LossKind::SoftmaxCrossEntropy) {
        for (const auto& id : cls.outputs) {
            if (g.find_node(id)->cap.kind != CapKind::Softmax)
                throw InvalidSpec("cross entropy requires softmax output nodes, but " + id + " is " +
                                  cap_name(g.find_node(id)->cap.kind));
        }
    }

    SensitivityMap sens;
    GradientSet grads;
    std::map<std::string, Tensor> ybar; // dL/dY accumulated from successors

    std::vector<std::string> order = topo_order(g);
    std::reverse(order.begin(), order.end());
    for (const auto& id : order) {
        const CapsuleNode* node = g.find_node(id);
        if (!node) continue;
        const Tensor& u = values.pre_activations.at(id);
        const Tensor& y = values.outputs.at(id);

        Tensor delta;
        if (is_output.count(id)) {
            const Tensor& target = loss.targets.at(id);
            if (loss.kind == LossKind::SoftmaxCrossEntropy) {
                // softmax + cross entropy collapses to Y - T exactly
                delta = sub(y, target);
            } else if (node->cap.kind == CapKind::Downsample) {
                delta = sub(y, target);
            } else {
                delta = cap_jacobian(node->cap, u, sub(y, target));
            }
        } else {
            auto it = ybar.find(id);
            Tensor upstream = it != ybar.end() ? it->second : Tensor::zeros(y.shape());
            if (node->cap.kind == CapKind::Downsample) {
                delta = std::move(upstream);
            } else {
                delta = cap_jacobian(node->cap, u, upstream);
            }
        }

        grads.bias_grads.emplace(id, delta);

        // For Downsample capsules the window-mean adjoint sits between
        // the node sensitivity and the incoming edges.
        Tensor edge_up = delta;
        if (node->cap.kind == CapKind::Downsample) {
            const std::size_t s = node->cap.window;
            Shape pre = {u.shape()[0], u.shape()[1] * s, u.shape()[2] * s};
            edge_up = cap_jacobian(node->cap, Tensor::zeros(pre), delta);
        }
        for (const Edge* e : in_edges_sorted(g, id)) {
            OpAdjoints adj = op_adjoints(e->op, e->weight, values.outputs.at(e->from), edge_up);
            if (adj.weight_grad) grads.weight_grads.emplace(std::make_pair(e->from, e->to), *adj.weight_grad);
            auto yit = ybar.find(e->from);
            if (yit == ybar.end())
                ybar.emplace(e->from, std::move(adj.input_grad));
            else
                yit->second = add(yit->second, adj.input_grad);
        }

        sens.delta.emplace(id, std::move(delta));
    }
    return {std::move(sens), std::move(grads)};
}

double grad_check(const CapsuleGraph& g, const std::map<std::string, Tensor>& inputs, const LossSpec& loss,
                  double epsilon) {
    if (!(epsilon > 0.0) || epsilon > 1e-3) throw InvalidSpec("grad_check epsilon must lie in (0, 1e-3]");

    const ValueMap base = eval(g, inputs);
    const auto [sens, grads] = backward(g, base, loss);

    double max_rel = 0.0;
    auto compare = [&](double analytic, double numeric) {
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    };

    CapsuleGraph work = g;
    for (std::size_t ei = 0; ei < work.edges.size(); ++ei) {
        if (!work.edges[ei].weight) continue;
        const Tensor original = *work.edges[ei].weight;
        auto git = grads.weight_grads.find({work.edges[ei].from, work.edges[ei].to});
        if (git == grads.weight_grads.end())
            throw InvalidValues("no analytic gradient for edge " + work.edges[ei].from + "->" +
                                work.edges[ei].to);
        for (std::size_t i = 0; i < original.size(); ++i) {
            work.edges[ei].weight = original.with_value(i, original[i] + epsilon);
            const double lp = total_loss(eval(work, inputs), loss);
            work.edges[ei].weight = original.with_value(i, original[i] - epsilon);
            const double lm = total_loss(eval(work, inputs), loss);
            compare(git->second[i], (lp - lm) / (2.0 * epsilon));
        }
        work.edges[ei].weight = original;
    }
    for (std::size_t ni = 0; ni < work.nodes.size(); ++ni) {
        const Tensor original = work.nodes[ni].bias;
        const Tensor& analytic = grads.bias_grads.at(work.nodes[ni].id);
        for (std::size_t i = 0; i < original.size(); ++i) {
            work.nodes[ni].bias = original.with_value(i, original[i] + epsilon);
            const double lp = total_loss(eval(work, inputs), loss);
            work.nodes[ni].bias = original.with_value(i, original[i] - epsilon);
            const double lm = total_loss(eval(work, inputs), loss);
            compare(analytic[i], (lp - lm) / (2.0 * epsilon));
        }
        work.nodes[ni].bias = original;
    }
    return max_rel;
}

} // namespace capsnet
