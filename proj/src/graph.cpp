#include "vqclust/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace vqclust {

namespace {

void matmul_values(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate_out = false) {
    const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
    if (!accumulate_out) out.data.assign(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = out.data.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::input(Tensor value) {
    Node n;
    n.op = Op::input;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Graph::param(Tensor value) {
    Node n;
    n.op = Op::param;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
        throw std::invalid_argument("matmul at node " + std::to_string(nodes_.size()) +
                                    ": incompatible shapes " + shape_string(ta) + " x " +
                                    shape_string(tb));
    Node n;
    n.op = Op::matmul;
    n.a = a;
    n.b = b;
    n.value = Tensor({ta.shape[0], tb.shape[1]});
    matmul_values(ta, tb, n.value);
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    bool broadcast = ta.rank() == 2 && tb.rank() == 1 && ta.shape[1] == tb.shape[0];
    if (!broadcast && !ta.same_shape(tb))
        throw std::invalid_argument("add at node " + std::to_string(nodes_.size()) +
                                    ": shape mismatch " + shape_string(ta) + " vs " +
                                    shape_string(tb));
    Node n;
    n.op = Op::add;
    n.a = a;
    n.b = b;
    n.value = ta;
    if (broadcast) {
        for (std::size_t i = 0; i < ta.shape[0]; ++i)
            for (std::size_t j = 0; j < ta.shape[1]; ++j) n.value.at(i, j) += tb.data[j];
    } else {
        for (std::size_t i = 0; i < ta.size(); ++i) n.value.data[i] += tb.data[i];
    }
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (!ta.same_shape(tb))
        throw std::invalid_argument("sub at node " + std::to_string(nodes_.size()) +
                                    ": shape mismatch " + shape_string(ta) + " vs " +
                                    shape_string(tb));
    Node n;
    n.op = Op::sub;
    n.a = a;
    n.b = b;
    n.value = ta;
    for (std::size_t i = 0; i < ta.size(); ++i) n.value.data[i] -= tb.data[i];
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (!ta.same_shape(tb))
        throw std::invalid_argument("mul at node " + std::to_string(nodes_.size()) +
                                    ": shape mismatch " + shape_string(ta) + " vs " +
                                    shape_string(tb));
    Node n;
    n.op = Op::mul;
    n.a = a;
    n.b = b;
    n.value = ta;
    for (std::size_t i = 0; i < ta.size(); ++i) n.value.data[i] *= tb.data[i];
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
    Node n;
    n.op = Op::scale;
    n.a = a;
    n.c = c;
    n.value = nodes_[a].value;
    for (auto& v : n.value.data) v *= c;
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::add_const(NodeId a, double c) {
    Node n;
    n.op = Op::add_const;
    n.a = a;
    n.c = c;
    n.value = nodes_[a].value;
    for (auto& v : n.value.data) v += c;
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
    Node n;
    n.op = Op::relu;
    n.a = a;
    n.value = nodes_[a].value;
    for (auto& v : n.value.data) v = v > 0.0 ? v : 0.0;
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
    Node n;
    n.op = Op::sigmoid;
    n.a = a;
    n.value = nodes_[a].value;
    for (auto& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
    Node n;
    n.op = Op::exp;
    n.a = a;
    n.value = nodes_[a].value;
    for (auto& v : n.value.data) v = std::exp(v);
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
    Node n;
    n.op = Op::log;
    n.a = a;
    n.value = nodes_[a].value;
    for (auto& v : n.value.data) v = std::log(v);
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    Node n;
    n.op = Op::sum;
    n.a = a;
    double s = 0.0;
    for (double v : nodes_[a].value.data) s += v;
    n.value = Tensor::scalar(s);
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
    Node n;
    n.op = Op::mean;
    n.a = a;
    double s = 0.0;
    for (double v : nodes_[a].value.data) s += v;
    n.value = Tensor::scalar(s / static_cast<double>(nodes_[a].value.size()));
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::stop_gradient(NodeId a) {
    Node n;
    n.op = Op::stop_gradient;
    n.a = a;
    n.value = nodes_[a].value;
    n.requires_grad = false;
    return push(std::move(n));
}

NodeId Graph::straight_through(NodeId encoder_out, NodeId quantized) {
    const Tensor& ta = nodes_[encoder_out].value;
    const Tensor& tb = nodes_[quantized].value;
    if (!ta.same_shape(tb))
        throw std::invalid_argument("straight_through at node " + std::to_string(nodes_.size()) +
                                    ": shape mismatch " + shape_string(ta) + " vs " +
                                    shape_string(tb));
    Node n;
    n.op = Op::straight_through;
    n.a = encoder_out;
    n.b = quantized;
    n.value = tb;
    n.requires_grad = nodes_[encoder_out].requires_grad;
    return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId table, const std::vector<std::size_t>& indices,
                          std::size_t out_rows) {
    const Tensor& t = nodes_[table].value;
    if (t.rank() != 2) throw std::invalid_argument("gather_rows: table must be rank 2");
    if (out_rows == 0 || indices.size() % out_rows != 0)
        throw std::invalid_argument("gather_rows: indices not divisible by out_rows");
    const std::size_t g = indices.size() / out_rows;
    const std::size_t dc = t.shape[1];
    for (std::size_t idx : indices)
        if (idx >= t.shape[0]) throw std::invalid_argument("gather_rows: index out of range");

    Node n;
    n.op = Op::gather_rows;
    n.a = table;
    n.idx = indices;
    n.value = Tensor({out_rows, g * dc});
    for (std::size_t r = 0; r < out_rows; ++r)
        for (std::size_t s = 0; s < g; ++s) {
            const double* src = t.data.data() + indices[r * g + s] * dc;
            double* dst = n.value.data.data() + r * g * dc + s * dc;
            for (std::size_t j = 0; j < dc; ++j) dst[j] = src[j];
        }
    n.requires_grad = nodes_[table].requires_grad;
    return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, std::size_t start, std::size_t count) {
    const Tensor& t = nodes_[a].value;
    if (t.rank() != 2 || start + count > t.shape[1])
        throw std::invalid_argument("slice_cols at node " + std::to_string(nodes_.size()) +
                                    ": range out of bounds for " + shape_string(t));
    Node n;
    n.op = Op::slice_cols;
    n.a = a;
    n.idx = {start, count};
    n.value = Tensor({t.shape[0], count});
    for (std::size_t i = 0; i < t.shape[0]; ++i)
        for (std::size_t j = 0; j < count; ++j) n.value.at(i, j) = t.at(i, start + j);
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

NodeId Graph::mse(NodeId a, NodeId b) {
    NodeId d = sub(a, b);
    return mean(mul(d, d));
}

NodeId Graph::kl_diag_gaussian(NodeId mu, NodeId log_var) {
    NodeId mu2 = mul(mu, mu);
    NodeId var = exp(log_var);
    NodeId inner = add_const(sub(add(mu2, var), log_var), -1.0);
    return scale(sum(inner), 0.5);
}

void Graph::backward(NodeId loss) {
    if (nodes_[loss].value.size() != 1)
        throw std::invalid_argument("backward: loss node must be scalar, got " +
                                    shape_string(nodes_[loss].value));
    for (auto& n : nodes_) {
        n.grad = Tensor(n.value.shape, 0.0);
    }
    nodes_[loss].grad.data[0] = 1.0;

    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::input:
            case Op::param:
                break;
            case Op::matmul: {
                Tensor& ga = nodes_[n.a].grad;
                Tensor& gb = nodes_[n.b].grad;
                const Tensor& va = nodes_[n.a].value;
                const Tensor& vb = nodes_[n.b].value;
                const std::size_t nn = va.shape[0], k = va.shape[1], m = vb.shape[1];
                // dA = dC * B^T
                for (std::size_t r = 0; r < nn; ++r)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double s = 0.0;
                        const double* grow = g.data.data() + r * m;
                        const double* brow = vb.data.data() + kk * m;
                        for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
                        ga.data[r * k + kk] += s;
                    }
                // dB = A^T * dC
                for (std::size_t r = 0; r < nn; ++r) {
                    const double* arow = va.data.data() + r * k;
                    const double* grow = g.data.data() + r * m;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double av = arow[kk];
                        if (av == 0.0) continue;
                        double* gbrow = gb.data.data() + kk * m;
                        for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
                    }
                }
                break;
            }
            case Op::add: {
                Tensor& ga = nodes_[n.a].grad;
                Tensor& gb = nodes_[n.b].grad;
                for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j];
                if (nodes_[n.b].value.rank() == 1 && n.value.rank() == 2) {
                    const std::size_t m = n.value.shape[1];
                    for (std::size_t r = 0; r < n.value.shape[0]; ++r)
                        for (std::size_t j = 0; j < m; ++j) gb.data[j] += g.data[r * m + j];
                } else {
                    for (std::size_t j = 0; j < g.size(); ++j) gb.data[j] += g.data[j];
                }
                break;
            }
            case Op::sub: {
                Tensor& ga = nodes_[n.a].grad;
                Tensor& gb = nodes_[n.b].grad;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga.data[j] += g.data[j];
                    gb.data[j] -= g.data[j];
                }
                break;
            }
            case Op::mul: {
                Tensor& ga = nodes_[n.a].grad;
                Tensor& gb = nodes_[n.b].grad;
                const Tensor& va = nodes_[n.a].value;
                const Tensor& vb = nodes_[n.b].value;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga.data[j] += g.data[j] * vb.data[j];
                    gb.data[j] += g.data[j] * va.data[j];
                }
                break;
            }
            case Op::scale: {
                Tensor& ga = nodes_[n.a].grad;
                for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += n.c * g.data[j];
                break;
            }
            case Op::add_const: {
                Tensor& ga = nodes_[n.a].grad;
                for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j];
                break;
            }
            case Op::relu: {
                Tensor& ga = nodes_[n.a].grad;
                const Tensor& va = nodes_[n.a].value;
                // gradient at exactly 0 is defined as 0
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (va.data[j] > 0.0) ga.data[j] += g.data[j];
                break;
            }
            case Op::sigmoid: {
                Tensor& ga = nodes_[n.a].grad;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    double y = n.value.data[j];
                    ga.data[j] += g.data[j] * y * (1.0 - y);
                }
                break;
            }
            case Op::exp: {
                Tensor& ga = nodes_[n.a].grad;
                for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j] * n.value.data[j];
                break;
            }
            case Op::log: {
                Tensor& ga = nodes_[n.a].grad;
                const Tensor& va = nodes_[n.a].value;
                for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j] / va.data[j];
                break;
            }
            case Op::sum: {
                Tensor& ga = nodes_[n.a].grad;
                for (auto& v : ga.data) v += g.data[0];
                break;
            }
            case Op::mean: {
                Tensor& ga = nodes_[n.a].grad;
                double gv = g.data[0] / static_cast<double>(ga.size());
                for (auto& v : ga.data) v += gv;
                break;
            }
            case Op::stop_gradient:
                break;
            case Op::straight_through: {
                Tensor& ga = nodes_[n.a].grad;
                for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j];
                break;
            }
            case Op::gather_rows: {
                Tensor& ga = nodes_[n.a].grad;
                const std::size_t dc = nodes_[n.a].value.shape[1];
                const std::size_t gslots = n.idx.size() / n.value.shape[0];
                for (std::size_t r = 0; r < n.value.shape[0]; ++r)
                    for (std::size_t s = 0; s < gslots; ++s) {
                        double* dst = ga.data.data() + n.idx[r * gslots + s] * dc;
                        const double* src = g.data.data() + r * gslots * dc + s * dc;
                        for (std::size_t j = 0; j < dc; ++j) dst[j] += src[j];
                    }
                break;
            }
            case Op::slice_cols: {
                Tensor& ga = nodes_[n.a].grad;
                const std::size_t start = n.idx[0], count = n.idx[1];
                const std::size_t full = nodes_[n.a].value.shape[1];
                for (std::size_t r = 0; r < n.value.shape[0]; ++r)
                    for (std::size_t j = 0; j < count; ++j)
                        ga.data[r * full + start + j] += g.data[r * count + j];
                break;
            }
        }
    }
}

double grad_check(const GraphBuilder& build_loss, const std::vector<Tensor>& params,
                  double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");

    auto evaluate = [&](const std::vector<Tensor>& p) {
        Graph g;
        std::vector<NodeId> ids;
        ids.reserve(p.size());
        for (const auto& t : p) ids.push_back(g.param(t));
        NodeId loss = build_loss(g, ids);
        return g.value(loss).data[0];
    };

    Graph g;
    std::vector<NodeId> ids;
    for (const auto& t : params) ids.push_back(g.param(t));
    NodeId loss = build_loss(g, ids);
    g.backward(loss);

    double max_rel = 0.0;
    std::vector<Tensor> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::size_t j = 0; j < params[pi].size(); ++j) {
            const double orig = work[pi].data[j];
            work[pi].data[j] = orig + epsilon;
            double up = evaluate(work);
            work[pi].data[j] = orig - epsilon;
            double down = evaluate(work);
            work[pi].data[j] = orig;

            double numeric = (up - down) / (2.0 * epsilon);
            double analytic = g.grad(ids[pi]).data[j];
            double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
            double rel = std::fabs(numeric - analytic) / denom;
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace vqclust
