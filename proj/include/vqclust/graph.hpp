#pragma once

#include <functional>
#include <vector>

#include "vqclust/tensor.hpp"

namespace vqclust {

using NodeId = std::size_t;

// Reverse-mode tape over dense tensors. Nodes are evaluated eagerly as they
// are created, so construction order is the topological order and forward
// values are always cached. One Graph instance serves one forward/backward
// pass and is not shared between threads.
class Graph {
public:
    enum class Op {
        input, param, matmul, add, sub, mul, scale, add_const, relu, sigmoid,
        exp, log, sum, mean, stop_gradient, straight_through, gather_rows, slice_cols
    };

    struct Node {
        Op op;
        NodeId a = 0;
        NodeId b = 0;
        double c = 0.0;                 // scalar operand (scale / add_const)
        std::vector<std::size_t> idx;   // gather indices or slice [start, count]
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
    };

    NodeId input(Tensor value);
    NodeId param(Tensor value);

    NodeId matmul(NodeId a, NodeId b);
    // same-shape elementwise add, or (n,m) + (m) row broadcast for biases
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_const(NodeId a, double c);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId stop_gradient(NodeId a);

    // Forward value comes from quantized; the backward gradient is copied
    // unchanged to encoder_out, and none reaches quantized.
    NodeId straight_through(NodeId encoder_out, NodeId quantized);

    // out has out_rows rows; row r is the concatenation of table rows
    // indices[r*g .. r*g+g-1] where g = indices.size() / out_rows.
    // Gradients accumulate into the selected table rows.
    NodeId gather_rows(NodeId table, const std::vector<std::size_t>& indices,
                       std::size_t out_rows);

    NodeId slice_cols(NodeId a, std::size_t start, std::size_t count);

    // composite helpers built from the primitive ops
    NodeId mse(NodeId a, NodeId b);                       // mean((a-b)^2)
    NodeId kl_diag_gaussian(NodeId mu, NodeId log_var);   // 0.5*sum(mu^2+exp(lv)-lv-1)

    const Tensor& value(NodeId n) const { return nodes_[n].value; }
    const Tensor& grad(NodeId n) const { return nodes_[n].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Reverse sweep from a scalar loss. Gradients of every param node are
    // populated; parameters unreachable from the loss keep zero gradients.
    void backward(NodeId loss);

private:
    NodeId push(Node n);
    std::vector<Node> nodes_;
};

// Central finite-difference check of the tape. build_loss must construct a
// scalar loss from the given parameter nodes; it is re-invoked with
// perturbed parameter values, so it must be a pure function of them.
// Returns the max relative error with denominator max(|a|,|b|,1e-8).
using GraphBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;
double grad_check(const GraphBuilder& build_loss, const std::vector<Tensor>& params,
                  double epsilon = 1e-5);

}  // namespace vqclust
