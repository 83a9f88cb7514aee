#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "saliex/kernels.hpp"
#include "saliex/tensor.hpp"

namespace saliex {

// Handle into a Tape's node vector.
struct NodeRef {
    int index = -1;
};

// Records executed operations so that backward() can populate exact
// gradients for every Parameter reachable from a scalar loss. A tape is
// single-threaded; distinct tapes over shared read-only parameters may run
// concurrently.
class Tape {
public:
    // Constant leaf: no gradient flows into it.
    NodeRef input(Tensor t);
    // Parameter leaf: backward() accumulates into p.grad.
    NodeRef param(Parameter& p);

    NodeRef conv2d(NodeRef x, NodeRef kernel, NodeRef bias, int stride, int pad);
    NodeRef maxpool2d(NodeRef x, int k);
    NodeRef upsample_bilinear(NodeRef x, int out_h, int out_w);
    NodeRef concat_channels(const std::vector<NodeRef>& xs);
    NodeRef relu(NodeRef x);
    NodeRef sigmoid(NodeRef x);
    NodeRef add(NodeRef a, NodeRef b);
    // Scalar nodes.
    NodeRef bce_with_logits(NodeRef logits, Tensor target);
    NodeRef sum(NodeRef x);
    NodeRef square(NodeRef x);          // elementwise
    NodeRef scale(NodeRef x, double a);  // elementwise multiply by a constant

    // Valid until the next op is recorded.
    const Tensor& value(NodeRef r) const { return nodes_[static_cast<std::size_t>(r.index)].value; }

    // Seeds the scalar loss with gradient 1 and replays the tape backward.
    void backward(NodeRef loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on first contribution
        bool needs_grad = false;
        Parameter* parameter = nullptr;
        std::function<void(Tape&, const Tensor& grad_out)> backprop;
    };

    friend struct TapeAccess;

    NodeRef push(Tensor value, bool needs_grad,
                 std::function<void(Tape&, const Tensor&)> backprop);
    // Gradient buffer of node i, or nullptr when no gradient is wanted there.
    Tensor* maybe_grad(int i);
    const Tensor& value_at(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }
    bool wants_grad(int i) const { return nodes_[static_cast<std::size_t>(i)].needs_grad; }

    std::vector<Node> nodes_;
};

}  // namespace saliex
