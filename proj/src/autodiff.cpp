#include "saliex/autodiff.hpp"

#include <utility>

namespace saliex {

NodeRef Tape::push(Tensor value, bool needs_grad,
                   std::function<void(Tape&, const Tensor&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return NodeRef{static_cast<int>(nodes_.size()) - 1};
}

Tensor* Tape::maybe_grad(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad) return nullptr;
    if (n.grad.data.empty()) n.grad = Tensor::zeros_like(n.value);
    return &n.grad;
}

NodeRef Tape::input(Tensor t) { return push(std::move(t), false, nullptr); }

NodeRef Tape::param(Parameter& p) {
    NodeRef r = push(p.value, true, nullptr);
    nodes_.back().parameter = &p;
    return r;
}

NodeRef Tape::conv2d(NodeRef x, NodeRef kernel, NodeRef bias, int stride, int pad) {
    auto col = std::make_shared<std::vector<double>>();
    Tensor out = ops::conv2d(value_at(x.index), value_at(kernel.index), value_at(bias.index),
                             stride, pad, col.get());
    bool ng = wants_grad(x.index) || wants_grad(kernel.index) || wants_grad(bias.index);
    return push(std::move(out), ng,
                [xi = x.index, wi = kernel.index, bi = bias.index, stride, pad,
                 col](Tape& t, const Tensor& gout) {
                    Tensor* gx = t.maybe_grad(xi);
                    Tensor* gw = t.maybe_grad(wi);
                    Tensor* gb = t.maybe_grad(bi);
                    if (!gx && !gw && !gb) return;
                    ops::conv2d_backward(t.value_at(xi), t.value_at(wi), stride, pad, gout, gx,
                                         gw, gb, col.get());
                });
}

NodeRef Tape::maxpool2d(NodeRef x, int k) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor out = ops::maxpool2d(value_at(x.index), k, argmax.get());
    return push(std::move(out), wants_grad(x.index),
                [xi = x.index, argmax](Tape& t, const Tensor& gout) {
                    if (Tensor* gx = t.maybe_grad(xi)) ops::maxpool2d_backward(*argmax, gout, *gx);
                });
}

NodeRef Tape::upsample_bilinear(NodeRef x, int out_h, int out_w) {
    const Tensor& in = value_at(x.index);
    const int in_h = in.dim(1), in_w = in.dim(2);
    Tensor out = ops::upsample_bilinear(in, out_h, out_w);
    return push(std::move(out), wants_grad(x.index),
                [xi = x.index, in_h, in_w](Tape& t, const Tensor& gout) {
                    if (Tensor* gx = t.maybe_grad(xi))
                        ops::upsample_bilinear_backward(in_h, in_w, gout, *gx);
                });
}

NodeRef Tape::concat_channels(const std::vector<NodeRef>& xs) {
    std::vector<const Tensor*> ins;
    ins.reserve(xs.size());
    bool ng = false;
    std::vector<int> indices;
    for (NodeRef r : xs) {
        ins.push_back(&value_at(r.index));
        ng = ng || wants_grad(r.index);
        indices.push_back(r.index);
    }
    Tensor out = ops::concat_channels(ins);
    return push(std::move(out), ng, [indices](Tape& t, const Tensor& gout) {
        const std::size_t plane = static_cast<std::size_t>(gout.dim(1)) * gout.dim(2);
        std::size_t offset = 0;
        for (int idx : indices) {
            const std::size_t block = static_cast<std::size_t>(t.value_at(idx).dim(0)) * plane;
            if (Tensor* gx = t.maybe_grad(idx)) {
                for (std::size_t i = 0; i < block; ++i) gx->data[i] += gout.data[offset + i];
            }
            offset += block;
        }
    });
}

NodeRef Tape::relu(NodeRef x) {
    Tensor out = ops::relu(value_at(x.index));
    return push(std::move(out), wants_grad(x.index),
                [xi = x.index](Tape& t, const Tensor& gout) {
                    if (Tensor* gx = t.maybe_grad(xi))
                        ops::relu_backward(t.value_at(xi), gout, *gx);
                });
}

NodeRef Tape::sigmoid(NodeRef x) {
    Tensor out = ops::sigmoid(value_at(x.index));
    NodeRef r = push(std::move(out), wants_grad(x.index), nullptr);
    nodes_.back().backprop = [xi = x.index, yi = r.index](Tape& t, const Tensor& gout) {
        if (Tensor* gx = t.maybe_grad(xi)) ops::sigmoid_backward(t.value_at(yi), gout, *gx);
    };
    return r;
}

NodeRef Tape::add(NodeRef a, NodeRef b) {
    Tensor out = ops::add(value_at(a.index), value_at(b.index));
    bool ng = wants_grad(a.index) || wants_grad(b.index);
    return push(std::move(out), ng, [ai = a.index, bi = b.index](Tape& t, const Tensor& gout) {
        for (int idx : {ai, bi}) {
            if (Tensor* g = t.maybe_grad(idx)) {
                for (std::size_t i = 0; i < gout.data.size(); ++i) g->data[i] += gout.data[i];
            }
        }
    });
}

NodeRef Tape::bce_with_logits(NodeRef logits, Tensor target) {
    auto tgt = std::make_shared<Tensor>(std::move(target));
    double loss = ops::bce_with_logits(value_at(logits.index), *tgt);
    Tensor out({1});
    out.data[0] = loss;
    return push(std::move(out), wants_grad(logits.index),
                [li = logits.index, tgt](Tape& t, const Tensor& gout) {
                    if (Tensor* gx = t.maybe_grad(li))
                        ops::bce_with_logits_backward(t.value_at(li), *tgt, gout.data[0], *gx);
                });
}

NodeRef Tape::sum(NodeRef x) {
    const Tensor& in = value_at(x.index);
    Tensor out({1});
    for (double v : in.data) out.data[0] += v;
    return push(std::move(out), wants_grad(x.index),
                [xi = x.index](Tape& t, const Tensor& gout) {
                    if (Tensor* gx = t.maybe_grad(xi)) {
                        for (double& g : gx->data) g += gout.data[0];
                    }
                });
}

NodeRef Tape::square(NodeRef x) {
    Tensor out = value_at(x.index);
    for (double& v : out.data) v *= v;
    return push(std::move(out), wants_grad(x.index),
                [xi = x.index](Tape& t, const Tensor& gout) {
                    if (Tensor* gx = t.maybe_grad(xi)) {
                        const Tensor& in = t.value_at(xi);
                        for (std::size_t i = 0; i < in.data.size(); ++i)
                            gx->data[i] += 2.0 * in.data[i] * gout.data[i];
                    }
                });
}

void Tape::backward(NodeRef loss) {
    Node& ln = nodes_.at(static_cast<std::size_t>(loss.index));
    if (ln.value.numel() != 1) throw contract_error("backward: loss must be a scalar");
    if (ln.grad.data.empty()) ln.grad = Tensor::zeros_like(ln.value);
    ln.grad.data[0] = 1.0;
    for (int i = loss.index; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.data.empty()) continue;
        if (n.backprop) n.backprop(*this, n.grad);
        if (n.parameter) {
            for (std::size_t j = 0; j < n.grad.data.size(); ++j)
                n.parameter->grad.data[j] += n.grad.data[j];
        }
    }
}

}  // namespace saliex
