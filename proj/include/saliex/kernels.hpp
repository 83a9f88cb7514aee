#pragma once

#include <vector>

#include "saliex/tensor.hpp"

// Forward/backward compute kernels for every layer the encoder needs.
// These are pure functions on tensors; the autodiff tape wraps them.

namespace saliex::ops {

// x: [C_in,H,W], kernel: [C_out,C_in,kh,kw], bias: [C_out].
// Zero padding; output size must come out integral for the given stride.
// When col_cache is non-null and the stride-1 GEMM path is taken, the im2col
// matrix is stored there for reuse by the backward pass.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad,
              std::vector<double>* col_cache = nullptr);

// Gradients for conv2d. Any of grad_x/grad_kernel/grad_bias may be null to
// skip that output. col_cache may hold the forward's im2col matrix.
void conv2d_backward(const Tensor& x, const Tensor& kernel, int stride, int pad,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_kernel,
                     Tensor* grad_bias, const std::vector<double>* col_cache = nullptr);

// Non-overlapping k x k max pooling; H and W must be divisible by k.
// argmax (flat input indices, one per output element) feeds the backward
// pass; ties resolve to the first element in scan order.
Tensor maxpool2d(const Tensor& x, int k, std::vector<std::int64_t>* argmax = nullptr);
void maxpool2d_backward(const std::vector<std::int64_t>& argmax, const Tensor& grad_out,
                        Tensor& grad_x);

// Bilinear upsampling with half-pixel centers: source = (dst+0.5)*scale - 0.5,
// clamped. Exact on constants; requires out_h >= h and out_w >= w.
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
void upsample_bilinear_backward(int in_h, int in_w, const Tensor& grad_out, Tensor& grad_x);

// Stack channel blocks in argument order; all spatial dims must match.
Tensor concat_channels(const std::vector<const Tensor*>& xs);
// Extract the channel block [c0,c0+channels) — the inverse used by backward.
Tensor slice_channels(const Tensor& x, int c0, int channels);

Tensor relu(const Tensor& x);
void relu_backward(const Tensor& x, const Tensor& grad_out, Tensor& grad_x);

Tensor sigmoid(const Tensor& x);
void sigmoid_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x);

Tensor add(const Tensor& a, const Tensor& b);

// Mean over pixels of the stable form max(z,0) - z*t + log(1+exp(-|z|)).
// target values must be exactly 0 or 1.
double bce_with_logits(const Tensor& logits, const Tensor& target);
void bce_with_logits_backward(const Tensor& logits, const Tensor& target, double grad_loss,
                              Tensor& grad_logits);

// Heavy-ball update with coupled weight decay:
//   v <- momentum*v - lr*(g + weight_decay*w);  w <- w + v
// Gradients are cleared afterwards.
void sgd_step(std::vector<Parameter*>& params, double lr, double momentum, double weight_decay);

}  // namespace saliex::ops
