#include "saliex/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace saliex::ops {
namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw contract_error(msg);
}

struct ConvGeom {
    int c_in, h, w, c_out, kh, kw, out_h, out_w;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& kernel, int stride, int pad) {
    require(x.rank() == 3, "conv2d: input must be [C,H,W]");
    require(kernel.rank() == 4, "conv2d: kernel must be [C_out,C_in,kh,kw]");
    if (stride < 1 || pad < 0) throw config_error("conv2d: stride must be >= 1 and pad >= 0");
    ConvGeom g;
    g.c_in = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.c_out = kernel.dim(0);
    g.kh = kernel.dim(2);
    g.kw = kernel.dim(3);
    if (kernel.dim(1) != g.c_in)
        throw contract_error("conv2d: kernel input channels " + std::to_string(kernel.dim(1)) +
                             " do not match input channels " + std::to_string(g.c_in));
    int span_h = g.h + 2 * pad - g.kh;
    int span_w = g.w + 2 * pad - g.kw;
    if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
        throw config_error("conv2d: output size is not integral for input " + x.shape_str() +
                           ", kernel " + kernel.shape_str() + ", stride " +
                           std::to_string(stride) + ", pad " + std::to_string(pad));
    g.out_h = span_h / stride + 1;
    g.out_w = span_w / stride + 1;
    return g;
}

// im2col for stride 1: rows indexed by (c,u,v), columns by output pixel.
void im2col_s1(const Tensor& x, const ConvGeom& g, int pad, std::vector<double>& col) {
    const std::int64_t n = static_cast<std::int64_t>(g.out_h) * g.out_w;
    col.assign(static_cast<std::size_t>(g.c_in) * g.kh * g.kw * n, 0.0);
    for (int c = 0; c < g.c_in; ++c) {
        const double* xp = x.data.data() + static_cast<std::size_t>(c) * g.h * g.w;
        for (int u = 0; u < g.kh; ++u) {
            for (int v = 0; v < g.kw; ++v) {
                double* crow = col.data() +
                               (static_cast<std::size_t>(c) * g.kh * g.kw + u * g.kw + v) * n;
                int ilo = std::max(0, pad - u);
                int ihi = std::min(g.out_h - 1, g.h - 1 + pad - u);
                int jlo = std::max(0, pad - v);
                int jhi = std::min(g.out_w - 1, g.w - 1 + pad - v);
                for (int i = ilo; i <= ihi; ++i) {
                    const double* src = xp + static_cast<std::size_t>(i + u - pad) * g.w +
                                        (jlo + v - pad);
                    std::memcpy(crow + static_cast<std::size_t>(i) * g.out_w + jlo, src,
                                static_cast<std::size_t>(jhi - jlo + 1) * sizeof(double));
                }
            }
        }
    }
}

// Transpose of im2col_s1: scatter-add columns back into the input layout.
void col2im_s1(const std::vector<double>& col, const ConvGeom& g, int pad, Tensor& grad_x) {
    const std::int64_t n = static_cast<std::int64_t>(g.out_h) * g.out_w;
    for (int c = 0; c < g.c_in; ++c) {
        double* xp = grad_x.data.data() + static_cast<std::size_t>(c) * g.h * g.w;
        for (int u = 0; u < g.kh; ++u) {
            for (int v = 0; v < g.kw; ++v) {
                const double* crow = col.data() +
                                     (static_cast<std::size_t>(c) * g.kh * g.kw + u * g.kw + v) * n;
                int ilo = std::max(0, pad - u);
                int ihi = std::min(g.out_h - 1, g.h - 1 + pad - u);
                int jlo = std::max(0, pad - v);
                int jhi = std::min(g.out_w - 1, g.w - 1 + pad - v);
                for (int i = ilo; i <= ihi; ++i) {
                    double* dst = xp + static_cast<std::size_t>(i + u - pad) * g.w +
                                  (jlo + v - pad);
                    const double* src = crow + static_cast<std::size_t>(i) * g.out_w + jlo;
                    for (int j = 0; j <= jhi - jlo; ++j) dst[j] += src[j];
                }
            }
        }
    }
}

bool is_pointwise(const ConvGeom& g, int pad) { return g.kh == 1 && g.kw == 1 && pad == 0; }

// Reference path for arbitrary stride; only cold configurations reach it.
void conv2d_direct(const Tensor& x, const Tensor& kernel, const ConvGeom& g, int stride, int pad,
                   Tensor& out) {
    for (int o = 0; o < g.c_out; ++o) {
        for (int i = 0; i < g.out_h; ++i) {
            for (int j = 0; j < g.out_w; ++j) {
                double acc = out.at(o, i, j);
                for (int c = 0; c < g.c_in; ++c) {
                    for (int u = 0; u < g.kh; ++u) {
                        int y = i * stride + u - pad;
                        if (y < 0 || y >= g.h) continue;
                        for (int v = 0; v < g.kw; ++v) {
                            int z = j * stride + v - pad;
                            if (z < 0 || z >= g.w) continue;
                            acc += x.at(c, y, z) * kernel.data[((static_cast<std::size_t>(o) *
                                                                 g.c_in + c) * g.kh + u) * g.kw + v];
                        }
                    }
                }
                out.at(o, i, j) = acc;
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad,
              std::vector<double>* col_cache) {
    ConvGeom g = conv_geometry(x, kernel, stride, pad);
    require(bias.rank() == 1 && bias.dim(0) == g.c_out,
            "conv2d: bias must be [C_out]");
    Tensor out({g.c_out, g.out_h, g.out_w});
    const std::int64_t n = static_cast<std::int64_t>(g.out_h) * g.out_w;
    for (int o = 0; o < g.c_out; ++o)
        std::fill_n(out.data.begin() + static_cast<std::size_t>(o) * n, n, bias.data[o]);

    if (stride == 1) {
        const int k = g.c_in * g.kh * g.kw;
        const double* col_ptr;
        std::vector<double> local_col;
        if (is_pointwise(g, pad)) {
            col_ptr = x.data.data();  // 1x1 conv: the input already is the column matrix
        } else {
            std::vector<double>& col = col_cache ? *col_cache : local_col;
            im2col_s1(x, g, pad, col);
            col_ptr = col.data();
        }
        detail::dgemm(false, false, g.c_out, static_cast<int>(n), k, 1.0, kernel.data.data(), k,
                      col_ptr, static_cast<int>(n), 1.0, out.data.data(), static_cast<int>(n));
    } else {
        conv2d_direct(x, kernel, g, stride, pad, out);
    }
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& kernel, int stride, int pad,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_kernel,
                     Tensor* grad_bias, const std::vector<double>* col_cache) {
    ConvGeom g = conv_geometry(x, kernel, stride, pad);
    require(grad_out.rank() == 3 && grad_out.dim(0) == g.c_out && grad_out.dim(1) == g.out_h &&
                grad_out.dim(2) == g.out_w,
            "conv2d_backward: grad_out shape mismatch");
    const std::int64_t n = static_cast<std::int64_t>(g.out_h) * g.out_w;

    if (grad_bias) {
        for (int o = 0; o < g.c_out; ++o) {
            const double* gp = grad_out.data.data() + static_cast<std::size_t>(o) * n;
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += gp[i];
            grad_bias->data[o] += acc;
        }
    }

    if (stride == 1) {
        const int k = g.c_in * g.kh * g.kw;
        if (grad_kernel) {
            const double* col_ptr;
            std::vector<double> local_col;
            if (is_pointwise(g, pad)) {
                col_ptr = x.data.data();
            } else if (col_cache && !col_cache->empty()) {
                col_ptr = col_cache->data();
            } else {
                im2col_s1(x, g, pad, local_col);
                col_ptr = local_col.data();
            }
            // dW (C_out x K) += grad_out (C_out x N) * col^T (N x K)
            detail::dgemm(false, true, g.c_out, k, static_cast<int>(n), 1.0,
                          grad_out.data.data(), static_cast<int>(n), col_ptr,
                          static_cast<int>(n), 1.0, grad_kernel->data.data(), k);
        }
        if (grad_x) {
            if (is_pointwise(g, pad)) {
                // dX (C_in x N) += W^T (C_in x C_out) * grad_out (C_out x N)
                detail::dgemm(true, false, g.c_in, static_cast<int>(n), g.c_out, 1.0,
                              kernel.data.data(), g.c_in, grad_out.data.data(),
                              static_cast<int>(n), 1.0, grad_x->data.data(),
                              static_cast<int>(n));
            } else {
                std::vector<double> dcol(static_cast<std::size_t>(k) * n);
                detail::dgemm(true, false, k, static_cast<int>(n), g.c_out, 1.0,
                              kernel.data.data(), k, grad_out.data.data(), static_cast<int>(n),
                              0.0, dcol.data(), static_cast<int>(n));
                col2im_s1(dcol, g, pad, *grad_x);
            }
        }
        return;
    }

    // General stride: direct accumulation.
    for (int o = 0; o < g.c_out; ++o) {
        for (int i = 0; i < g.out_h; ++i) {
            for (int j = 0; j < g.out_w; ++j) {
                double go = grad_out.at(o, i, j);
                if (go == 0.0) continue;
                for (int c = 0; c < g.c_in; ++c) {
                    for (int u = 0; u < g.kh; ++u) {
                        int y = i * stride + u - pad;
                        if (y < 0 || y >= g.h) continue;
                        for (int v = 0; v < g.kw; ++v) {
                            int z = j * stride + v - pad;
                            if (z < 0 || z >= g.w) continue;
                            std::size_t kidx = ((static_cast<std::size_t>(o) * g.c_in + c) * g.kh +
                                                u) * g.kw + v;
                            if (grad_kernel) grad_kernel->data[kidx] += go * x.at(c, y, z);
                            if (grad_x) grad_x->at(c, y, z) += go * kernel.data[kidx];
                        }
                    }
                }
            }
        }
    }
}

Tensor maxpool2d(const Tensor& x, int k, std::vector<std::int64_t>* argmax) {
    require(x.rank() == 3, "maxpool2d: input must be [C,H,W]");
    if (k < 1) throw config_error("maxpool2d: window must be positive");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % k != 0 || w % k != 0)
        throw config_error("maxpool2d: input " + x.shape_str() + " not divisible by window " +
                           std::to_string(k));
    const int oh = h / k, ow = w / k;
    Tensor out({c, oh, ow});
    if (argmax) argmax->assign(static_cast<std::size_t>(c) * oh * ow, 0);
    for (int ch = 0; ch < c; ++ch) {
        const double* xp = x.data.data() + static_cast<std::size_t>(ch) * h * w;
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                std::int64_t best_idx = static_cast<std::int64_t>(i) * k * w + j * k;
                double best = xp[best_idx];
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        std::int64_t idx = (static_cast<std::int64_t>(i) * k + u) * w + j * k + v;
                        if (xp[idx] > best) {  // strict: first-in-scan-order wins ties
                            best = xp[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.at(ch, i, j) = best;
                if (argmax)
                    (*argmax)[(static_cast<std::size_t>(ch) * oh + i) * ow + j] =
                        static_cast<std::int64_t>(ch) * h * w + best_idx;
            }
        }
    }
    return out;
}

void maxpool2d_backward(const std::vector<std::int64_t>& argmax, const Tensor& grad_out,
                        Tensor& grad_x) {
    require(argmax.size() == grad_out.data.size(), "maxpool2d_backward: argmax size mismatch");
    for (std::size_t i = 0; i < argmax.size(); ++i)
        grad_x.data[static_cast<std::size_t>(argmax[i])] += grad_out.data[i];
}

namespace {

struct LerpAxis {
    std::vector<int> lo, hi;
    std::vector<double> t;  // weight of hi
};

LerpAxis lerp_axis(int in_n, int out_n) {
    LerpAxis a;
    a.lo.resize(out_n);
    a.hi.resize(out_n);
    a.t.resize(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int d = 0; d < out_n; ++d) {
        double s = (d + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
        int lo = static_cast<int>(std::floor(s));
        a.lo[d] = lo;
        a.hi[d] = std::min(lo + 1, in_n - 1);
        a.t[d] = s - lo;
    }
    return a;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
    require(x.rank() == 3, "upsample_bilinear: input must be [C,H,W]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (out_h < h || out_w < w)
        throw contract_error("upsample_bilinear: target size must not shrink the input");
    if (out_h == h && out_w == w) return x;
    LerpAxis ay = lerp_axis(h, out_h);
    LerpAxis ax = lerp_axis(w, out_w);
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const double* xp = x.data.data() + static_cast<std::size_t>(ch) * h * w;
        double* op = out.data.data() + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const double* r0 = xp + static_cast<std::size_t>(ay.lo[i]) * w;
            const double* r1 = xp + static_cast<std::size_t>(ay.hi[i]) * w;
            const double ty = ay.t[i];
            double* orow = op + static_cast<std::size_t>(i) * out_w;
            for (int j = 0; j < out_w; ++j) {
                const double tx = ax.t[j];
                double top = r0[ax.lo[j]] + tx * (r0[ax.hi[j]] - r0[ax.lo[j]]);
                double bot = r1[ax.lo[j]] + tx * (r1[ax.hi[j]] - r1[ax.lo[j]]);
                orow[j] = top + ty * (bot - top);
            }
        }
    }
    return out;
}

void upsample_bilinear_backward(int in_h, int in_w, const Tensor& grad_out, Tensor& grad_x) {
    const int c = grad_out.dim(0), out_h = grad_out.dim(1), out_w = grad_out.dim(2);
    if (out_h == in_h && out_w == in_w) {
        for (std::size_t i = 0; i < grad_out.data.size(); ++i) grad_x.data[i] += grad_out.data[i];
        return;
    }
    LerpAxis ay = lerp_axis(in_h, out_h);
    LerpAxis ax = lerp_axis(in_w, out_w);
    for (int ch = 0; ch < c; ++ch) {
        double* xp = grad_x.data.data() + static_cast<std::size_t>(ch) * in_h * in_w;
        const double* gp = grad_out.data.data() + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const double ty = ay.t[i];
            double* r0 = xp + static_cast<std::size_t>(ay.lo[i]) * in_w;
            double* r1 = xp + static_cast<std::size_t>(ay.hi[i]) * in_w;
            const double* grow = gp + static_cast<std::size_t>(i) * out_w;
            for (int j = 0; j < out_w; ++j) {
                const double g = grow[j];
                const double tx = ax.t[j];
                r0[ax.lo[j]] += g * (1.0 - ty) * (1.0 - tx);
                r0[ax.hi[j]] += g * (1.0 - ty) * tx;
                r1[ax.lo[j]] += g * ty * (1.0 - tx);
                r1[ax.hi[j]] += g * ty * tx;
            }
        }
    }
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
    require(!xs.empty(), "concat_channels: empty input list");
    const int h = xs[0]->dim(1), w = xs[0]->dim(2);
    int total_c = 0;
    for (const Tensor* t : xs) {
        require(t->rank() == 3, "concat_channels: inputs must be [C,H,W]");
        if (t->dim(1) != h || t->dim(2) != w)
            throw contract_error("concat_channels: spatial mismatch, " + xs[0]->shape_str() +
                                 " vs " + t->shape_str());
        total_c += t->dim(0);
    }
    Tensor out({total_c, h, w});
    double* dst = out.data.data();
    for (const Tensor* t : xs) {
        std::memcpy(dst, t->data.data(), t->data.size() * sizeof(double));
        dst += t->data.size();
    }
    return out;
}

Tensor slice_channels(const Tensor& x, int c0, int channels) {
    require(x.rank() == 3 && c0 >= 0 && channels > 0 && c0 + channels <= x.dim(0),
            "slice_channels: block out of range");
    const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor out({channels, x.dim(1), x.dim(2)});
    std::memcpy(out.data.data(), x.data.data() + c0 * plane, channels * plane * sizeof(double));
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

void relu_backward(const Tensor& x, const Tensor& grad_out, Tensor& grad_x) {
    for (std::size_t i = 0; i < x.data.size(); ++i)
        if (x.data[i] > 0.0) grad_x.data[i] += grad_out.data[i];
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return out;
}

void sigmoid_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x) {
    for (std::size_t i = 0; i < y.data.size(); ++i)
        grad_x.data[i] += grad_out.data[i] * y.data[i] * (1.0 - y.data[i]);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw contract_error("add: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

double bce_with_logits(const Tensor& logits, const Tensor& target) {
    if (!logits.same_shape(target))
        throw contract_error("bce_with_logits: shape mismatch, " + logits.shape_str() + " vs " +
                             target.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        double t = target.data[i];
        if (t != 0.0 && t != 1.0)
            throw data_error("bce_with_logits: target values must be exactly 0 or 1");
        double z = logits.data[i];
        acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    return acc / static_cast<double>(logits.numel());
}

void bce_with_logits_backward(const Tensor& logits, const Tensor& target, double grad_loss,
                              Tensor& grad_logits) {
    const double inv_n = grad_loss / static_cast<double>(logits.numel());
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        double z = logits.data[i];
        double s;
        if (z >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-z));
        } else {
            double e = std::exp(z);
            s = e / (1.0 + e);
        }
        grad_logits.data[i] += inv_n * (s - target.data[i]);
    }
}

void sgd_step(std::vector<Parameter*>& params, double lr, double momentum, double weight_decay) {
    for (Parameter* p : params) {
        double* w = p->value.data.data();
        double* g = p->grad.data.data();
        double* v = p->momentum.data.data();
        const std::size_t n = p->value.data.size();
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = momentum * v[i] - lr * (g[i] + weight_decay * w[i]);
            w[i] += v[i];
        }
        p->zero_grad();
    }
}

}  // namespace saliex::ops
