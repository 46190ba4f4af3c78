#pragma once

#include <limits>
#include <tuple>
#include <vector>

#include "rccn/tensor.hpp"

namespace rccn {

/// Convolution parameters. Weights are Cout x Cin x kh x kw. For conv2d the
/// bias has Cout entries; for deconv2d (the adjoint map, Cout -> Cin) the
/// bias has Cin entries.
struct ConvParams {
    Tensor weights;
    Tensor bias;
    int stride = 1;
    int padding = 0;
    int dilation = 1;

    int cout() const { return weights.dim(0); }
    int cin() const { return weights.dim(1); }
    int kh() const { return weights.dim(2); }
    int kw() const { return weights.dim(3); }

    void validate() const {
        if (weights.ndim() != 4)
            throw std::invalid_argument("ConvParams: weights must be Cout x Cin x kh x kw");
        if (stride < 1) throw std::invalid_argument("ConvParams: stride must be >= 1");
        if (padding < 0) throw std::invalid_argument("ConvParams: padding must be >= 0");
        if (dilation < 1) throw std::invalid_argument("ConvParams: dilation must be >= 1");
    }
};

inline int conv_out_extent(int in, int pad, int k, int dilation, int stride) {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

/// Cross-correlation with zero padding; effective kernel extent
/// dilation*(k-1)+1. Input N x Cin x H x W -> N x Cout x OH x OW.
inline Tensor conv2d(const Tensor& input, const ConvParams& p) {
    p.validate();
    if (input.ndim() != 4)
        throw std::invalid_argument("conv2d: input must be N x C x H x W, got " +
                                    input.shape_str());
    if (input.dim(1) != p.cin())
        throw std::invalid_argument("conv2d: input channel count " + std::to_string(input.dim(1)) +
                                    " does not match kernel Cin " + std::to_string(p.cin()));
    if (p.bias.numel() != p.cout())
        throw std::invalid_argument("conv2d: bias length must equal Cout");
    const int N = input.dim(0), C = p.cin(), H = input.dim(2), W = input.dim(3);
    const int OC = p.cout(), KH = p.kh(), KW = p.kw();
    const int s = p.stride, pad = p.padding, d = p.dilation;
    const int OH = conv_out_extent(H, pad, KH, d, s);
    const int OW = conv_out_extent(W, pad, KW, d, s);
    if (OH < 1 || OW < 1)
        throw std::invalid_argument("conv2d: output spatial extent < 1 for input " +
                                    input.shape_str());

    Tensor out({N, OC, OH, OW});
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            double* outp = &out.at(n, oc, 0, 0);
            const double b = p.bias.data[static_cast<size_t>(oc)];
            for (long i = 0; i < static_cast<long>(OH) * OW; ++i) outp[i] = b;
            for (int ic = 0; ic < C; ++ic) {
                const double* inp = &input.at(n, ic, 0, 0);
                const double* wrow = &p.weights.at(oc, ic, 0, 0);
                for (int kh = 0; kh < KH; ++kh) {
                    const int ihoff = kh * d - pad;
                    // valid oh range so that 0 <= oh*s + ihoff < H
                    int oh_lo = ihoff < 0 ? (-ihoff + s - 1) / s : 0;
                    int oh_hi = std::min(OH - 1, (H - 1 - ihoff) / s);
                    for (int kw = 0; kw < KW; ++kw) {
                        const double w = wrow[kh * KW + kw];
                        if (w == 0.0) continue;
                        const int iwoff = kw * d - pad;
                        int ow_lo = iwoff < 0 ? (-iwoff + s - 1) / s : 0;
                        int ow_hi = std::min(OW - 1, (W - 1 - iwoff) / s);
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            double* orow = outp + static_cast<long>(oh) * OW;
                            const double* irow = inp + static_cast<long>(oh * s + ihoff) * W + iwoff;
                            if (s == 1) {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                    orow[ow] += w * irow[ow];
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                    orow[ow] += w * irow[ow * s];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Exact adjoints of conv2d with respect to input, weights, and bias.
inline std::tuple<Tensor, Tensor, Tensor> conv2d_backward(const Tensor& input,
                                                          const ConvParams& p,
                                                          const Tensor& grad_out) {
    p.validate();
    const int N = input.dim(0), C = p.cin(), H = input.dim(2), W = input.dim(3);
    const int OC = p.cout(), KH = p.kh(), KW = p.kw();
    const int s = p.stride, pad = p.padding, d = p.dilation;
    const int OH = conv_out_extent(H, pad, KH, d, s);
    const int OW = conv_out_extent(W, pad, KW, d, s);
    if (grad_out.shape != std::vector<int>{N, OC, OH, OW})
        throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                                    " does not match conv output");

    Tensor gin(input.shape);
    Tensor gw(p.weights.shape);
    Tensor gb({OC});
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            const double* gop = &grad_out.at(n, oc, 0, 0);
            double acc = 0.0;
            for (long i = 0; i < static_cast<long>(OH) * OW; ++i) acc += gop[i];
            gb.data[static_cast<size_t>(oc)] += acc;
            for (int ic = 0; ic < C; ++ic) {
                const double* inp = &input.at(n, ic, 0, 0);
                double* ginp = &gin.at(n, ic, 0, 0);
                const double* wrow = &p.weights.at(oc, ic, 0, 0);
                double* gwrow = &gw.at(oc, ic, 0, 0);
                for (int kh = 0; kh < KH; ++kh) {
                    const int ihoff = kh * d - pad;
                    int oh_lo = ihoff < 0 ? (-ihoff + s - 1) / s : 0;
                    int oh_hi = std::min(OH - 1, (H - 1 - ihoff) / s);
                    for (int kw = 0; kw < KW; ++kw) {
                        const double w = wrow[kh * KW + kw];
                        const int iwoff = kw * d - pad;
                        int ow_lo = iwoff < 0 ? (-iwoff + s - 1) / s : 0;
                        int ow_hi = std::min(OW - 1, (W - 1 - iwoff) / s);
                        double wacc = 0.0;
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            const double* gorow = gop + static_cast<long>(oh) * OW;
                            const double* irow = inp + static_cast<long>(oh * s + ihoff) * W + iwoff;
                            double* girow = ginp + static_cast<long>(oh * s + ihoff) * W + iwoff;
                            if (s == 1) {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                    wacc += gorow[ow] * irow[ow];
                                    girow[ow] += w * gorow[ow];
                                }
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                    wacc += gorow[ow] * irow[ow * s];
                                    girow[ow * s] += w * gorow[ow];
                                }
                            }
                        }
                        gwrow[kh * KW + kw] += wacc;
                    }
                }
            }
        }
    }
    return {std::move(gin), std::move(gw), std::move(gb)};
}

struct PoolResult {
    Tensor output;
    std::vector<long> argmax;  // flat index into the input tensor per output element
};

/// Max pooling with optional asymmetric -inf padding. Ties route to the
/// smallest flat index (scan order). The end padding variant keeps stride-1
/// pooling size-preserving with an even window.
inline PoolResult maxpool2d_padded(const Tensor& input, int window, int stride, int pad_begin,
                                   int pad_end) {
    if (input.ndim() != 4)
        throw std::invalid_argument("maxpool2d: input must be N x C x H x W");
    if (window < 1 || stride < 1)
        throw std::invalid_argument("maxpool2d: window and stride must be >= 1");
    if (pad_begin < 0 || pad_end < 0)
        throw std::invalid_argument("maxpool2d: padding must be >= 0");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int PH = H + pad_begin + pad_end, PW = W + pad_begin + pad_end;
    if (window > PH || window > PW)
        throw std::invalid_argument("maxpool2d: window " + std::to_string(window) +
                                    " larger than padded input " + std::to_string(PH) + "x" +
                                    std::to_string(PW));
    const int OH = (PH - window) / stride + 1;
    const int OW = (PW - window) / stride + 1;

    PoolResult r;
    r.output = Tensor({N, C, OH, OW});
    r.argmax.assign(static_cast<size_t>(r.output.numel()), -1);
    size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++oi) {
                    double best = -std::numeric_limits<double>::infinity();
                    long besti = -1;
                    for (int kh = 0; kh < window; ++kh) {
                        const int ih = oh * stride - pad_begin + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (int kw = 0; kw < window; ++kw) {
                            const int iw = ow * stride - pad_begin + kw;
                            if (iw < 0 || iw >= W) continue;
                            const double v = input.at(n, c, ih, iw);
                            if (v > best) {
                                best = v;
                                besti = input.index4(n, c, ih, iw);
                            }
                        }
                    }
                    r.output.data[oi] = best;
                    r.argmax[oi] = besti;
                }
    return r;
}

inline PoolResult maxpool2d(const Tensor& input, int window, int stride) {
    return maxpool2d_padded(input, window, stride, 0, 0);
}

/// Routes exactly one unit of gradient per pooled window to the cached argmax.
inline Tensor maxpool2d_backward(const std::vector<int>& input_shape, const PoolResult& pooled,
                                 const Tensor& grad_out) {
    if (grad_out.shape != pooled.output.shape)
        throw std::invalid_argument("maxpool2d_backward: grad_out shape mismatch");
    Tensor gin(input_shape);
    for (size_t i = 0; i < pooled.argmax.size(); ++i)
        gin.data[static_cast<size_t>(pooled.argmax[i])] += grad_out.data[i];
    return gin;
}

/// Transposed convolution: the exact adjoint of conv2d's input-gradient map
/// with the same parameters. Input has Cout channels, output Cin; output
/// spatial extent (H-1)*stride - 2*pad + dilation*(k-1) + 1. Bias (Cin
/// entries) is broadcast over the output.
inline Tensor deconv2d(const Tensor& input, const ConvParams& p) {
    p.validate();
    if (input.ndim() != 4)
        throw std::invalid_argument("deconv2d: input must be N x C x H x W");
    if (input.dim(1) != p.cout())
        throw std::invalid_argument("deconv2d: input channel count " +
                                    std::to_string(input.dim(1)) + " does not match kernel Cout " +
                                    std::to_string(p.cout()));
    if (p.bias.numel() != p.cin())
        throw std::invalid_argument("deconv2d: bias length must equal Cin");
    const int N = input.dim(0), OC = p.cout(), H = input.dim(2), W = input.dim(3);
    const int C = p.cin(), KH = p.kh(), KW = p.kw();
    const int s = p.stride, pad = p.padding, d = p.dilation;
    const int OH = (H - 1) * s - 2 * pad + d * (KH - 1) + 1;
    const int OW = (W - 1) * s - 2 * pad + d * (KW - 1) + 1;
    if (OH < 1 || OW < 1)
        throw std::invalid_argument("deconv2d: output spatial extent < 1");

    Tensor out({N, C, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int ic = 0; ic < C; ++ic) {
            double* outp = &out.at(n, ic, 0, 0);
            const double b = p.bias.data[static_cast<size_t>(ic)];
            for (long i = 0; i < static_cast<long>(OH) * OW; ++i) outp[i] = b;
            for (int oc = 0; oc < OC; ++oc) {
                const double* inp = &input.at(n, oc, 0, 0);
                const double* wrow = &p.weights.at(oc, ic, 0, 0);
                for (int kh = 0; kh < KH; ++kh)
                    for (int kw = 0; kw < KW; ++kw) {
                        const double w = wrow[kh * KW + kw];
                        if (w == 0.0) continue;
                        for (int ih = 0; ih < H; ++ih) {
                            const int oh = ih * s - pad + kh * d;
                            if (oh < 0 || oh >= OH) continue;
                            double* orow = outp + static_cast<long>(oh) * OW;
                            const double* irow = inp + static_cast<long>(ih) * W;
                            for (int iw = 0; iw < W; ++iw) {
                                const int ow = iw * s - pad + kw * d;
                                if (ow < 0 || ow >= OW) continue;
                                orow[ow] += w * irow[iw];
                            }
                        }
                    }
            }
        }
    return out;
}

/// Adjoints of deconv2d. Since deconv2d(y, p) is conv2d's input-gradient map,
/// grad wrt the deconv input is conv2d with zero bias, and grad_weights is the
/// conv weight gradient with the roles of activation/cotangent swapped.
inline std::tuple<Tensor, Tensor, Tensor> deconv2d_backward(const Tensor& input,
                                                            const ConvParams& p,
                                                            const Tensor& grad_out) {
    // grad_out plays the conv "input" role; input plays the conv "grad_out" role.
    ConvParams q = p;
    q.bias = Tensor::zeros({p.cout()});
    Tensor gin = conv2d(grad_out, q);
    auto [unused_gin, gw, unused_gb] = conv2d_backward(grad_out, q, input);
    (void)unused_gin;
    (void)unused_gb;
    Tensor gb({p.cin()});
    const int N = grad_out.dim(0), C = p.cin(), OH = grad_out.dim(2), OW = grad_out.dim(3);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* g = &grad_out.at(n, c, 0, 0);
            double acc = 0.0;
            for (long i = 0; i < static_cast<long>(OH) * OW; ++i) acc += g[i];
            gb.data[static_cast<size_t>(c)] += acc;
        }
    return {std::move(gin), std::move(gw), std::move(gb)};
}

/// Affine map y = Wx + b on a flattened input. Weights are out x in.
inline Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.ndim() != 2)
        throw std::invalid_argument("fully_connected: weights must be out x in");
    const int out = weights.dim(0), in = weights.dim(1);
    if (input.numel() != in)
        throw std::invalid_argument("fully_connected: input length " +
                                    std::to_string(input.numel()) + " does not match fan-in " +
                                    std::to_string(in));
    if (bias.numel() != out)
        throw std::invalid_argument("fully_connected: bias length must equal fan-out");
    Tensor y({out});
    for (int o = 0; o < out; ++o) {
        const double* w = &weights.data[static_cast<size_t>(o) * in];
        double acc = bias.data[static_cast<size_t>(o)];
        for (int i = 0; i < in; ++i) acc += w[i] * input.data[static_cast<size_t>(i)];
        y.data[static_cast<size_t>(o)] = acc;
    }
    return y;
}

inline std::tuple<Tensor, Tensor, Tensor> fully_connected_backward(const Tensor& input,
                                                                   const Tensor& weights,
                                                                   const Tensor& grad_out) {
    const int out = weights.dim(0), in = weights.dim(1);
    if (grad_out.numel() != out)
        throw std::invalid_argument("fully_connected_backward: grad_out length mismatch");
    Tensor gin(input.shape);
    Tensor gw(weights.shape);
    Tensor gb({out});
    for (int o = 0; o < out; ++o) {
        const double g = grad_out.data[static_cast<size_t>(o)];
        gb.data[static_cast<size_t>(o)] = g;
        const double* w = &weights.data[static_cast<size_t>(o) * in];
        double* gwr = &gw.data[static_cast<size_t>(o) * in];
        for (int i = 0; i < in; ++i) {
            gwr[i] = g * input.data[static_cast<size_t>(i)];
            gin.data[static_cast<size_t>(i)] += g * w[i];
        }
    }
    return {std::move(gin), std::move(gw), std::move(gb)};
}

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

/// Gradient gate from the forward input; zero at x <= 0.
inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    if (!input.same_shape(grad_out))
        throw std::invalid_argument("relu_backward: shape mismatch");
    Tensor gin(input.shape);
    for (size_t i = 0; i < input.data.size(); ++i)
        gin.data[i] = input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return gin;
}

/// Stacks along channels preserving argument order.
inline Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Tensor& first = *parts.front();
    if (first.ndim() != 4) throw std::invalid_argument("concat_channels: inputs must be 4D");
    int total_c = 0;
    for (const Tensor* t : parts) {
        if (t->dim(0) != first.dim(0) || t->dim(2) != first.dim(2) || t->dim(3) != first.dim(3))
            throw std::invalid_argument("concat_channels: spatial/batch mismatch between " +
                                        first.shape_str() + " and " + t->shape_str());
        total_c += t->dim(1);
    }
    const int N = first.dim(0), H = first.dim(2), W = first.dim(3);
    Tensor out({N, total_c, H, W});
    for (int n = 0; n < N; ++n) {
        int coff = 0;
        for (const Tensor* t : parts) {
            const int C = t->dim(1);
            std::copy(&t->at(n, 0, 0, 0), &t->at(n, 0, 0, 0) + static_cast<long>(C) * H * W,
                      &out.at(n, coff, 0, 0));
            coff += C;
        }
    }
    return out;
}

inline std::vector<Tensor> concat_channels_backward(const std::vector<const Tensor*>& parts,
                                                    const Tensor& grad_out) {
    std::vector<Tensor> grads;
    const int N = grad_out.dim(0), H = grad_out.dim(2), W = grad_out.dim(3);
    int coff = 0;
    for (const Tensor* t : parts) {
        Tensor g(t->shape);
        const int C = t->dim(1);
        for (int n = 0; n < N; ++n)
            std::copy(&grad_out.at(n, coff, 0, 0),
                      &grad_out.at(n, coff, 0, 0) + static_cast<long>(C) * H * W,
                      &g.at(n, 0, 0, 0));
        coff += C;
        grads.push_back(std::move(g));
    }
    return grads;
}

/// Align-corners-false bilinear sampling on the two trailing spatial axes.
/// Accepts H x W or N x C x H x W.
inline Tensor bilinear_resize(const Tensor& input, int new_h, int new_w) {
    if (new_h < 1 || new_w < 1)
        throw std::invalid_argument("bilinear_resize: target extents must be >= 1");
    std::vector<int> s = input.shape;
    int H, W, planes;
    if (input.ndim() == 2) {
        H = s[0];
        W = s[1];
        planes = 1;
    } else if (input.ndim() == 4) {
        H = s[2];
        W = s[3];
        planes = s[0] * s[1];
    } else {
        throw std::invalid_argument("bilinear_resize: input must be 2D or 4D");
    }
    std::vector<int> out_shape = s;
    out_shape[out_shape.size() - 2] = new_h;
    out_shape[out_shape.size() - 1] = new_w;
    Tensor out(out_shape);

    const double sh = static_cast<double>(H) / new_h;
    const double sw = static_cast<double>(W) / new_w;
    for (int p = 0; p < planes; ++p) {
        const double* in = &input.data[static_cast<size_t>(p) * H * W];
        double* o = &out.data[static_cast<size_t>(p) * new_h * new_w];
        for (int oh = 0; oh < new_h; ++oh) {
            const double fy = std::clamp((oh + 0.5) * sh - 0.5, 0.0, static_cast<double>(H - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, H - 1);
            const double wy = fy - y0;
            for (int ow = 0; ow < new_w; ++ow) {
                const double fx =
                    std::clamp((ow + 0.5) * sw - 0.5, 0.0, static_cast<double>(W - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, W - 1);
                const double wx = fx - x0;
                const double v = (1 - wy) * ((1 - wx) * in[static_cast<long>(y0) * W + x0] +
                                             wx * in[static_cast<long>(y0) * W + x1]) +
                                 wy * ((1 - wx) * in[static_cast<long>(y1) * W + x0] +
                                       wx * in[static_cast<long>(y1) * W + x1]);
                o[static_cast<long>(oh) * new_w + ow] = v;
            }
        }
    }
    return out;
}

}  // namespace rccn
