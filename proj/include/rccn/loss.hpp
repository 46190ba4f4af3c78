#pragma once

#include <cmath>
#include <vector>

#include "rccn/tensor.hpp"

namespace rccn {

/// Max-shifted softmax over K logits; identical to the plain exponential form
/// in exact arithmetic but immune to overflow.
inline void softmax_probs(const double* logits, double* probs, int k) {
    double m = logits[0];
    for (int i = 1; i < k; ++i) m = std::max(m, logits[i]);
    double z = 0.0;
    for (int i = 0; i < k; ++i) {
        probs[i] = std::exp(logits[i] - m);
        z += probs[i];
    }
    for (int i = 0; i < k; ++i) probs[i] /= z;
}

inline std::vector<double> softmax_probs(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax_probs: need K >= 1 logits");
    std::vector<double> p(logits.size());
    softmax_probs(logits.data(), p.data(), static_cast<int>(logits.size()));
    return p;
}

/// Per-pixel softmax over the channel axis of K x H x W logits.
inline Tensor softmax_channels(const Tensor& logits) {
    if (logits.ndim() != 3 && logits.ndim() != 4)
        throw std::invalid_argument("softmax_channels: logits must be K x H x W or N x K x H x W");
    const bool batched = logits.ndim() == 4;
    const int N = batched ? logits.dim(0) : 1;
    const int K = logits.dim(batched ? 1 : 0);
    const int H = logits.dim(batched ? 2 : 1);
    const int W = logits.dim(batched ? 3 : 2);
    Tensor probs(logits.shape);
    const long plane = static_cast<long>(H) * W;
    std::vector<double> buf_in(static_cast<size_t>(K)), buf_out(static_cast<size_t>(K));
    for (int n = 0; n < N; ++n) {
        const double* in = &logits.data[static_cast<size_t>(n) * K * plane];
        double* out = &probs.data[static_cast<size_t>(n) * K * plane];
        for (long i = 0; i < plane; ++i) {
            for (int k = 0; k < K; ++k) buf_in[static_cast<size_t>(k)] = in[k * plane + i];
            softmax_probs(buf_in.data(), buf_out.data(), K);
            for (int k = 0; k < K; ++k) out[k * plane + i] = buf_out[static_cast<size_t>(k)];
        }
    }
    return probs;
}

struct LossReport {
    double loss_r = 0.0;
    double loss_c = 0.0;
    long n_valid_r = 0;
    long n_valid_c = 0;
    bool empty_r = false;  // flagged when no valid pixel contributed
    bool empty_c = false;
    double total() const { return loss_r + loss_c; }
};

struct ScalarLoss {
    double loss = 0.0;
    Tensor grad;
    long n_valid = 0;
    bool empty = false;
};

/// Mean squared error over valid pixels of two log-depth maps.
/// grad per valid pixel = 2(p - t)/N; masked pixels contribute zero.
inline ScalarLoss regression_loss(const Tensor& pred_log, const Tensor& target_log,
                                  const std::vector<uint8_t>& mask) {
    if (!pred_log.same_shape(target_log))
        throw std::invalid_argument("regression_loss: pred " + pred_log.shape_str() +
                                    " vs target " + target_log.shape_str());
    if (mask.size() != pred_log.data.size())
        throw std::invalid_argument("regression_loss: mask size mismatch");
    ScalarLoss r;
    r.grad = Tensor::zeros(pred_log.shape);
    long n = 0;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) ++n;
    r.n_valid = n;
    if (n == 0) {
        r.empty = true;
        return r;
    }
    double acc = 0.0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double e = pred_log.data[i] - target_log.data[i];
        acc += e * e;
        r.grad.data[i] = 2.0 * e / static_cast<double>(n);
    }
    r.loss = acc / static_cast<double>(n);
    return r;
}

/// Mean multinomial logistic loss over valid pixels of K x H x W logits.
/// grad per valid pixel per class = (P_k - 1{k = target})/N.
inline ScalarLoss classification_loss(const Tensor& logits, const std::vector<int>& target_bins,
                                      int ignore_index) {
    if (logits.ndim() != 3)
        throw std::invalid_argument("classification_loss: logits must be K x H x W");
    const int K = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
    const long plane = static_cast<long>(H) * W;
    if (static_cast<long>(target_bins.size()) != plane)
        throw std::invalid_argument("classification_loss: target size mismatch");
    ScalarLoss r;
    r.grad = Tensor::zeros(logits.shape);
    long n = 0;
    for (long i = 0; i < plane; ++i)
        if (target_bins[static_cast<size_t>(i)] != ignore_index) ++n;
    r.n_valid = n;
    if (n == 0) {
        r.empty = true;
        return r;
    }
    std::vector<double> lg(static_cast<size_t>(K)), p(static_cast<size_t>(K));
    double acc = 0.0;
    for (long i = 0; i < plane; ++i) {
        const int t = target_bins[static_cast<size_t>(i)];
        if (t == ignore_index) continue;
        if (t < 0 || t >= K)
            throw std::invalid_argument("classification_loss: target bin " + std::to_string(t) +
                                        " out of [0, " + std::to_string(K - 1) + "]");
        for (int k = 0; k < K; ++k) lg[static_cast<size_t>(k)] = logits.data[k * plane + i];
        softmax_probs(lg.data(), p.data(), K);
        acc -= std::log(p[static_cast<size_t>(t)]);
        for (int k = 0; k < K; ++k) {
            const double ind = k == t ? 1.0 : 0.0;
            r.grad.data[static_cast<size_t>(k * plane + i)] =
                (p[static_cast<size_t>(k)] - ind) / static_cast<double>(n);
        }
    }
    r.loss = acc / static_cast<double>(n);
    return r;
}

}  // namespace rccn
