#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "soda2/tensor.hpp"

namespace soda2::nn {

// Same-padding convolutions, stride 1, odd kernels. Padding is zero-fill and
// implied as (k-1)/2 per axis so output extents equal input extents.
struct Conv1dSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t k = 3;  // odd
};

struct Conv3dSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t k = 3;  // odd, cubic kernel k*k*k
};

// x: (C_in x L), w: (C_out x C_in x k), b: (C_out) -> (C_out x L)
Tensor conv1d(const Tensor& x, const Conv1dSpec& spec, const Tensor& w, const Tensor& b);

// Accumulates into x.grad (if allocated), w.grad, b.grad.
void conv1d_backward(Tensor& x, const Conv1dSpec& spec, Tensor& w, Tensor& b,
                     const std::vector<double>& gy);

// x: (C_in x B x P x P), w: (C_out x C_in x k x k x k), b: (C_out) -> (C_out x B x P x P)
Tensor conv3d(const Tensor& x, const Conv3dSpec& spec, const Tensor& w, const Tensor& b);
void conv3d_backward(Tensor& x, const Conv3dSpec& spec, Tensor& w, Tensor& b,
                     const std::vector<double>& gy);

// Elementwise max(0, x). Subgradient at 0 is 0.
Tensor relu(const Tensor& x);
void relu_backward(Tensor& x, const std::vector<double>& gy);

// Elementwise a + b; shapes must match.
Tensor residual_fuse(const Tensor& a, const Tensor& b);
void residual_fuse_backward(Tensor& a, Tensor& b, const std::vector<double>& gy);

// Squeeze-excitation style gate: g = sigmoid(w2 * relu(w1 * gap(x))),
// y[c,...] = g[c] * x[c,...].  x: (C x rest), w1: (C/r x C), w2: (C x C/r).
// The gate MLP carries no bias terms.
struct ChannelAttentionCache {
    std::vector<double> z;    // per-channel mean
    std::vector<double> pre;  // w1*z before relu
    std::vector<double> h;    // relu(pre)
    std::vector<double> g;    // sigmoid gate
};
Tensor channel_attention(const Tensor& x, const Tensor& w1, const Tensor& w2,
                         ChannelAttentionCache* cache = nullptr);
void channel_attention_backward(Tensor& x, Tensor& w1, Tensor& w2,
                                const ChannelAttentionCache& cache, const std::vector<double>& gy);

// Mean/max-over-channel maps, stacked as 2 channels, passed through a bias-free
// 3x3 conv per spectral slice, averaged over the band axis, squashed to one
// p x p sigmoid map m; y[c,b,i,j] = m[i,j] * x[c,b,i,j].
// x: (C x B x P x P), w: (2 x 3 x 3) flattened to 18 values.
struct SpatialAttentionCache {
    std::vector<double> mu;           // (B x P x P) channel mean
    std::vector<double> mx;           // (B x P x P) channel max
    std::vector<std::size_t> argmax;  // winning channel per (b,i,j)
    std::vector<double> t;            // (B x P x P) per-slice conv output
    std::vector<double> u;            // (P x P) band-averaged pre-sigmoid
    std::vector<double> m;            // (P x P) gate map
};
Tensor spatial_attention(const Tensor& x, const Tensor& w,
                         SpatialAttentionCache* cache = nullptr);
void spatial_attention_backward(Tensor& x, Tensor& w,
                                const SpatialAttentionCache& cache, const std::vector<double>& gy);

// y = W x + b.  x: (d), W: (C x d), b: (C).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_backward(Tensor& x, Tensor& w, Tensor& b, const std::vector<double>& gy);

// logits: (n x C), labels: 1-based class ids in [1, C].
// loss = -(1/n) sum_i log softmax(logits_i)[y_i], max-subtracted for stability.
struct SoftmaxXentResult {
    double loss = 0.0;
    Tensor probabilities;  // (n x C)
};
SoftmaxXentResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// d(loss)/d(logits) = (softmax - onehot) / n, accumulated into logits.grad.
void softmax_cross_entropy_backward(Tensor& logits, const std::vector<int>& labels,
                                    const SoftmaxXentResult& fwd);

// Central-difference check: perturbs each params[i] by +-eps, re-evaluates
// `loss`, and returns max_i |analytic[i] - fd_i| / max(1, |fd_i|).
double max_rel_error(const std::function<double()>& loss, std::span<double> params,
                     std::span<const double> analytic, double eps = 1e-5);

}  // namespace soda2::nn
