#pragma once

#include <span>

#include "soda2/tensor.hpp"

namespace soda2 {

// Per-step loss breakdown. l_mmd == l_spe + l_spa and
// l_total == l_cls + alpha * l_mmd by construction.
struct LossReport {
    double l_cls = 0.0;
    double l_spe = 0.0;
    double l_spa = 0.0;
    double l_mmd = 0.0;
    double l_total = 0.0;
    double alpha = 0.0;
};

// exp(-|x - y|^2 / (2 sigma^2))
double rbf_kernel(std::span<const double> x, std::span<const double> y, double sigma);

// Median of the nonzero pairwise Euclidean distances over a pooled sample set
// (rows of `features`); lower median for even counts. All-identical rows are
// a degenerate-input error.
double median_bandwidth(const Tensor& features);

// Lower bound applied to the per-batch median bandwidth inside
// decoupled_loss. As training aligns the domains the batch median tracks the
// shrinking feature cloud and the kernel gradient scales as 1/sigma^2; the
// floor keeps those gradients bounded. Standardized inputs put typical
// feature distances at O(1), so the floor engages only for collapsed clouds.
inline constexpr double kBandwidthFloor = 2.0;

// Biased V-statistic MMD^2 between the rows of S (n x d) and T (m x d).
// The value sums each kernel block in sorted order, so it is bitwise
// invariant to argument order and within-batch permutation. Gradients treat
// sigma as a constant.
struct Mmd2Result {
    double value = 0.0;
    Tensor grad_s;  // d(value)/dS, same shape as S
    Tensor grad_t;
};
Mmd2Result mmd2(const Tensor& S, const Tensor& T, double sigma, bool with_gradients = true);

// L_spe and L_spa from pooled attention-enhanced features, each modality with
// its own bandwidth: max(median over pooled source+target rows, floor).
struct DecoupledLossResult {
    double l_spe = 0.0;
    double l_spa = 0.0;
    double sigma_spe = 0.0;
    double sigma_spa = 0.0;
    Tensor g_spe_s, g_spe_t, g_spa_s, g_spa_t;

    double l_mmd() const { return l_spe + l_spa; }
};
DecoupledLossResult decoupled_loss(const Tensor& spe_s, const Tensor& spe_t,
                                   const Tensor& spa_s, const Tensor& spa_t,
                                   bool with_gradients = true);

}  // namespace soda2
