#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "soda2/data.hpp"
#include "soda2/nn.hpp"
#include "soda2/tensor.hpp"

namespace soda2 {

enum class BranchId { Aligned, Intrinsic };

struct ArchConfig {
    std::size_t spe_hidden = 16;        // conv1d channels 1 -> h -> h -> h -> C_f
    std::size_t spa_hidden = 8;         // conv3d channels 1 -> h -> h -> h -> C_f
    std::size_t feature_channels = 32;  // C_f
    std::size_t kernel = 3;
    std::size_t reduction = 4;          // channel-attention bottleneck C_f / r

    bool operator==(const ArchConfig&) const = default;
};

struct Conv1dLayer {
    nn::Conv1dSpec spec;
    Tensor w, b;
};

struct Conv3dLayer {
    nn::Conv3dSpec spec;
    Tensor w, b;
};

// All learnable state of one encoder branch. The two branches share this
// architecture but never share storage.
struct EncoderParams {
    BranchId id = BranchId::Aligned;
    ArchConfig arch;

    Conv1dLayer spe1, spe2, spe3, spe4;
    Conv3dLayer spa1, spa2, spa3, spa_res, spa4;
    Tensor ca_w1, ca_w2;  // (C_f/r x C_f), (C_f x C_f/r)
    Tensor sa_w;          // (2 x 3 x 3) gate conv

    // Stable parameter enumeration (checkpoints, SGD, gradient checks).
    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;
    void alloc_grads();
    void zero_grads();
};

// Pooled per-sample features: spe (C_f), spa (C_f), fused = [spe; spa] (2 C_f).
struct FeatureSet {
    Tensor spe;
    Tensor spa;
    Tensor fused;
};

// Forward intermediates kept for the analytic backward pass.
struct EncodeCache {
    // spectral path
    Tensor spec_in;  // (1 x B) center-pixel spectrum
    Tensor c1, a1, c2, a2, c3, s, f;
    Tensor f_spe;      // conv4 output (C_f x B)
    Tensor f_spe_att;  // after channel attention
    nn::ChannelAttentionCache ca;
    // spatial path
    Tensor x_in;  // (1 x B x P x P)
    Tensor d1, b1, d2, b2, d3, rr, sp, fp;
    Tensor f_spa;      // conv4 output (C_f x B x P x P)
    Tensor f_spa_att;  // after spatial attention
    nn::SpatialAttentionCache sa;
};

// Eq. 1 composition on the center-pixel spectrum.
Tensor extract_spectral(const Tensor& spectrum, const EncoderParams& params);
// Eq. 2 composition on the full patch volume.
Tensor extract_spatial(const Tensor& patch_volume, const EncoderParams& params);
// Attention enhancement of both modalities, each gated separately.
std::pair<Tensor, Tensor> apply_attention(const Tensor& spe, const Tensor& spa,
                                          const EncoderParams& params);

// Full per-sample pass; cache is optional and only needed for backward.
FeatureSet encode_one(const Tensor& patch, const EncoderParams& params,
                      EncodeCache* cache = nullptr);
// Batch convenience wrapper.
std::vector<FeatureSet> encode(const PatchBatch& batch, const EncoderParams& params);

// Accumulates parameter gradients for one sample given d(loss)/d(pooled spe)
// and d(loss)/d(pooled spa). Parameter grads must be allocated.
void encode_backward(EncoderParams& params, EncodeCache& cache,
                     const std::vector<double>& d_spe, const std::vector<double>& d_spa);

// Seeded Kaiming-uniform init; the two branch ids derive distinct sub-seeds.
EncoderParams init_encoder(std::uint64_t seed, const ArchConfig& arch, BranchId id);

}  // namespace soda2
