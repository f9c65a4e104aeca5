#include "soda2/encoder.hpp"

#include <cmath>

#include "soda2/error.hpp"
#include "soda2/rng.hpp"

namespace soda2 {

namespace {

void kaiming_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.values) v = rng.uniform(-bound, bound);
}

Conv1dLayer make_conv1d(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng) {
    Conv1dLayer l;
    l.spec = {cin, cout, k};
    l.w = Tensor({cout, cin, k});
    l.b = Tensor({cout});
    kaiming_uniform(l.w, cin * k, rng);
    return l;
}

Conv3dLayer make_conv3d(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng) {
    Conv3dLayer l;
    l.spec = {cin, cout, k};
    l.w = Tensor({cout, cin, k, k, k});
    l.b = Tensor({cout});
    kaiming_uniform(l.w, cin * k * k * k, rng);
    return l;
}

// d(loss)/d(pooled) spread uniformly over the pooled axes
std::vector<double> broadcast_gap(const std::vector<double>& d_pooled, std::size_t rest) {
    std::vector<double> gy(d_pooled.size() * rest);
    for (std::size_t c = 0; c < d_pooled.size(); ++c) {
        const double v = d_pooled[c] / static_cast<double>(rest);
        double* row = gy.data() + c * rest;
        for (std::size_t i = 0; i < rest; ++i) row[i] = v;
    }
    return gy;
}

Tensor gap_channels(const Tensor& x) {
    const std::size_t C = x.shape[0];
    const std::size_t rest = x.numel() / C;
    Tensor out({C});
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        const double* row = x.values.data() + c * rest;
        for (std::size_t i = 0; i < rest; ++i) acc += row[i];
        out.values[c] = acc / static_cast<double>(rest);
    }
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named_params() {
    return {
        {"spe1.w", &spe1.w}, {"spe1.b", &spe1.b}, {"spe2.w", &spe2.w}, {"spe2.b", &spe2.b},
        {"spe3.w", &spe3.w}, {"spe3.b", &spe3.b}, {"spe4.w", &spe4.w}, {"spe4.b", &spe4.b},
        {"spa1.w", &spa1.w}, {"spa1.b", &spa1.b}, {"spa2.w", &spa2.w}, {"spa2.b", &spa2.b},
        {"spa3.w", &spa3.w}, {"spa3.b", &spa3.b}, {"spa_res.w", &spa_res.w},
        {"spa_res.b", &spa_res.b}, {"spa4.w", &spa4.w}, {"spa4.b", &spa4.b},
        {"ca.w1", &ca_w1}, {"ca.w2", &ca_w2}, {"sa.w", &sa_w},
    };
}

std::vector<std::pair<std::string, const Tensor*>> EncoderParams::named_params() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [n, t] : const_cast<EncoderParams*>(this)->named_params()) out.emplace_back(n, t);
    return out;
}

void EncoderParams::alloc_grads() {
    for (auto& [n, t] : named_params()) t->alloc_grad();
}

void EncoderParams::zero_grads() {
    for (auto& [n, t] : named_params()) t->zero_grad();
}

EncoderParams init_encoder(std::uint64_t seed, const ArchConfig& arch, BranchId id) {
    if (arch.feature_channels % arch.reduction != 0)
        throw ConfigError("init_encoder: reduction must divide feature channels");
    Rng rng(derive_seed(seed, id == BranchId::Aligned ? 0 : 1));
    EncoderParams p;
    p.id = id;
    p.arch = arch;
    const std::size_t k = arch.kernel, h1 = arch.spe_hidden, h3 = arch.spa_hidden,
                      cf = arch.feature_channels;
    p.spe1 = make_conv1d(1, h1, k, rng);
    p.spe2 = make_conv1d(h1, h1, k, rng);
    p.spe3 = make_conv1d(h1, h1, k, rng);
    p.spe4 = make_conv1d(h1, cf, k, rng);
    p.spa1 = make_conv3d(1, h3, k, rng);
    p.spa2 = make_conv3d(h3, h3, k, rng);
    p.spa3 = make_conv3d(h3, h3, k, rng);
    p.spa_res = make_conv3d(h3, h3, k, rng);
    p.spa4 = make_conv3d(h3, cf, k, rng);
    p.ca_w1 = Tensor({cf / arch.reduction, cf});
    kaiming_uniform(p.ca_w1, cf, rng);
    p.ca_w2 = Tensor({cf, cf / arch.reduction});
    kaiming_uniform(p.ca_w2, cf / arch.reduction, rng);
    p.sa_w = Tensor({2, 3, 3});
    kaiming_uniform(p.sa_w, 18, rng);
    return p;
}

Tensor extract_spectral(const Tensor& spectrum, const EncoderParams& p) {
    const Tensor c1 = nn::conv1d(spectrum, p.spe1.spec, p.spe1.w, p.spe1.b);
    const Tensor a1 = nn::relu(c1);
    const Tensor c2 = nn::conv1d(a1, p.spe2.spec, p.spe2.w, p.spe2.b);
    const Tensor a2 = nn::relu(c2);
    const Tensor c3 = nn::conv1d(a2, p.spe3.spec, p.spe3.w, p.spe3.b);
    const Tensor f = nn::relu(nn::residual_fuse(c1, c3));
    return nn::conv1d(f, p.spe4.spec, p.spe4.w, p.spe4.b);
}

Tensor extract_spatial(const Tensor& volume, const EncoderParams& p) {
    const Tensor d1 = nn::conv3d(volume, p.spa1.spec, p.spa1.w, p.spa1.b);
    const Tensor b1 = nn::relu(d1);
    const Tensor d2 = nn::conv3d(b1, p.spa2.spec, p.spa2.w, p.spa2.b);
    const Tensor b2 = nn::relu(d2);
    const Tensor d3 = nn::conv3d(b2, p.spa3.spec, p.spa3.w, p.spa3.b);
    const Tensor rr = nn::conv3d(d1, p.spa_res.spec, p.spa_res.w, p.spa_res.b);
    const Tensor f = nn::relu(nn::residual_fuse(rr, d3));
    return nn::conv3d(f, p.spa4.spec, p.spa4.w, p.spa4.b);
}

std::pair<Tensor, Tensor> apply_attention(const Tensor& spe, const Tensor& spa,
                                          const EncoderParams& p) {
    return {nn::channel_attention(spe, p.ca_w1, p.ca_w2),
            nn::spatial_attention(spa, p.sa_w)};
}

FeatureSet encode_one(const Tensor& patch, const EncoderParams& p, EncodeCache* cache) {
    if (patch.shape.size() != 3)
        throw ShapeError("encode: patch must be (bands x p x p), got " + patch.shape_str());
    const std::size_t B = patch.shape[0], P = patch.shape[1];
    if (patch.shape[2] != P) throw ShapeError("encode: patch spatial extent must be square");

    // center-pixel spectrum feeds the spectral branch; the full volume feeds
    // the spatial branch as a single input channel
    Tensor spec_in({1, B});
    const std::size_t ci = P / 2;
    for (std::size_t b = 0; b < B; ++b) spec_in.values[b] = patch.values[(b * P + ci) * P + ci];
    Tensor x_in({1, B, P, P}, patch.values);

    EncodeCache local;
    EncodeCache& c = cache ? *cache : local;
    c.spec_in = std::move(spec_in);
    c.x_in = std::move(x_in);

    c.c1 = nn::conv1d(c.spec_in, p.spe1.spec, p.spe1.w, p.spe1.b);
    c.a1 = nn::relu(c.c1);
    c.c2 = nn::conv1d(c.a1, p.spe2.spec, p.spe2.w, p.spe2.b);
    c.a2 = nn::relu(c.c2);
    c.c3 = nn::conv1d(c.a2, p.spe3.spec, p.spe3.w, p.spe3.b);
    c.s = nn::residual_fuse(c.c1, c.c3);
    c.f = nn::relu(c.s);
    c.f_spe = nn::conv1d(c.f, p.spe4.spec, p.spe4.w, p.spe4.b);
    c.f_spe_att = nn::channel_attention(c.f_spe, p.ca_w1, p.ca_w2, cache ? &c.ca : nullptr);

    c.d1 = nn::conv3d(c.x_in, p.spa1.spec, p.spa1.w, p.spa1.b);
    c.b1 = nn::relu(c.d1);
    c.d2 = nn::conv3d(c.b1, p.spa2.spec, p.spa2.w, p.spa2.b);
    c.b2 = nn::relu(c.d2);
    c.d3 = nn::conv3d(c.b2, p.spa3.spec, p.spa3.w, p.spa3.b);
    c.rr = nn::conv3d(c.d1, p.spa_res.spec, p.spa_res.w, p.spa_res.b);
    c.sp = nn::residual_fuse(c.rr, c.d3);
    c.fp = nn::relu(c.sp);
    c.f_spa = nn::conv3d(c.fp, p.spa4.spec, p.spa4.w, p.spa4.b);
    c.f_spa_att = nn::spatial_attention(c.f_spa, p.sa_w, cache ? &c.sa : nullptr);

    FeatureSet out;
    out.spe = gap_channels(c.f_spe_att);
    out.spa = gap_channels(c.f_spa_att);
    out.fused = Tensor({out.spe.numel() + out.spa.numel()});
    std::copy(out.spe.values.begin(), out.spe.values.end(), out.fused.values.begin());
    std::copy(out.spa.values.begin(), out.spa.values.end(),
              out.fused.values.begin() + static_cast<long>(out.spe.numel()));
    return out;
}

std::vector<FeatureSet> encode(const PatchBatch& batch, const EncoderParams& p) {
    std::vector<FeatureSet> out;
    out.reserve(batch.size());
    const std::size_t B = batch.patches.shape[1], P = batch.patches.shape[2];
    const std::size_t per = B * P * P;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor patch({B, P, P},
                     std::vector<double>(batch.patches.values.begin() + i * per,
                                         batch.patches.values.begin() + (i + 1) * per));
        out.push_back(encode_one(patch, p));
    }
    return out;
}

void encode_backward(EncoderParams& p, EncodeCache& c, const std::vector<double>& d_spe,
                     const std::vector<double>& d_spa) {
    // ---- spectral path ----
    const std::size_t B = c.f_spe.shape[1];
    for (Tensor* t : {&c.c1, &c.a1, &c.c2, &c.a2, &c.c3, &c.s, &c.f, &c.f_spe})
        t->alloc_grad();
    const std::vector<double> gy_spe_att = broadcast_gap(d_spe, B);
    nn::channel_attention_backward(c.f_spe, p.ca_w1, p.ca_w2, c.ca, gy_spe_att);
    nn::conv1d_backward(c.f, p.spe4.spec, p.spe4.w, p.spe4.b, c.f_spe.grad);
    nn::relu_backward(c.s, c.f.grad);
    nn::residual_fuse_backward(c.c1, c.c3, c.s.grad);
    nn::conv1d_backward(c.a2, p.spe3.spec, p.spe3.w, p.spe3.b, c.c3.grad);
    nn::relu_backward(c.c2, c.a2.grad);
    nn::conv1d_backward(c.a1, p.spe2.spec, p.spe2.w, p.spe2.b, c.c2.grad);
    nn::relu_backward(c.c1, c.a1.grad);
    nn::conv1d_backward(c.spec_in, p.spe1.spec, p.spe1.w, p.spe1.b, c.c1.grad);

    // ---- spatial path ----
    const std::size_t rest = c.f_spa.numel() / c.f_spa.shape[0];
    for (Tensor* t : {&c.d1, &c.b1, &c.d2, &c.b2, &c.d3, &c.rr, &c.sp, &c.fp, &c.f_spa})
        t->alloc_grad();
    const std::vector<double> gy_spa_att = broadcast_gap(d_spa, rest);
    nn::spatial_attention_backward(c.f_spa, p.sa_w, c.sa, gy_spa_att);
    nn::conv3d_backward(c.fp, p.spa4.spec, p.spa4.w, p.spa4.b, c.f_spa.grad);
    nn::relu_backward(c.sp, c.fp.grad);
    nn::residual_fuse_backward(c.rr, c.d3, c.sp.grad);
    nn::conv3d_backward(c.d1, p.spa_res.spec, p.spa_res.w, p.spa_res.b, c.rr.grad);
    nn::conv3d_backward(c.b2, p.spa3.spec, p.spa3.w, p.spa3.b, c.d3.grad);
    nn::relu_backward(c.d2, c.b2.grad);
    nn::conv3d_backward(c.b1, p.spa2.spec, p.spa2.w, p.spa2.b, c.d2.grad);
    nn::relu_backward(c.d1, c.b1.grad);
    nn::conv3d_backward(c.x_in, p.spa1.spec, p.spa1.w, p.spa1.b, c.d1.grad);
}

}  // namespace soda2
