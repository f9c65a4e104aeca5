#include "soda2/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "soda2/error.hpp"

namespace soda2::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

void check_odd(std::size_t k, const char* what) {
    if (k % 2 == 0) throw ShapeError(std::string(what) + ": kernel size must be odd");
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// im2col for a cubic same-padded kernel; col is (C*k^3) x (B*P*P), row-major.
void im2col3d(const double* x, std::size_t C, std::size_t B, std::size_t P,
              std::size_t k, std::vector<double>& col) {
    const std::size_t N = B * P * P;
    const long r = static_cast<long>(k) / 2;
    col.assign(C * k * k * k * N, 0.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (long db = -r; db <= r; ++db)
            for (long di = -r; di <= r; ++di)
                for (long dj = -r; dj <= r; ++dj) {
                    double* out = col.data() + row * N;
                    for (std::size_t b = 0; b < B; ++b) {
                        const long bb = static_cast<long>(b) + db;
                        if (bb < 0 || bb >= static_cast<long>(B)) continue;
                        for (std::size_t i = 0; i < P; ++i) {
                            const long ii = static_cast<long>(i) + di;
                            if (ii < 0 || ii >= static_cast<long>(P)) continue;
                            const double* src =
                                x + (c * B + static_cast<std::size_t>(bb)) * P * P +
                                static_cast<std::size_t>(ii) * P;
                            double* dst = out + (b * P + i) * P;
                            const long j0 = std::max<long>(0, -dj);
                            const long j1 = std::min<long>(static_cast<long>(P),
                                                           static_cast<long>(P) - dj);
                            for (long j = j0; j < j1; ++j) dst[j] = src[j + dj];
                        }
                    }
                    ++row;
                }
    }
}

// scatter-add of a (C*k^3) x N column matrix back onto the input volume
void col2im3d(const std::vector<double>& col, std::size_t C, std::size_t B, std::size_t P,
              std::size_t k, double* gx) {
    const std::size_t N = B * P * P;
    const long r = static_cast<long>(k) / 2;
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (long db = -r; db <= r; ++db)
            for (long di = -r; di <= r; ++di)
                for (long dj = -r; dj <= r; ++dj) {
                    const double* in = col.data() + row * N;
                    for (std::size_t b = 0; b < B; ++b) {
                        const long bb = static_cast<long>(b) + db;
                        if (bb < 0 || bb >= static_cast<long>(B)) continue;
                        for (std::size_t i = 0; i < P; ++i) {
                            const long ii = static_cast<long>(i) + di;
                            if (ii < 0 || ii >= static_cast<long>(P)) continue;
                            double* dst =
                                gx + (c * B + static_cast<std::size_t>(bb)) * P * P +
                                static_cast<std::size_t>(ii) * P;
                            const double* src = in + (b * P + i) * P;
                            const long j0 = std::max<long>(0, -dj);
                            const long j1 = std::min<long>(static_cast<long>(P),
                                                           static_cast<long>(P) - dj);
                            for (long j = j0; j < j1; ++j) dst[j + dj] += src[j];
                        }
                    }
                    ++row;
                }
    }
}

thread_local std::vector<double> g_col_scratch;
thread_local std::vector<double> g_col_scratch2;

}  // namespace

Tensor conv1d(const Tensor& x, const Conv1dSpec& spec, const Tensor& w, const Tensor& b) {
    check_odd(spec.k, "conv1d");
    if (x.shape.size() != 2 || x.shape[0] != spec.in_channels)
        throw ShapeError("conv1d: input must be (C_in x L), got " + x.shape_str());
    if (w.shape != std::vector<std::size_t>{spec.out_channels, spec.in_channels, spec.k})
        throw ShapeError("conv1d: weight shape mismatch " + w.shape_str());
    if (b.shape != std::vector<std::size_t>{spec.out_channels})
        throw ShapeError("conv1d: bias shape mismatch " + b.shape_str());
    const std::size_t L = x.shape[1];
    const long r = static_cast<long>(spec.k) / 2;
    Tensor y({spec.out_channels, L});
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        for (std::size_t t = 0; t < L; ++t) {
            double acc = b[o];
            for (std::size_t c = 0; c < spec.in_channels; ++c) {
                const double* wr = &w.values[(o * spec.in_channels + c) * spec.k];
                for (std::size_t u = 0; u < spec.k; ++u) {
                    const long s = static_cast<long>(t) + static_cast<long>(u) - r;
                    if (s < 0 || s >= static_cast<long>(L)) continue;
                    acc += wr[u] * x.values[c * L + static_cast<std::size_t>(s)];
                }
            }
            y.values[o * L + t] = acc;
        }
    }
    return y;
}

void conv1d_backward(Tensor& x, const Conv1dSpec& spec, Tensor& w, Tensor& b,
                     const std::vector<double>& gy) {
    const std::size_t L = x.shape[1];
    const long r = static_cast<long>(spec.k) / 2;
    const bool want_gx = !x.grad.empty();
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        for (std::size_t t = 0; t < L; ++t) {
            const double g = gy[o * L + t];
            if (!b.grad.empty()) b.grad[o] += g;
            for (std::size_t c = 0; c < spec.in_channels; ++c) {
                const std::size_t wbase = (o * spec.in_channels + c) * spec.k;
                for (std::size_t u = 0; u < spec.k; ++u) {
                    const long s = static_cast<long>(t) + static_cast<long>(u) - r;
                    if (s < 0 || s >= static_cast<long>(L)) continue;
                    const std::size_t xi = c * L + static_cast<std::size_t>(s);
                    if (!w.grad.empty()) w.grad[wbase + u] += g * x.values[xi];
                    if (want_gx) x.grad[xi] += g * w.values[wbase + u];
                }
            }
        }
    }
}

Tensor conv3d(const Tensor& x, const Conv3dSpec& spec, const Tensor& w, const Tensor& b) {
    check_odd(spec.k, "conv3d");
    if (x.shape.size() != 4 || x.shape[0] != spec.in_channels)
        throw ShapeError("conv3d: input must be (C_in x B x P x P), got " + x.shape_str());
    if (w.shape !=
        std::vector<std::size_t>{spec.out_channels, spec.in_channels, spec.k, spec.k, spec.k})
        throw ShapeError("conv3d: weight shape mismatch " + w.shape_str());
    if (b.shape != std::vector<std::size_t>{spec.out_channels})
        throw ShapeError("conv3d: bias shape mismatch " + b.shape_str());
    const std::size_t B = x.shape[1], P = x.shape[2];
    if (x.shape[3] != P) throw ShapeError("conv3d: spatial extent must be square");
    const std::size_t N = B * P * P;
    const std::size_t K = spec.in_channels * spec.k * spec.k * spec.k;

    im2col3d(x.values.data(), spec.in_channels, B, P, spec.k, g_col_scratch);

    Tensor y({spec.out_channels, B, P, P});
    MapRowC wm(w.values.data(), static_cast<long>(spec.out_channels), static_cast<long>(K));
    MapRowC cm(g_col_scratch.data(), static_cast<long>(K), static_cast<long>(N));
    MapRow ym(y.values.data(), static_cast<long>(spec.out_channels), static_cast<long>(N));
    ym.noalias() = wm * cm;
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        double* row = y.values.data() + o * N;
        const double bo = b[o];
        for (std::size_t i = 0; i < N; ++i) row[i] += bo;
    }
    return y;
}

void conv3d_backward(Tensor& x, const Conv3dSpec& spec, Tensor& w, Tensor& b,
                     const std::vector<double>& gy) {
    const std::size_t B = x.shape[1], P = x.shape[2];
    const std::size_t N = B * P * P;
    const std::size_t K = spec.in_channels * spec.k * spec.k * spec.k;

    MapRowC gym(gy.data(), static_cast<long>(spec.out_channels), static_cast<long>(N));
    if (!b.grad.empty()) {
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            const double* row = gy.data() + o * N;
            double acc = 0.0;
            for (std::size_t i = 0; i < N; ++i) acc += row[i];
            b.grad[o] += acc;
        }
    }
    if (!w.grad.empty()) {
        im2col3d(x.values.data(), spec.in_channels, B, P, spec.k, g_col_scratch);
        MapRowC cm(g_col_scratch.data(), static_cast<long>(K), static_cast<long>(N));
        MapRow gwm(w.grad.data(), static_cast<long>(spec.out_channels), static_cast<long>(K));
        gwm.noalias() += gym * cm.transpose();
    }
    if (!x.grad.empty()) {
        g_col_scratch2.assign(K * N, 0.0);
        MapRow gcm(g_col_scratch2.data(), static_cast<long>(K), static_cast<long>(N));
        MapRowC wm(w.values.data(), static_cast<long>(spec.out_channels),
                   static_cast<long>(K));
        gcm.noalias() = wm.transpose() * gym;
        col2im3d(g_col_scratch2, spec.in_channels, B, P, spec.k, x.grad.data());
    }
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    y.grad.clear();
    for (double& v : y.values) v = v > 0.0 ? v : 0.0;
    return y;
}

void relu_backward(Tensor& x, const std::vector<double>& gy) {
    if (x.grad.empty()) return;
    for (std::size_t i = 0; i < x.values.size(); ++i)
        if (x.values[i] > 0.0) x.grad[i] += gy[i];
}

Tensor residual_fuse(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b))
        throw ShapeError("residual_fuse: shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    Tensor y = a;
    y.grad.clear();
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += b.values[i];
    return y;
}

void residual_fuse_backward(Tensor& a, Tensor& b, const std::vector<double>& gy) {
    if (!a.grad.empty())
        for (std::size_t i = 0; i < gy.size(); ++i) a.grad[i] += gy[i];
    if (!b.grad.empty())
        for (std::size_t i = 0; i < gy.size(); ++i) b.grad[i] += gy[i];
}

Tensor channel_attention(const Tensor& x, const Tensor& w1, const Tensor& w2,
                         ChannelAttentionCache* cache) {
    const std::size_t C = x.shape[0];
    const std::size_t rest = x.numel() / C;
    const std::size_t H = w1.shape[0];
    if (w1.shape != std::vector<std::size_t>{H, C} ||
        w2.shape != std::vector<std::size_t>{C, H})
        throw ShapeError("channel_attention: weight shapes must be (C/r x C), (C x C/r)");
    if (C % H != 0)
        throw ValueError("channel_attention: reduction must divide channel count");

    std::vector<double> z(C);
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        const double* row = x.values.data() + c * rest;
        for (std::size_t i = 0; i < rest; ++i) acc += row[i];
        z[c] = acc / static_cast<double>(rest);
    }
    std::vector<double> pre(H), h(H);
    for (std::size_t j = 0; j < H; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += w1.values[j * C + c] * z[c];
        pre[j] = acc;
        h[j] = acc > 0.0 ? acc : 0.0;
    }
    std::vector<double> g(C);
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) acc += w2.values[c * H + j] * h[j];
        g[c] = sigmoid(acc);
    }
    Tensor y = x;
    y.grad.clear();
    for (std::size_t c = 0; c < C; ++c) {
        double* row = y.values.data() + c * rest;
        for (std::size_t i = 0; i < rest; ++i) row[i] *= g[c];
    }
    if (cache) {
        cache->z = std::move(z);
        cache->pre = std::move(pre);
        cache->h = std::move(h);
        cache->g = std::move(g);
    }
    return y;
}

void channel_attention_backward(Tensor& x, Tensor& w1, Tensor& w2,
                                const ChannelAttentionCache& cache, const std::vector<double>& gy) {
    const std::size_t C = x.shape[0];
    const std::size_t rest = x.numel() / C;
    const std::size_t H = w1.shape[0];

    // direct path and gate-value gradient
    std::vector<double> dg(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const double* gyr = gy.data() + c * rest;
        const double* xr = x.values.data() + c * rest;
        double acc = 0.0;
        for (std::size_t i = 0; i < rest; ++i) acc += gyr[i] * xr[i];
        dg[c] = acc;
        if (!x.grad.empty()) {
            double* gxr = x.grad.data() + c * rest;
            const double gc = cache.g[c];
            for (std::size_t i = 0; i < rest; ++i) gxr[i] += gc * gyr[i];
        }
    }
    // through sigmoid and the MLP
    std::vector<double> du(C);
    for (std::size_t c = 0; c < C; ++c) du[c] = dg[c] * cache.g[c] * (1.0 - cache.g[c]);
    std::vector<double> dh(H, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < H; ++j) {
            if (!w2.grad.empty()) w2.grad[c * H + j] += du[c] * cache.h[j];
            dh[j] += w2.values[c * H + j] * du[c];
        }
    }
    std::vector<double> dz(C, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        const double dpre = cache.pre[j] > 0.0 ? dh[j] : 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            if (!w1.grad.empty()) w1.grad[j * C + c] += dpre * cache.z[c];
            dz[c] += w1.values[j * C + c] * dpre;
        }
    }
    if (!x.grad.empty()) {
        for (std::size_t c = 0; c < C; ++c) {
            const double v = dz[c] / static_cast<double>(rest);
            double* gxr = x.grad.data() + c * rest;
            for (std::size_t i = 0; i < rest; ++i) gxr[i] += v;
        }
    }
}

Tensor spatial_attention(const Tensor& x, const Tensor& w, SpatialAttentionCache* cache) {
    if (x.shape.size() != 4)
        throw ShapeError("spatial_attention: input must be (C x B x P x P)");
    if (w.numel() != 18)
        throw ShapeError("spatial_attention: gate conv must be (2 x 3 x 3)");
    const std::size_t C = x.shape[0], B = x.shape[1], P = x.shape[2];
    const std::size_t slice = P * P;

    std::vector<double> mu(B * slice, 0.0), mx(B * slice);
    std::vector<std::size_t> am(B * slice, 0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t ij = 0; ij < slice; ++ij) {
            const std::size_t off = b * slice + ij;
            double best = x.values[off];  // channel 0
            std::size_t bi = 0;
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double v = x.values[(c * B + b) * slice + ij];
                acc += v;
                if (v > best) {
                    best = v;
                    bi = c;
                }
            }
            mu[off] = acc / static_cast<double>(C);
            mx[off] = best;
            am[off] = bi;
        }
    }
    // per-slice 3x3 conv on the [mu; mx] pair, then band average
    std::vector<double> t(B * slice, 0.0), u(slice, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t j = 0; j < P; ++j) {
                double acc = 0.0;
                for (long di = -1; di <= 1; ++di)
                    for (long dj = -1; dj <= 1; ++dj) {
                        const long ii = static_cast<long>(i) + di;
                        const long jj = static_cast<long>(j) + dj;
                        if (ii < 0 || ii >= static_cast<long>(P) || jj < 0 ||
                            jj >= static_cast<long>(P))
                            continue;
                        const std::size_t pix =
                            b * slice + static_cast<std::size_t>(ii) * P +
                            static_cast<std::size_t>(jj);
                        const std::size_t wk =
                            static_cast<std::size_t>(di + 1) * 3 +
                            static_cast<std::size_t>(dj + 1);
                        acc += w.values[wk] * mu[pix] + w.values[9 + wk] * mx[pix];
                    }
                t[b * slice + i * P + j] = acc;
                u[i * P + j] += acc;
            }
    }
    std::vector<double> m(slice);
    for (std::size_t ij = 0; ij < slice; ++ij) {
        u[ij] /= static_cast<double>(B);
        m[ij] = sigmoid(u[ij]);
    }
    Tensor y = x;
    y.grad.clear();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t b = 0; b < B; ++b) {
            double* row = y.values.data() + (c * B + b) * slice;
            for (std::size_t ij = 0; ij < slice; ++ij) row[ij] *= m[ij];
        }
    if (cache) {
        cache->mu = std::move(mu);
        cache->mx = std::move(mx);
        cache->argmax = std::move(am);
        cache->t = std::move(t);
        cache->u = std::move(u);
        cache->m = std::move(m);
    }
    return y;
}

void spatial_attention_backward(Tensor& x, Tensor& w, const SpatialAttentionCache& cache,
                                const std::vector<double>& gy) {
    const std::size_t C = x.shape[0], B = x.shape[1], P = x.shape[2];
    const std::size_t slice = P * P;

    std::vector<double> dm(slice, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t b = 0; b < B; ++b) {
            const double* gyr = gy.data() + (c * B + b) * slice;
            const double* xr = x.values.data() + (c * B + b) * slice;
            for (std::size_t ij = 0; ij < slice; ++ij) dm[ij] += gyr[ij] * xr[ij];
        }
    if (!x.grad.empty()) {
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t b = 0; b < B; ++b) {
                const double* gyr = gy.data() + (c * B + b) * slice;
                double* gxr = x.grad.data() + (c * B + b) * slice;
                for (std::size_t ij = 0; ij < slice; ++ij)
                    gxr[ij] += cache.m[ij] * gyr[ij];
            }
    }
    // dm -> du -> per-slice conv output grads (uniform over bands)
    std::vector<double> du(slice);
    for (std::size_t ij = 0; ij < slice; ++ij)
        du[ij] = dm[ij] * cache.m[ij] * (1.0 - cache.m[ij]) / static_cast<double>(B);

    std::vector<double> dmu(B * slice, 0.0), dmx(B * slice, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t j = 0; j < P; ++j) {
                const double dt = du[i * P + j];  // dt[b,i,j] == du[i,j]/1 (already /B)
                for (long di = -1; di <= 1; ++di)
                    for (long dj = -1; dj <= 1; ++dj) {
                        const long ii = static_cast<long>(i) + di;
                        const long jj = static_cast<long>(j) + dj;
                        if (ii < 0 || ii >= static_cast<long>(P) || jj < 0 ||
                            jj >= static_cast<long>(P))
                            continue;
                        const std::size_t pix =
                            b * slice + static_cast<std::size_t>(ii) * P +
                            static_cast<std::size_t>(jj);
                        const std::size_t wk =
                            static_cast<std::size_t>(di + 1) * 3 +
                            static_cast<std::size_t>(dj + 1);
                        if (!w.grad.empty()) {
                            w.grad[wk] += dt * cache.mu[pix];
                            w.grad[9 + wk] += dt * cache.mx[pix];
                        }
                        dmu[pix] += dt * w.values[wk];
                        dmx[pix] += dt * w.values[9 + wk];
                    }
            }
    }
    if (!x.grad.empty()) {
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t ij = 0; ij < slice; ++ij) {
                const std::size_t off = b * slice + ij;
                const double dmu_c = dmu[off] / static_cast<double>(C);
                for (std::size_t c = 0; c < C; ++c)
                    x.grad[(c * B + b) * slice + ij] += dmu_c;
                x.grad[(cache.argmax[off] * B + b) * slice + ij] += dmx[off];
            }
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t d = x.numel();
    if (w.shape.size() != 2 || w.shape[1] != d)
        throw ShapeError("linear: weight must be (C x d) with d = " + std::to_string(d));
    const std::size_t C = w.shape[0];
    if (b.numel() != C) throw ShapeError("linear: bias length mismatch");
    Tensor y({C});
    for (std::size_t o = 0; o < C; ++o) {
        double acc = b[o];
        const double* row = w.values.data() + o * d;
        for (std::size_t i = 0; i < d; ++i) acc += row[i] * x.values[i];
        y.values[o] = acc;
    }
    return y;
}

void linear_backward(Tensor& x, Tensor& w, Tensor& b, const std::vector<double>& gy) {
    const std::size_t d = x.numel();
    const std::size_t C = w.shape[0];
    for (std::size_t o = 0; o < C; ++o) {
        const double g = gy[o];
        if (!b.grad.empty()) b.grad[o] += g;
        const double* row = w.values.data() + o * d;
        for (std::size_t i = 0; i < d; ++i) {
            if (!w.grad.empty()) w.grad[o * d + i] += g * x.values[i];
            if (!x.grad.empty()) x.grad[i] += g * row[i];
        }
    }
}

SoftmaxXentResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2) throw ShapeError("softmax_cross_entropy: logits must be (n x C)");
    const std::size_t n = logits.shape[0], C = logits.shape[1];
    if (labels.size() != n) throw ShapeError("softmax_cross_entropy: one label per row required");
    SoftmaxXentResult out;
    out.probabilities = Tensor({n, C});
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 1 || static_cast<std::size_t>(y) > C)
            throw ValueError("softmax_cross_entropy: label " + std::to_string(y) +
                             " outside [1, " + std::to_string(C) + "]");
        const double* row = logits.values.data() + i * C;
        double mx = row[0];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
        const double logz = std::log(z);
        for (std::size_t c = 0; c < C; ++c)
            out.probabilities.values[i * C + c] = std::exp(row[c] - mx - logz);
        loss -= row[static_cast<std::size_t>(y - 1)] - mx - logz;
    }
    out.loss = loss / static_cast<double>(n);
    return out;
}

void softmax_cross_entropy_backward(Tensor& logits, const std::vector<int>& labels,
                                    const SoftmaxXentResult& fwd) {
    if (logits.grad.empty()) return;
    const std::size_t n = logits.shape[0], C = logits.shape[1];
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < C; ++c) {
            double g = fwd.probabilities.values[i * C + c];
            if (static_cast<int>(c) + 1 == labels[i]) g -= 1.0;
            logits.grad[i * C + c] += g * inv_n;
        }
    }
}

double max_rel_error(const std::function<double()>& loss, std::span<double> params,
                     std::span<const double> analytic, double eps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double fp = loss();
        params[i] = saved - eps;
        const double fm = loss();
        params[i] = saved;
        const double fd = (fp - fm) / (2.0 * eps);
        const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace soda2::nn
