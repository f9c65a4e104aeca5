#include "soda2/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "soda2/error.hpp"

namespace soda2 {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

double sorted_sum(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

void check_matrix(const Tensor& t, const char* what) {
    if (t.shape.size() != 2 || t.shape[0] == 0)
        throw ShapeError(std::string(what) + ": expected a nonempty (n x d) matrix, got " +
                         t.shape_str());
}

}  // namespace

double rbf_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
    if (x.size() != y.size()) throw ShapeError("rbf_kernel: dimension mismatch");
    if (!(sigma > 0.0)) throw ValueError("rbf_kernel: sigma must be positive");
    return std::exp(-sq_dist(x.data(), y.data(), x.size()) / (2.0 * sigma * sigma));
}

double median_bandwidth(const Tensor& features) {
    check_matrix(features, "median_bandwidth");
    const std::size_t n = features.shape[0], d = features.shape[1];
    if (n < 2) throw ValueError("median_bandwidth: need at least two samples");
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 =
                sq_dist(features.values.data() + i * d, features.values.data() + j * d, d);
            if (d2 > 0.0) dists.push_back(std::sqrt(d2));
        }
    if (dists.empty()) throw ValueError("median_bandwidth: all samples identical");
    std::sort(dists.begin(), dists.end());
    return dists[(dists.size() - 1) / 2];  // lower median
}

Mmd2Result mmd2(const Tensor& S, const Tensor& T, double sigma, bool with_gradients) {
    check_matrix(S, "mmd2");
    check_matrix(T, "mmd2");
    if (S.shape[1] != T.shape[1]) throw ShapeError("mmd2: feature dimension mismatch");
    if (!(sigma > 0.0)) throw ValueError("mmd2: sigma must be positive");
    const std::size_t m = S.shape[0], n = T.shape[0], d = S.shape[1];
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    std::vector<double> kss;
    kss.reserve(m * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            kss.push_back(std::exp(-sq_dist(S.values.data() + i * d,
                                            S.values.data() + j * d, d) *
                                   inv2s2));
    std::vector<double> ktt;
    ktt.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            ktt.push_back(std::exp(-sq_dist(T.values.data() + i * d,
                                            T.values.data() + j * d, d) *
                                   inv2s2));
    std::vector<double> kst;
    kst.reserve(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            kst.push_back(std::exp(-sq_dist(S.values.data() + i * d,
                                            T.values.data() + j * d, d) *
                                   inv2s2));

    Mmd2Result out;
    if (with_gradients) {
        // kernel values in natural (i,j) order; reuse before sorting
        out.grad_s = Tensor(S.shape);
        out.grad_t = Tensor(T.shape);
        const double css = 2.0 / (static_cast<double>(m) * static_cast<double>(m));
        const double ctt = 2.0 / (static_cast<double>(n) * static_cast<double>(n));
        const double cst = 2.0 / (static_cast<double>(m) * static_cast<double>(n));
        const double ds2 = 1.0 / (sigma * sigma);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                const double k = kss[i * m + j];
                const double* si = S.values.data() + i * d;
                const double* sj = S.values.data() + j * d;
                double* g = out.grad_s.values.data() + i * d;
                // d/ds_i of k(s_i, s_j) appears twice in the symmetric sum
                const double f = css * k * ds2;
                for (std::size_t c = 0; c < d; ++c) g[c] += f * (sj[c] - si[c]);
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double k = ktt[i * n + j];
                const double* ti = T.values.data() + i * d;
                const double* tj = T.values.data() + j * d;
                double* g = out.grad_t.values.data() + i * d;
                const double f = ctt * k * ds2;
                for (std::size_t c = 0; c < d; ++c) g[c] += f * (tj[c] - ti[c]);
            }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double k = kst[i * n + j];
                const double* si = S.values.data() + i * d;
                const double* tj = T.values.data() + j * d;
                double* gs = out.grad_s.values.data() + i * d;
                double* gt = out.grad_t.values.data() + j * d;
                const double f = cst * k * ds2;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = tj[c] - si[c];
                    gs[c] -= f * diff;
                    gt[c] += f * diff;
                }
            }
    }

    const double a = sorted_sum(kss) / (static_cast<double>(m) * static_cast<double>(m));
    const double b = sorted_sum(ktt) / (static_cast<double>(n) * static_cast<double>(n));
    const double c = sorted_sum(kst) / (static_cast<double>(m) * static_cast<double>(n));
    out.value = a + b - 2.0 * c;
    return out;
}

namespace {

Tensor vstack(const Tensor& a, const Tensor& b) {
    Tensor out({a.shape[0] + b.shape[0], a.shape[1]});
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(),
              out.values.begin() + static_cast<long>(a.numel()));
    return out;
}

}  // namespace

DecoupledLossResult decoupled_loss(const Tensor& spe_s, const Tensor& spe_t,
                                   const Tensor& spa_s, const Tensor& spa_t,
                                   bool with_gradients) {
    DecoupledLossResult out;
    out.sigma_spe = std::max(median_bandwidth(vstack(spe_s, spe_t)), kBandwidthFloor);
    out.sigma_spa = std::max(median_bandwidth(vstack(spa_s, spa_t)), kBandwidthFloor);
    Mmd2Result spe = mmd2(spe_s, spe_t, out.sigma_spe, with_gradients);
    Mmd2Result spa = mmd2(spa_s, spa_t, out.sigma_spa, with_gradients);
    out.l_spe = spe.value;
    out.l_spa = spa.value;
    if (with_gradients) {
        out.g_spe_s = std::move(spe.grad_s);
        out.g_spe_t = std::move(spe.grad_t);
        out.g_spa_s = std::move(spa.grad_s);
        out.g_spa_t = std::move(spa.grad_t);
    }
    return out;
}

}  // namespace soda2
