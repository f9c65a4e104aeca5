#include "soda2/openset.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "soda2/error.hpp"

namespace soda2 {

namespace {

constexpr double kVarFloor = 1e-8;
constexpr double kEmTol = 1e-8;
constexpr int kEmMaxIters = 500;

double log_normal(double x, double mu, double var) {
    const double d = x - mu;
    return -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
}

double logsumexp(const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

// linear-interpolation quantile on sorted values
double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double w = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - w) + sorted[lo + 1] * w;
}

}  // namespace

ConsistencyScore consistency_score(std::span<const double> f_a, std::span<const double> f_b) {
    if (f_a.size() != f_b.size())
        throw ShapeError("consistency_score: feature dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < f_a.size(); ++i) {
        dot += f_a[i] * f_b[i];
        na += f_a[i] * f_a[i];
        nb += f_b[i] * f_b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na <= 1e-12 || nb <= 1e-12)
        throw ValueError("consistency_score: near-zero feature norm");
    ConsistencyScore out;
    out.sim = dot / (na * nb);
    out.sim = std::clamp(out.sim, -1.0, 1.0);
    out.s = out.sim * out.sim;
    return out;
}

GmmModel gmm_fit(std::span<const double> scores, int k, std::uint64_t /*seed*/) {
    if (k < 2) throw ConfigError("gmm_fit: need at least two components");
    const std::size_t n = scores.size();
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    std::size_t distinct = n == 0 ? 0 : 1;
    for (std::size_t i = 1; i < n; ++i)
        if (sorted[i] != sorted[i - 1]) ++distinct;
    if (distinct < static_cast<std::size_t>(k))
        throw ValueError("gmm_fit: fewer distinct scores than components");
    if (sorted.back() - sorted.front() < 1e-9)
        throw ValueError("gmm_fit: scores are numerically indistinguishable");

    GmmModel m;
    m.k = k;
    m.pi.assign(k, 1.0 / static_cast<double>(k));
    m.mu.resize(k);
    for (int c = 0; c < k; ++c)
        m.mu[c] = quantile(sorted, (2.0 * c + 1.0) / (2.0 * k));
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var = std::max(var / static_cast<double>(n), kVarFloor);
    m.var.assign(k, var);

    std::vector<double> logp(k);
    std::vector<std::vector<double>> resp(n, std::vector<double>(k));
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < kEmMaxIters; ++it) {
        // E step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c)
                logp[c] = std::log(m.pi[c]) + log_normal(scores[i], m.mu[c], m.var[c]);
            const double lse = logsumexp(logp);
            ll += lse;
            for (int c = 0; c < k; ++c) resp[i][c] = std::exp(logp[c] - lse);
        }
        m.log_likelihood_trace.push_back(ll);
        if (std::abs(ll - prev_ll) < kEmTol) break;
        prev_ll = ll;
        // M step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0, ms = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp[i][c];
                ms += resp[i][c] * scores[i];
            }
            if (nk <= 0.0) nk = 1e-300;
            m.pi[c] = nk / static_cast<double>(n);
            m.mu[c] = ms / nk;
            double vs = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = scores[i] - m.mu[c];
                vs += resp[i][c] * d * d;
            }
            m.var[c] = std::max(vs / nk, kVarFloor);
        }
    }
    return m;
}

std::vector<double> responsibilities(const GmmModel& model, double s) {
    std::vector<double> logp(model.k);
    for (int c = 0; c < model.k; ++c)
        logp[c] = std::log(model.pi[c]) + log_normal(s, model.mu[c], model.var[c]);
    const double lse = logsumexp(logp);
    std::vector<double> out(model.k);
    for (int c = 0; c < model.k; ++c) out[c] = std::exp(logp[c] - lse);
    return out;
}

std::vector<OpenSetDecision> classify_known_unknown(const GmmModel& model,
                                                    std::span<const double> scores) {
    // unique max-mean component; mean ties make every sample Known
    int top = 0;
    for (int c = 1; c < model.k; ++c)
        if (model.mu[c] > model.mu[top]) top = c;
    bool unique_top = true;
    for (int c = 0; c < model.k; ++c)
        if (c != top && model.mu[c] == model.mu[top]) unique_top = false;

    std::vector<OpenSetDecision> out;
    out.reserve(scores.size());
    for (double s : scores) {
        const std::vector<double> g = responsibilities(model, s);
        // argmax responsibility; ties resolve toward the lower-mean component
        int best = 0;
        for (int c = 1; c < model.k; ++c) {
            if (g[c] > g[best] ||
                (g[c] == g[best] && model.mu[c] < model.mu[best]))
                best = c;
        }
        OpenSetDecision d;
        d.top_responsibility = g[top];
        d.flag = (unique_top && best == top) ? OpenSetFlag::Unknown : OpenSetFlag::Known;
        out.push_back(d);
    }
    return out;
}

std::string GmmModel::to_json() const {
    nlohmann::json j{{"K", k}, {"pi", pi}, {"mu", mu}, {"var", var},
                     {"loglik", log_likelihood_trace}};
    return j.dump();
}

GmmModel GmmModel::from_json(const std::string& text) {
    GmmModel m;
    try {
        const auto j = nlohmann::json::parse(text);
        m.k = j.at("K").get<int>();
        m.pi = j.at("pi").get<std::vector<double>>();
        m.mu = j.at("mu").get<std::vector<double>>();
        m.var = j.at("var").get<std::vector<double>>();
        m.log_likelihood_trace = j.at("loglik").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("GmmModel: bad JSON: ") + e.what());
    }
    return m;
}

}  // namespace soda2
