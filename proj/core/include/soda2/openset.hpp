#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace soda2 {

// Squared cosine similarity between aligned and intrinsic features.
struct ConsistencyScore {
    double sim = 0.0;  // in [-1, 1]
    double s = 0.0;    // sim^2, in [0, 1]
};
ConsistencyScore consistency_score(std::span<const double> f_a, std::span<const double> f_b);

// 1D Gaussian mixture fitted by EM.
struct GmmModel {
    int k = 0;
    std::vector<double> pi;
    std::vector<double> mu;
    std::vector<double> var;
    std::vector<double> log_likelihood_trace;

    std::string to_json() const;
    static GmmModel from_json(const std::string& text);
};

// EM with quantile-initialized means, uniform weights, pooled-variance start.
// Stops when |delta log-likelihood| < 1e-8 or after 500 iterations, variances
// floored at 1e-8. Deterministic; `seed` is part of the interface but unused
// because no stochastic choice remains.
GmmModel gmm_fit(std::span<const double> scores, int k, std::uint64_t seed = 0);

// Posterior component responsibilities for one score, computed in log space.
std::vector<double> responsibilities(const GmmModel& model, double s);

enum class OpenSetFlag { Known, Unknown };

struct OpenSetDecision {
    OpenSetFlag flag = OpenSetFlag::Known;
    double top_responsibility = 0.0;  // responsibility of the max-mean component
};

// A sample is Unknown iff its max-responsibility component is the unique
// max-mean component. Mean ties collapse to Known; responsibility ties pick
// the lower-mean component.
std::vector<OpenSetDecision> classify_known_unknown(const GmmModel& model,
                                                    std::span<const double> scores);

}  // namespace soda2
