#include "soda2/metrics.hpp"

#include <json.hpp>

#include "soda2/data.hpp"
#include "soda2/error.hpp"

namespace soda2 {

double harmonic_mean(double a, double b) {
    const double s = a + b;
    if (s <= 0.0) return 0.0;
    return 2.0 * a * b / s;
}

namespace {

MetricsReport finalize(std::vector<std::vector<std::int64_t>> confusion) {
    const int C = static_cast<int>(confusion.size()) - 1;
    MetricsReport r;
    r.confusion = std::move(confusion);
    double acc_sum = 0.0;
    for (int c = 0; c < C; ++c) {
        std::int64_t total = 0;
        for (int q = 0; q <= C; ++q) total += r.confusion[c][q];
        if (total == 0)
            throw ValueError("compute_metrics: known class " + std::to_string(c + 1) +
                             " absent from truth");
        const double acc =
            static_cast<double>(r.confusion[c][c]) / static_cast<double>(total);
        r.per_class_acc[c + 1] = acc;
        acc_sum += acc;
    }
    r.os_star = acc_sum / static_cast<double>(C);
    std::int64_t unk_total = 0;
    for (int q = 0; q <= C; ++q) unk_total += r.confusion[C][q];
    if (unk_total > 0) {
        r.unk = static_cast<double>(r.confusion[C][C]) / static_cast<double>(unk_total);
        r.hos = harmonic_mean(r.os_star, *r.unk);
    }
    return r;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& truth, int known_classes) {
    if (predictions.size() != truth.size() || truth.empty())
        throw ValueError("compute_metrics: prediction/truth size mismatch or empty");
    const int C = known_classes;
    std::vector<std::vector<std::int64_t>> confusion(
        static_cast<std::size_t>(C) + 1, std::vector<std::int64_t>(C + 1, 0));
    auto index_of = [C](int v, const char* what) {
        if (v == static_cast<int>(kUnknownSentinel)) return C;
        if (v < 1 || v > C)
            throw ValueError(std::string("compute_metrics: bad ") + what + " label " +
                             std::to_string(v));
        return v - 1;
    };
    for (std::size_t i = 0; i < truth.size(); ++i)
        confusion[static_cast<std::size_t>(index_of(truth[i], "truth"))]
                 [static_cast<std::size_t>(index_of(predictions[i], "prediction"))]++;
    return finalize(std::move(confusion));
}

MetricsReport metrics_from_confusion(
    const std::vector<std::vector<std::int64_t>>& confusion) {
    if (confusion.size() < 2)
        throw ValueError("metrics_from_confusion: matrix must be (C+1)^2 with C >= 1");
    for (const auto& row : confusion)
        if (row.size() != confusion.size())
            throw ValueError("metrics_from_confusion: matrix must be square");
    return finalize(confusion);
}

std::string MetricsReport::to_json() const {
    nlohmann::json per;
    for (const auto& [cls, acc] : per_class_acc) per[std::to_string(cls)] = acc;
    nlohmann::json j{{"per_class", per}, {"os_star", os_star}};
    if (unk) {
        j["unk"] = *unk;
        j["hos"] = *hos;
    } else {
        j["unk"] = nullptr;
        j["hos"] = nullptr;
    }
    return j.dump();
}

}  // namespace soda2
