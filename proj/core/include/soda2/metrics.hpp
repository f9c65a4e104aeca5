#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace soda2 {

// Predictions/truth use 1..C for known classes and kUnknownSentinel (65535)
// for the unknown class; other values are invalid here.
struct MetricsReport {
    std::map<int, double> per_class_acc;        // known classes, raw fractions
    double os_star = 0.0;                       // mean known-class accuracy
    std::optional<double> unk;                  // absent when truth has no unknowns
    std::optional<double> hos;                  // harmonic mean, absent with unk
    std::vector<std::vector<std::int64_t>> confusion;  // (C+1)^2, row=truth, col=pred,
                                                       // index C = Unknown

    std::string to_json() const;
};

double harmonic_mean(double a, double b);  // 0 when a + b == 0

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& truth, int known_classes);

// Recompute OS*/UNK/HOS from a confusion matrix (consistency cross-check).
MetricsReport metrics_from_confusion(const std::vector<std::vector<std::int64_t>>& confusion);

}  // namespace soda2
