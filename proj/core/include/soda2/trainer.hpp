#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "soda2/alignment.hpp"
#include "soda2/data.hpp"
#include "soda2/encoder.hpp"
#include "soda2/metrics.hpp"
#include "soda2/openset.hpp"

namespace soda2 {

struct TrainConfig {
    double alpha = 10.0;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    int gmm_components = 2;  // K
    std::size_t patch = 7;
    ArchConfig arch;

    void validate() const;
};

struct Classifier {
    Tensor w;  // (C x 2*C_f)
    Tensor b;  // (C)
};

// Aligned encoder + classifier receive updates; the intrinsic encoder stays
// at its independent random initialization for the whole run.
struct TrainState {
    EncoderParams aligned;
    EncoderParams intrinsic;
    Classifier classifier;
    int known_classes = 0;
    std::size_t epoch = 0;
    std::vector<std::vector<double>> momentum;  // parallel to update_params()
    std::vector<LossReport> history;

    std::vector<std::pair<std::string, Tensor*>> update_params();
};

TrainState init_train_state(const TrainConfig& cfg, int known_classes);

// One SGD step over a mixed mini-batch: forward both domains through the
// aligned encoder, decoupled alignment on pooled features, cross-entropy on
// source fused features, v <- m*v + g + wd*theta, theta <- theta - lr*v.
LossReport train_step(TrainState& state, const PatchBatch& source,
                      const PatchBatch& target, const TrainConfig& cfg);

// Full run: epochs x one-epoch batch plans, loss history recorded per step.
void train(TrainState& state, const PatchBatch& source, const PatchBatch& target,
           const TrainConfig& cfg);

struct InferResult {
    std::vector<int> predictions;   // 1..C or kUnknownSentinel
    std::vector<double> scores;     // squared-cosine consistency per sample
    GmmModel gmm;
    std::optional<MetricsReport> metrics;  // when truth labels were supplied
};

// Encode targets with both branches, score, fit the GMM over all target
// scores, reject via the max-mean rule, classify the survivors.
// `truth` entries use 1..C, kUnknownSentinel, or 0 (= excluded from metrics).
InferResult infer(const TrainState& state, const PatchBatch& target,
                  const std::vector<int>* truth, const TrainConfig& cfg);

}  // namespace soda2
