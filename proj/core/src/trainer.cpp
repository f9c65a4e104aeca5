#include "soda2/trainer.hpp"

#include <cmath>

#include "soda2/error.hpp"
#include "soda2/rng.hpp"

namespace soda2 {

void TrainConfig::validate() const {
    if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
    if (batch_size < 2 || batch_size % 2 != 0)
        throw ConfigError("batch size must be even and at least 2");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (gmm_components < 2) throw ConfigError("K must be at least 2");
    if (patch % 2 == 0) throw ConfigError("patch size must be odd");
}

std::vector<std::pair<std::string, Tensor*>> TrainState::update_params() {
    auto out = aligned.named_params();
    out.emplace_back("classifier.w", &classifier.w);
    out.emplace_back("classifier.b", &classifier.b);
    return out;
}

TrainState init_train_state(const TrainConfig& cfg, int known_classes) {
    cfg.validate();
    if (known_classes < 2) throw ConfigError("need at least two known classes");
    TrainState st;
    st.known_classes = known_classes;
    st.aligned = init_encoder(cfg.seed, cfg.arch, BranchId::Aligned);
    st.intrinsic = init_encoder(cfg.seed, cfg.arch, BranchId::Intrinsic);
    const std::size_t d = 2 * cfg.arch.feature_channels;
    st.classifier.w = Tensor({static_cast<std::size_t>(known_classes), d});
    st.classifier.b = Tensor({static_cast<std::size_t>(known_classes)});
    Rng rng(derive_seed(cfg.seed, 2));
    const double bound = std::sqrt(6.0 / static_cast<double>(d));
    for (double& v : st.classifier.w.values) v = rng.uniform(-bound, bound);
    st.aligned.alloc_grads();
    st.classifier.w.alloc_grad();
    st.classifier.b.alloc_grad();
    for (auto& [name, t] : st.update_params())
        st.momentum.emplace_back(t->numel(), 0.0);
    return st;
}

namespace {

Tensor per_sample_patch(const PatchBatch& batch, std::size_t i) {
    const std::size_t B = batch.patches.shape[1], P = batch.patches.shape[2];
    const std::size_t per = B * P * P;
    return Tensor({B, P, P},
                  std::vector<double>(batch.patches.values.begin() + i * per,
                                      batch.patches.values.begin() + (i + 1) * per));
}

Tensor stack_features(const std::vector<FeatureSet>& fs, bool spe) {
    const std::size_t n = fs.size();
    const std::size_t d = spe ? fs[0].spe.numel() : fs[0].spa.numel();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& src = spe ? fs[i].spe : fs[i].spa;
        std::copy(src.values.begin(), src.values.end(), out.values.begin() + i * d);
    }
    return out;
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v))
        throw DivergenceError(std::string("non-finite loss term: ") + term);
}

}  // namespace

LossReport train_step(TrainState& state, const PatchBatch& source,
                      const PatchBatch& target, const TrainConfig& cfg) {
    if (source.size() == 0 || target.size() == 0)
        throw ValueError("train_step: empty batch");
    if (source.labels.size() != source.size())
        throw ValueError("train_step: source batch must be labeled");

    const std::size_t ns = source.size(), nt = target.size();
    const std::size_t cf = cfg.arch.feature_channels;

    state.aligned.zero_grads();
    state.classifier.w.zero_grad();
    state.classifier.b.zero_grad();

    // forward both domains through the aligned encoder
    std::vector<EncodeCache> src_cache(ns), tgt_cache(nt);
    std::vector<FeatureSet> src_feat(ns), tgt_feat(nt);
    for (std::size_t i = 0; i < ns; ++i)
        src_feat[i] = encode_one(per_sample_patch(source, i), state.aligned, &src_cache[i]);
    for (std::size_t i = 0; i < nt; ++i)
        tgt_feat[i] = encode_one(per_sample_patch(target, i), state.aligned, &tgt_cache[i]);

    const Tensor spe_s = stack_features(src_feat, true);
    const Tensor spe_t = stack_features(tgt_feat, true);
    const Tensor spa_s = stack_features(src_feat, false);
    const Tensor spa_t = stack_features(tgt_feat, false);
    const DecoupledLossResult dec =
        decoupled_loss(spe_s, spe_t, spa_s, spa_t, /*with_gradients=*/cfg.alpha > 0.0);

    // classify source fused features
    Tensor logits({ns, static_cast<std::size_t>(state.known_classes)});
    for (std::size_t i = 0; i < ns; ++i) {
        Tensor y = nn::linear(src_feat[i].fused, state.classifier.w, state.classifier.b);
        std::copy(y.values.begin(), y.values.end(),
                  logits.values.begin() + i * static_cast<std::size_t>(state.known_classes));
    }
    const nn::SoftmaxXentResult ce = nn::softmax_cross_entropy(logits, source.labels);

    LossReport rep;
    rep.alpha = cfg.alpha;
    rep.l_cls = ce.loss;
    rep.l_spe = dec.l_spe;
    rep.l_spa = dec.l_spa;
    rep.l_mmd = dec.l_mmd();
    rep.l_total = rep.l_cls + cfg.alpha * rep.l_mmd;
    check_finite(rep.l_cls, "L_cls");
    check_finite(rep.l_spe, "L_spe");
    check_finite(rep.l_spa, "L_spa");
    check_finite(rep.l_total, "L_total");

    // backward: cross entropy -> classifier -> source features
    logits.alloc_grad();
    nn::softmax_cross_entropy_backward(logits, source.labels, ce);
    for (std::size_t i = 0; i < ns; ++i) {
        Tensor& fused = const_cast<Tensor&>(src_feat[i].fused);
        fused.alloc_grad();
        const std::vector<double> gy(logits.grad.begin() +
                                         i * static_cast<std::size_t>(state.known_classes),
                                     logits.grad.begin() +
                                         (i + 1) * static_cast<std::size_t>(state.known_classes));
        nn::linear_backward(fused, state.classifier.w, state.classifier.b, gy);
        std::vector<double> d_spe(fused.grad.begin(), fused.grad.begin() + static_cast<long>(cf));
        std::vector<double> d_spa(fused.grad.begin() + static_cast<long>(cf), fused.grad.end());
        if (cfg.alpha > 0.0) {
            for (std::size_t c = 0; c < cf; ++c) {
                d_spe[c] += cfg.alpha * dec.g_spe_s.values[i * cf + c];
                d_spa[c] += cfg.alpha * dec.g_spa_s.values[i * cf + c];
            }
        }
        encode_backward(state.aligned, src_cache[i], d_spe, d_spa);
    }
    if (cfg.alpha > 0.0) {
        for (std::size_t i = 0; i < nt; ++i) {
            std::vector<double> d_spe(cf), d_spa(cf);
            for (std::size_t c = 0; c < cf; ++c) {
                d_spe[c] = cfg.alpha * dec.g_spe_t.values[i * cf + c];
                d_spa[c] = cfg.alpha * dec.g_spa_t.values[i * cf + c];
            }
            encode_backward(state.aligned, tgt_cache[i], d_spe, d_spa);
        }
    }

    // SGD with momentum and coupled weight decay
    std::size_t pi = 0;
    for (auto& [name, t] : state.update_params()) {
        std::vector<double>& v = state.momentum[pi++];
        for (std::size_t j = 0; j < t->numel(); ++j) {
            v[j] = cfg.momentum * v[j] + t->grad[j] + cfg.weight_decay * t->values[j];
            t->values[j] -= cfg.learning_rate * v[j];
        }
    }
    state.history.push_back(rep);
    return rep;
}

void train(TrainState& state, const PatchBatch& source, const PatchBatch& target,
           const TrainConfig& cfg) {
    cfg.validate();
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        BatchIter iter(source, target, cfg.batch_size,
                       derive_seed(cfg.seed, 1000 + state.epoch));
        while (auto pair = iter.next()) train_step(state, pair->source, pair->target, cfg);
        ++state.epoch;
    }
}

InferResult infer(const TrainState& state, const PatchBatch& target,
                  const std::vector<int>* truth, const TrainConfig& cfg) {
    if (target.size() == 0) throw ValueError("infer: empty target set");
    InferResult out;
    out.scores.reserve(target.size());
    std::vector<int> argmax_label(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const Tensor patch = per_sample_patch(target, i);
        const FeatureSet fa = encode_one(patch, state.aligned);
        const FeatureSet fb = encode_one(patch, state.intrinsic);
        out.scores.push_back(consistency_score(fa.fused.values, fb.fused.values).s);
        const Tensor logits =
            nn::linear(fa.fused, state.classifier.w, state.classifier.b);
        int best = 0;
        for (std::size_t c = 1; c < logits.numel(); ++c)
            if (logits.values[c] > logits.values[best]) best = static_cast<int>(c);
        argmax_label[i] = best + 1;
    }
    out.gmm = gmm_fit(out.scores, cfg.gmm_components, cfg.seed);
    const std::vector<OpenSetDecision> decisions =
        classify_known_unknown(out.gmm, out.scores);
    out.predictions.resize(target.size());
    for (std::size_t i = 0; i < target.size(); ++i)
        out.predictions[i] = decisions[i].flag == OpenSetFlag::Unknown
                                 ? static_cast<int>(kUnknownSentinel)
                                 : argmax_label[i];
    if (truth) {
        std::vector<int> preds, labels;
        for (std::size_t i = 0; i < truth->size(); ++i) {
            if ((*truth)[i] == 0) continue;  // unlabeled pixels stay out of metrics
            preds.push_back(out.predictions[i]);
            labels.push_back((*truth)[i]);
        }
        out.metrics = compute_metrics(preds, labels, state.known_classes);
    }
    return out;
}

}  // namespace soda2
