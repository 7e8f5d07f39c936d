#pragma once

#include <cstdint>
#include <stdexcept>

#include "freqat/model.hpp"
#include "freqat/rng.hpp"
#include "freqat/tensor.hpp"

// White-box L-infinity attacks: FGSM, PGD with random start, and a
// margin-loss PGD standing in for C&W. The defining contract, asserted by
// the property suite, is that every output satisfies
// ||adv - image||_inf <= epsilon and adv in [0,1].

namespace freqat {

enum class LossKind { cross_entropy, cw_margin };

struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double alpha = 2.0 / 255.0;
    std::size_t steps = 20;
    bool random_start = true;
    LossKind loss_kind = LossKind::cross_entropy;

    void validate() const {
        if (epsilon < 0.0 || epsilon > 1.0)
            throw std::invalid_argument("AttackConfig: epsilon must be in [0,1]");
        if (alpha < 0.0) throw std::invalid_argument("AttackConfig: alpha must be >= 0");
    }
};

// Margin loss with kappa = 0: max_{j != label} z_j - z_label. The
// subgradient routes +1 to the best wrong class (lowest index on ties) and
// -1 to the true class.
inline CeResult cw_margin_loss(const Tensor& logits, int label) {
    const std::size_t C = logits.size();
    if (C < 2) throw std::invalid_argument("cw_margin_loss: need at least 2 classes");
    if (label < 0 || static_cast<std::size_t>(label) >= C)
        throw std::invalid_argument("cw_margin_loss: label out of range");
    const std::size_t t = static_cast<std::size_t>(label);
    std::size_t best = t == 0 ? 1 : 0;
    for (std::size_t j = 0; j < C; ++j) {
        if (j == t) continue;
        if (logits.data[j] > logits.data[best]) best = j;
    }
    CeResult r;
    r.loss = logits.data[best] - logits.data[t];
    r.grad_logits = Tensor({C});
    r.grad_logits.data[best] = 1.0;
    r.grad_logits.data[t] -= 1.0;
    return r;
}

inline CeResult attack_loss(const Tensor& logits, int label, LossKind kind) {
    return kind == LossKind::cw_margin ? cw_margin_loss(logits, label)
                                       : softmax_cross_entropy(logits, label);
}

// Gradient of the chosen loss with respect to the input image.
inline Tensor image_gradient(const ModelParams& params, const Tensor& image, int label,
                             LossKind kind) {
    const ForwardCache cache = forward(params, image);
    const CeResult loss = attack_loss(cache.logits, label, kind);
    return backward_image_only(params, cache, loss.grad_logits);
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline Tensor fgsm(const ModelParams& params, const Tensor& image, int label, double epsilon) {
    const Tensor grad = image_gradient(params, image, label, LossKind::cross_entropy);
    Tensor adv = image;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        double v = adv.data[i] + epsilon * sign(grad.data[i]);
        adv.data[i] = std::min(1.0, std::max(0.0, v));
    }
    return adv;
}

// Projected gradient descent in the epsilon-ball around the original image.
// Each iterate is projected to the ball and to [0,1], so the contracts hold
// after every step, not just at the end. The random start, when enabled,
// draws per-pixel uniform noise in [-eps, eps] from the given seed.
inline Tensor pgd(const ModelParams& params, const Tensor& image, int label,
                  const AttackConfig& cfg, std::uint64_t seed = 0) {
    cfg.validate();
    Tensor adv = image;
    if (cfg.random_start && cfg.epsilon > 0.0) {
        SplitMix64 rng(seed);
        for (std::size_t i = 0; i < adv.size(); ++i) {
            double v = adv.data[i] + rng.uniform(-cfg.epsilon, cfg.epsilon);
            adv.data[i] = std::min(1.0, std::max(0.0, v));
        }
    }
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const Tensor grad = image_gradient(params, adv, label, cfg.loss_kind);
        for (std::size_t i = 0; i < adv.size(); ++i) {
            double v = adv.data[i] + cfg.alpha * sign(grad.data[i]);
            const double lo = image.data[i] - cfg.epsilon;
            const double hi = image.data[i] + cfg.epsilon;
            v = std::min(hi, std::max(lo, v));
            adv.data[i] = std::min(1.0, std::max(0.0, v));
        }
    }
    return adv;
}

} // namespace freqat
