#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "freqat/attacks.hpp"
#include "freqat/data.hpp"
#include "freqat/io.hpp"
#include "freqat/model.hpp"
#include "freqat/parallel.hpp"
#include "freqat/rng.hpp"
#include "freqat/spectral.hpp"

// Natural and PGD adversarial training, the frequency-regularized objective,
// SGD with momentum/weight decay and the step schedule, and SWA weight
// averaging.
//
// The training objective per batch is
//
//     mean_i [ CE(f(x_i'), y_i) + lambda * FR(f(x_i), f(x_i')) ]
//
// where x' is the PGD adversarial input and FR is the L1 distance between
// the DFTs of the natural and adversarial outputs, summed over real and
// imaginary parts. Two consequential readings are fixed here: f(x) means
// pre-softmax logits (a probability variant sits behind
// fr_on_probabilities), and the attack is a constant with respect to the
// weights - gradients flow through both forward passes but not through the
// PGD iterations that produced x'.

namespace freqat {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    double lr0 = 0.1;
    // (epoch, factor) pairs; empty means the default one-tenth drops at 75%
    // and 90% of the epoch budget (75/90 for 100 epochs, 15/18 for 20).
    std::vector<std::pair<std::size_t, double>> lr_drops;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lambda = 0.1;
    bool fr_on_probabilities = false;
    AttackConfig train_attack{8.0 / 255.0, 2.0 / 255.0, 10, true, LossKind::cross_entropy};
    AttackConfig val_attack{8.0 / 255.0, 2.0 / 255.0, 20, true, LossKind::cross_entropy};
    // Cap on how many validation images the per-epoch robust metric attacks;
    // 0 means the whole validation set.
    std::size_t val_robust_max = 0;
    bool swa_enabled = true;
    std::size_t swa_start = 0; // 0 = first LR-drop epoch
    bool hflip_augment = false;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    Architecture arch{};

    std::vector<std::pair<std::size_t, double>> resolved_drops() const {
        if (!lr_drops.empty()) return lr_drops;
        const auto d1 = static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(epochs)));
        const auto d2 = static_cast<std::size_t>(std::llround(0.90 * static_cast<double>(epochs)));
        return {{d1, 0.1}, {d2, 0.1}};
    }

    // Learning rate for a 1-indexed epoch: each drop applies from its epoch
    // onward.
    double lr_at(std::size_t epoch) const {
        double lr = lr0;
        for (const auto& [e, f] : resolved_drops())
            if (e >= 1 && epoch >= e) lr *= f;
        return lr;
    }

    std::size_t resolved_swa_start() const {
        if (swa_start != 0) return swa_start;
        std::size_t first = epochs + 1;
        for (const auto& [e, f] : resolved_drops())
            if (e >= 1) first = std::min(first, e);
        return first;
    }
};

// --- frequency regularization ---------------------------------------------

struct FrLossResult {
    double loss;
    Tensor grad_nat;
    Tensor grad_adv;
};

// L1 distance between the spectra of the two output vectors, real and
// imaginary parts summed. Gradients go through the DFT adjoint of the
// elementwise sign pair; sign(0) = 0.
inline FrLossResult fr_loss(const Tensor& outputs_nat, const Tensor& outputs_adv) {
    const std::size_t n = outputs_nat.size();
    if (outputs_adv.size() != n)
        throw std::invalid_argument("fr_loss: length mismatch");
    const Spectrum sn = dft1d(outputs_nat);
    const Spectrum sa = dft1d(outputs_adv);
    Tensor sign_re({n}), sign_im({n});
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dre = sn.re.data[k] - sa.re.data[k];
        const double dim = sn.im.data[k] - sa.im.data[k];
        loss += std::abs(dre) + std::abs(dim);
        sign_re.data[k] = sign(dre);
        sign_im.data[k] = sign(dim);
    }
    FrLossResult r;
    r.loss = loss;
    r.grad_nat = dft1d_adjoint(sign_re, sign_im);
    r.grad_adv = Tensor({n});
    for (std::size_t j = 0; j < n; ++j) r.grad_adv.data[j] = -r.grad_nat.data[j];
    return r;
}

// --- adversarial objective -------------------------------------------------

struct ObjectiveResult {
    double loss = 0.0;
    ParamGrads grads;
};

// Objective and weight gradient for one image. The adversarial input is
// generated first and then treated as a constant; with lambda > 0 both the
// natural and the adversarial forward pass contribute to the gradient.
inline ObjectiveResult at_objective_single(const ModelParams& params, const Tensor& image,
                                           int label, const TrainConfig& cfg,
                                           std::uint64_t attack_seed) {
    const Tensor adv = pgd(params, image, label, cfg.train_attack, attack_seed);
    const ForwardCache cache_adv = forward(params, adv);
    const CeResult ce = softmax_cross_entropy(cache_adv.logits, label);

    ObjectiveResult r;
    if (cfg.lambda == 0.0) {
        // Plain PGD adversarial training; no natural forward pass at all.
        BackwardResult b = backward(params, cache_adv, ce.grad_logits);
        r.loss = ce.loss;
        r.grads = std::move(b.grads);
        return r;
    }

    const ForwardCache cache_nat = forward(params, image);
    Tensor grad_logits_nat, grad_logits_adv;
    double fr_term;
    if (cfg.fr_on_probabilities) {
        const Tensor p_nat = softmax(cache_nat.logits);
        const Tensor p_adv = softmax(cache_adv.logits);
        const FrLossResult fr = fr_loss(p_nat, p_adv);
        fr_term = fr.loss;
        grad_logits_nat = softmax_backward(p_nat, fr.grad_nat);
        grad_logits_adv = softmax_backward(p_adv, fr.grad_adv);
    } else {
        const FrLossResult fr = fr_loss(cache_nat.logits, cache_adv.logits);
        fr_term = fr.loss;
        grad_logits_nat = fr.grad_nat;
        grad_logits_adv = fr.grad_adv;
    }

    Tensor g_adv = ce.grad_logits;
    for (std::size_t j = 0; j < g_adv.size(); ++j) {
        g_adv.data[j] += cfg.lambda * grad_logits_adv.data[j];
        grad_logits_nat.data[j] *= cfg.lambda;
    }

    BackwardResult b_adv = backward(params, cache_adv, g_adv);
    BackwardResult b_nat = backward(params, cache_nat, grad_logits_nat);
    for_each_tensor_pair(b_adv.grads, b_nat.grads, [](Tensor& a, const Tensor& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
    });

    r.loss = ce.loss + cfg.lambda * fr_term;
    r.grads = std::move(b_adv.grads);
    return r;
}

// --- optimizer --------------------------------------------------------------

// Classical momentum with L2 decay folded into the gradient:
//   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
inline void sgd_step(ModelParams& params, const ParamGrads& grads, ParamGrads& velocity,
                     double lr, double momentum, double weight_decay) {
    auto step = [lr, momentum, weight_decay](Tensor& p, const Tensor& g, Tensor& v) {
        if (p.shape != g.shape || p.shape != v.shape)
            throw std::invalid_argument("sgd_step: shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            v.data[i] = momentum * v.data[i] + (g.data[i] + weight_decay * p.data[i]);
            p.data[i] -= lr * v.data[i];
        }
    };
    step(params.conv1.kernels, grads.conv1.kernels, velocity.conv1.kernels);
    step(params.conv1.bias, grads.conv1.bias, velocity.conv1.bias);
    step(params.conv2.kernels, grads.conv2.kernels, velocity.conv2.kernels);
    step(params.conv2.bias, grads.conv2.bias, velocity.conv2.bias);
    step(params.fc1.weight, grads.fc1.weight, velocity.fc1.weight);
    step(params.fc1.bias, grads.fc1.bias, velocity.fc1.bias);
    step(params.fc2.weight, grads.fc2.weight, velocity.fc2.weight);
    step(params.fc2.bias, grads.fc2.bias, velocity.fc2.bias);
}

// --- stochastic weight averaging --------------------------------------------

struct SwaState {
    ModelParams avg;
    std::size_t count = 0;
};

// After k absorbs the state holds the exact arithmetic mean of the k
// checkpoints.
inline void swa_update(SwaState& state, const ModelParams& checkpoint) {
    if (state.count == 0) {
        state.avg = checkpoint;
        state.count = 1;
        return;
    }
    if (state.avg.tag != checkpoint.tag)
        throw std::invalid_argument("swa_update: architecture tag mismatch ('" + state.avg.tag +
                                    "' vs '" + checkpoint.tag + "')");
    const double k = static_cast<double>(state.count);
    for_each_tensor_pair(state.avg, checkpoint, [k](Tensor& a, const Tensor& c) {
        for (std::size_t i = 0; i < a.size(); ++i)
            a.data[i] = (a.data[i] * k + c.data[i]) / (k + 1.0);
    });
    state.count += 1;
}

// --- evaluation ---------------------------------------------------------------

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

// Accuracy and mean cross-entropy over a dataset; when an attack config is
// given every image is attacked first, with a per-image seed derived from
// the evaluation seed so results do not depend on iteration order or worker
// count.
inline EvalResult evaluate(const ModelParams& params, const Dataset& ds,
                           const std::optional<AttackConfig>& attack, std::uint64_t seed,
                           std::size_t workers = 1) {
    const std::size_t n = ds.size();
    if (n == 0) return {};
    const std::uint64_t eval_seed = derive_seed(seed, kEvalStream);
    const std::size_t chunks = chunk_count(n);
    std::vector<std::size_t> correct(chunks, 0);
    std::vector<double> loss_sum(chunks, 0.0);
    parallel_chunks(n, workers, [&](std::size_t c, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Tensor input = ds.images[i];
            if (attack)
                input = pgd(params, input, ds.labels[i], *attack, derive_seed(eval_seed, i));
            const ForwardCache cache = forward(params, input);
            loss_sum[c] += softmax_cross_entropy(cache.logits, ds.labels[i]).loss;
            std::size_t best = 0;
            for (std::size_t j = 1; j < cache.logits.size(); ++j)
                if (cache.logits.data[j] > cache.logits.data[best]) best = j;
            if (static_cast<int>(best) == ds.labels[i]) ++correct[c];
        }
    });
    EvalResult r;
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        loss += loss_sum[c];
        hits += correct[c];
    }
    r.accuracy = static_cast<double>(hits) / static_cast<double>(n);
    r.mean_loss = loss / static_cast<double>(n);
    return r;
}

// --- metrics -------------------------------------------------------------------

struct MetricsRow {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double standard_acc = 0.0;
    double robust_acc = 0.0;
    double wall_seconds = 0.0;
};

// One row per epoch. wall_seconds is zeroed unless include_timings is set:
// measured time is the one nondeterministic field, and byte-identical
// outputs under a fixed seed are part of the CLI contract.
inline std::string metrics_csv(const std::vector<MetricsRow>& rows, std::uint64_t seed,
                               bool include_timings = false) {
    std::string out = csv_seed_line(seed);
    out += "epoch,learning_rate,train_loss,standard_acc,robust_acc,wall_seconds\n";
    for (const MetricsRow& r : rows) {
        out += std::to_string(r.epoch) + "," + format_double(r.learning_rate) + "," +
               format_double(r.train_loss) + "," + format_double(r.standard_acc) + "," +
               format_double(r.robust_acc) + "," +
               format_double(include_timings ? r.wall_seconds : 0.0) + "\n";
    }
    return out;
}

// --- training loop ----------------------------------------------------------------

struct TrainResult {
    ModelParams final_params;
    std::optional<ModelParams> swa_params;
    std::vector<MetricsRow> metrics;
};

// Mean objective and gradient over one batch. Per-image results are
// accumulated per fixed-size chunk and the chunks reduced in order, so the
// gradient is bit-identical for any worker count.
inline ObjectiveResult batch_objective(const ModelParams& params,
                                       const std::vector<const Tensor*>& images,
                                       const std::vector<int>& labels,
                                       const std::vector<std::uint64_t>& attack_seeds,
                                       const TrainConfig& cfg) {
    const std::size_t n = images.size();
    const std::size_t chunks = chunk_count(n);
    std::vector<ObjectiveResult> partial(chunks);
    parallel_chunks(n, cfg.workers, [&](std::size_t c, std::size_t begin, std::size_t end) {
        ObjectiveResult acc;
        acc.grads = zero_grads_like(params);
        for (std::size_t i = begin; i < end; ++i) {
            ObjectiveResult one =
                at_objective_single(params, *images[i], labels[i], cfg, attack_seeds[i]);
            acc.loss += one.loss;
            for_each_tensor_pair(acc.grads, one.grads, [](Tensor& a, const Tensor& b) {
                for (std::size_t k = 0; k < a.size(); ++k) a.data[k] += b.data[k];
            });
        }
        partial[c] = std::move(acc);
    });
    ObjectiveResult total;
    total.grads = zero_grads_like(params);
    for (std::size_t c = 0; c < chunks; ++c) {
        total.loss += partial[c].loss;
        for_each_tensor_pair(total.grads, partial[c].grads, [](Tensor& a, const Tensor& b) {
            for (std::size_t k = 0; k < a.size(); ++k) a.data[k] += b.data[k];
        });
    }
    const double inv = 1.0 / static_cast<double>(n);
    total.loss *= inv;
    for_each_tensor(total.grads, [inv](Tensor& t) {
        for (double& v : t.data) v *= inv;
    });
    return total;
}

inline TrainResult train(const TrainConfig& cfg, const Dataset& train_set,
                         const Dataset& val_set,
                         const std::function<void(const MetricsRow&)>& on_epoch = {}) {
    if (train_set.size() == 0 || val_set.size() == 0)
        throw std::invalid_argument("train: datasets must be non-empty");

    TrainResult result;
    result.final_params = init_model(cfg.seed, cfg.arch);
    ParamGrads velocity = zero_grads_like(result.final_params);
    SwaState swa;

    const std::uint64_t shuffle_seed = derive_seed(cfg.seed, kShuffleStream);
    const std::uint64_t attack_seed = derive_seed(cfg.seed, kAttackStream);
    const std::uint64_t flip_seed = derive_seed(cfg.seed, kDataStream);
    const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);
    const std::size_t swa_from = cfg.resolved_swa_start();

    const std::size_t n = train_set.size();
    Dataset val_robust_subset;
    const Dataset* robust_val = &val_set;
    if (cfg.val_robust_max > 0 && cfg.val_robust_max < val_set.size()) {
        val_robust_subset.class_count = val_set.class_count;
        for (std::size_t i = 0; i < cfg.val_robust_max; ++i) {
            val_robust_subset.images.push_back(val_set.images[i]);
            val_robust_subset.labels.push_back(val_set.labels[i]);
        }
        robust_val = &val_robust_subset;
    }

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.lr_at(epoch);
        SplitMix64 shuffle_rng(derive_seed(shuffle_seed, epoch));
        const std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
        const std::uint64_t epoch_attack_seed = derive_seed(attack_seed, epoch);
        const std::uint64_t epoch_flip_seed = derive_seed(flip_seed, epoch);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        std::vector<Tensor> flipped; // keeps augmented images alive per batch
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::vector<const Tensor*> images;
            std::vector<int> labels;
            std::vector<std::uint64_t> seeds;
            flipped.clear();
            flipped.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = order[k];
                const Tensor* img = &train_set.images[idx];
                if (cfg.hflip_augment) {
                    SplitMix64 coin(derive_seed(epoch_flip_seed, idx));
                    if (coin.uniform01() < 0.5) {
                        flipped.push_back(hflip(*img));
                        img = &flipped.back();
                    }
                }
                images.push_back(img);
                labels.push_back(train_set.labels[idx]);
                seeds.push_back(derive_seed(epoch_attack_seed, idx));
            }
            const ObjectiveResult obj =
                batch_objective(result.final_params, images, labels, seeds, cfg);
            sgd_step(result.final_params, obj.grads, velocity, lr, cfg.momentum,
                     cfg.weight_decay);
            loss_sum += obj.loss;
            ++batches;
        }

        MetricsRow row;
        row.epoch = epoch;
        row.learning_rate = lr;
        row.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
        const std::uint64_t epoch_eval_seed = derive_seed(eval_seed, epoch);
        row.standard_acc =
            evaluate(result.final_params, val_set, std::nullopt, epoch_eval_seed, cfg.workers)
                .accuracy;
        row.robust_acc = evaluate(result.final_params, *robust_val, cfg.val_attack,
                                  epoch_eval_seed, cfg.workers)
                             .accuracy;

        if (cfg.swa_enabled && epoch >= swa_from) swa_update(swa, result.final_params);

        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.metrics.push_back(row);
        if (on_epoch) on_epoch(row);
    }

    if (swa.count > 0) result.swa_params = std::move(swa.avg);
    return result;
}

} // namespace freqat
