#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/hsi.hpp"
#include "hsrmamba/metrics.hpp"
#include "hsrmamba/model.hpp"
#include "hsrmamba/nn.hpp"
#include "hsrmamba/rng.hpp"

namespace hsr {

/// GT patch side used by default: 64 for s in {2, 4}, 128 for s = 8.
inline std::size_t default_patch_size(std::size_t scale) { return scale >= 8 ? 128 : 64; }

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch = 8;
    std::size_t epochs = 50;
    std::size_t max_steps = 0;          // 0: no cap beyond epochs
    std::size_t patch = 64;             // GT patch side
    std::uint64_t seed = 0;             // shuffle seed
    std::size_t checkpoint_interval = 0;  // 0: never
    std::string checkpoint_path;
    double max_grad_norm = 0.0;         // 0: no clipping
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    AdamWConfig adamw() const { return {lr, beta1, beta2, eps, weight_decay}; }

    /// Patch side must be divisible by s and by 2^K.
    void validate(const ModelConfig& m) const {
        require(batch >= 1, "train config: batch must be >= 1");
        require(lr > 0.0, "train config: lr must be positive");
        require(patch >= 1 && patch % m.scale == 0,
                "train config: patch " + std::to_string(patch) + " not divisible by scale " + std::to_string(m.scale));
        const std::size_t pow2 = std::size_t{1} << m.levels;
        require(patch % pow2 == 0, "train config: patch " + std::to_string(patch) + " not divisible by 2^K = " +
                                       std::to_string(pow2));
    }
};

/// One training sample: LR input [C x h x w] and GT target [C x sh x sw].
struct PatchPair {
    Tensor<float> lr;
    Tensor<float> gt;
};

struct TrainResult {
    ModelWeights<float> weights;
    std::vector<double> loss_curve;  // one entry per executed step
};

/// Gradient L2 norm over all tensors.
inline double global_norm(const std::vector<Tensor<float>>& grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (float v : g.data()) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

/// Mean L1 loss of a batch, recorded on `tape` through `bindings`.
inline Var<float> batch_loss(const std::vector<const PatchPair*>& batch, const Bindings<float>& b,
                             const ModelConfig& cfg) {
    std::vector<Var<float>> losses;
    losses.reserve(batch.size());
    for (const auto* s : batch) {
        const Var<float> x_up(bicubic_resize(s->lr, cfg.scale));
        const Var<float> target(s->gt);
        losses.push_back(l1_loss(forward_upsampled(x_up, b, cfg), target));
    }
    auto total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0f / static_cast<float>(losses.size()));
}

/// Epoch loop over a fixed dataset. Each epoch visits a counter-based
/// permutation of the samples in consecutive batches (the last one may be short).
/// `on_step(step, loss)` is called after each update when provided.
inline TrainResult train(const std::vector<PatchPair>& dataset, const TrainConfig& tc, const ModelConfig& mc,
                         const std::function<void(std::size_t, double)>& on_step = {}) {
    mc.validate();
    TrainResult result{init_weights<float>(mc), {}};
    if (tc.epochs == 0) return result;
    require(!dataset.empty(), "train: dataset is empty");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& p = dataset[i];
        const bool ok = p.lr.rank() == 3 && p.gt.rank() == 3 && p.lr.dim(0) == mc.bands && p.gt.dim(0) == mc.bands &&
                        p.gt.dim(1) == p.lr.dim(1) * mc.scale && p.gt.dim(2) == p.lr.dim(2) * mc.scale;
        if (!ok)
            throw ContractError("train: sample " + std::to_string(i) + " shapes " + to_string(p.lr.shape()) + " / " +
                                to_string(p.gt.shape()) + " inconsistent with model config");
    }

    auto& params = result.weights.params;
    OptState<float> opt{tc.adamw(), 0, {}, {}};
    std::vector<Tensor<float>*> slots;
    for (auto& v : params.values()) slots.push_back(&v);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto order = counter_permutation(dataset.size(), tc.seed, epoch);
        for (std::size_t start = 0; start < order.size(); start += tc.batch) {
            if (tc.max_steps && step >= tc.max_steps) return result;
            std::vector<const PatchPair*> batch;
            for (std::size_t k = start; k < std::min(order.size(), start + tc.batch); ++k)
                batch.push_back(&dataset[order[k]]);

            Tape<float> tape;
            const Bindings<float> b(params, &tape);
            const auto loss = batch_loss(batch, b, mc);
            const double lv = loss.value().item();
            if (!std::isfinite(lv)) throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));

            const auto g = tape.backward(loss);
            std::vector<Tensor<float>> grads;
            grads.reserve(params.size());
            for (const auto& v : b.vars()) grads.push_back(g.grad(v));
            if (tc.max_grad_norm > 0.0) {
                const double n = global_norm(grads);
                if (n > tc.max_grad_norm) {
                    const float f = static_cast<float>(tc.max_grad_norm / n);
                    for (auto& t : grads)
                        for (auto& v : t.data()) v *= f;
                }
            }
            adamw_step<float>(slots, grads, opt);

            result.loss_curve.push_back(lv);
            ++step;
            if (on_step) on_step(step, lv);
            if (tc.checkpoint_interval && !tc.checkpoint_path.empty() && step % tc.checkpoint_interval == 0)
                save_checkpoint(result.weights, tc.checkpoint_path);
        }
    }
    return result;
}

/// Crop of a cube as a tensor.
inline Tensor<float> crop_cube(const HsiCube& c, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    Tensor<float> t({c.bands, h, w});
    for (std::size_t b = 0; b < c.bands; ++b)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) t[(b * h + y) * w + x] = c.at(b, y0 + y, x0 + x);
    return t;
}

/// A matched (LR, GT) pair of cubes with GT dims exactly s times the LR dims.
struct CubePair {
    HsiCube lr;
    HsiCube gt;
};

/// Origin of one aligned GT crop: a multiple of s, uniform over valid positions.
struct PatchOrigin {
    std::size_t cube = 0;
    std::size_t y = 0;
    std::size_t x = 0;
};

inline PatchOrigin draw_origin(const std::vector<CubePair>& pairs, std::size_t patch, std::size_t s, Rng& rng) {
    const std::size_t ci = static_cast<std::size_t>(rng.below(pairs.size()));
    const auto& gt = pairs[ci].gt;
    const std::size_t ny = (gt.height - patch) / s + 1, nx = (gt.width - patch) / s + 1;
    const std::size_t oy = static_cast<std::size_t>(rng.below(ny)) * s;
    const std::size_t ox = static_cast<std::size_t>(rng.below(nx)) * s;
    return {ci, oy, ox};
}

/// `count` random aligned crops; the LR crop origin is the GT origin divided by s.
inline std::vector<PatchPair> sample_patches(const std::vector<CubePair>& pairs, const TrainConfig& tc,
                                             std::size_t s, Rng& rng, std::size_t count) {
    require(!pairs.empty(), "sample_patches: no cubes");
    require(s >= 1 && tc.patch % s == 0, "sample_patches: patch size must be divisible by the scale");
    for (const auto& p : pairs) {
        if (p.gt.height < tc.patch || p.gt.width < tc.patch)
            throw ContractError("sample_patches: cube " + std::to_string(p.gt.height) + "x" +
                                std::to_string(p.gt.width) + " smaller than patch " + std::to_string(tc.patch));
        if (p.lr.height * s != p.gt.height || p.lr.width * s != p.gt.width || p.lr.bands != p.gt.bands)
            throw ContractError("sample_patches: LR cube is not GT / s");
    }
    std::vector<PatchPair> out;
    out.reserve(count);
    const std::size_t lp = tc.patch / s;
    for (std::size_t i = 0; i < count; ++i) {
        const auto o = draw_origin(pairs, tc.patch, s, rng);
        const auto& p = pairs[o.cube];
        out.push_back({crop_cube(p.lr, o.y / s, o.x / s, lp, lp), crop_cube(p.gt, o.y, o.x, tc.patch, tc.patch)});
    }
    return out;
}

/// "step,loss" CSV, steps numbered from 1.
inline std::string loss_curve_csv(const std::vector<double>& curve) {
    std::string s = "step,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) s += std::to_string(i + 1) + "," + format_number(curve[i]) + "\n";
    return s;
}

}  // namespace hsr
