#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stnas/dataset.hpp"
#include "stnas/errors.hpp"
#include "stnas/network.hpp"
#include "stnas/optim.hpp"
#include "stnas/rng.hpp"

namespace stnas {

struct TrainConfig {
    int iterations = 50;
    double lr = 0.2;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    InitScheme init_scheme = InitScheme::kaiming_uniform;
    std::uint64_t seed = 0;
    int batch_size = 0;  // 0 = the whole training set every iteration
    // Which parameters enter the angle vectors. BN affine params are part of
    // the feature vector by default; the prediction-layer bias is excluded
    // because it starts at zero and would make the direction ill-defined.
    bool include_bn_in_feat = true;
    bool include_pred_bias = false;

    void validate() const {
        if (iterations < 1) throw ConfigError("TrainConfig: iterations must be >= 1");
        if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be > 0");
        if (momentum < 0.0 || weight_decay < 0.0)
            throw ConfigError("TrainConfig: momentum/weight_decay must be >= 0");
    }
};

// Flattened weight vectors before (t=0) and after (t) short training.
struct WeightSnapshot {
    std::vector<double> pred_weight_0, pred_weight_t;
    std::vector<double> feat_0, feat_t;
    double final_loss = 0.0;             // evaluated on the training set after the last step
    std::vector<double> loss_curve;      // loss observed at each iteration, pre-update

    void check_paired() const {
        if (pred_weight_0.size() != pred_weight_t.size() || feat_0.size() != feat_t.size())
            throw StateError("WeightSnapshot: paired vectors differ in length");
        for (const auto* v : {&pred_weight_0, &pred_weight_t, &feat_0, &feat_t}) {
            for (double x : *v) {
                if (!std::isfinite(x)) throw StateError("WeightSnapshot: non-finite weight entry");
            }
        }
    }
};

// Prediction-layer weight vector (optionally with the bias appended).
template <typename T>
std::vector<double> flatten_prediction(const NetworkInstance<T>& net, const TrainConfig& cfg) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(net.prediction_weight->value.numel()));
    for (std::int64_t i = 0; i < net.prediction_weight->value.numel(); ++i)
        v.push_back(static_cast<double>(net.prediction_weight->value[i]));
    if (cfg.include_pred_bias) {
        for (std::int64_t i = 0; i < net.prediction_bias->value.numel(); ++i)
            v.push_back(static_cast<double>(net.prediction_bias->value[i]));
    }
    return v;
}

// All feature-role parameters concatenated in registration order.
template <typename T>
std::vector<double> flatten_features(const NetworkInstance<T>& net, const TrainConfig& cfg) {
    std::vector<double> v;
    for (const auto& p : net.graph.params()) {
        if (p->role != ParamRole::feature) continue;
        if (!cfg.include_bn_in_feat && (p->kind == ParamKind::bn_gamma || p->kind == ParamKind::bn_beta)) continue;
        for (std::int64_t i = 0; i < p->value.numel(); ++i) v.push_back(static_cast<double>(p->value[i]));
    }
    return v;
}

namespace detail {

// Shared SGD loop over (images, labels); full batch when cfg.batch_size == 0,
// otherwise deterministic shuffled mini-batches.
template <typename T>
WeightSnapshot train_loop(NetworkInstance<T>& net, const Tensor<T>& images, const std::vector<int>& labels,
                          const TrainConfig& cfg) {
    cfg.validate();
    const std::int64_t n = images.dim(0);

    WeightSnapshot snap;
    snap.pred_weight_0 = flatten_prediction(net, cfg);
    snap.feat_0 = flatten_features(net, cfg);

    SgdOptimizer<T> opt(net.graph);
    const std::int64_t bs = cfg.batch_size > 0 ? std::min<std::int64_t>(cfg.batch_size, n) : n;
    const std::int64_t batches_per_epoch = (n + bs - 1) / bs;

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    const std::int64_t per = images.numel() / n;
    Tensor<T> batch_images;
    std::vector<int> batch_labels;

    for (int t = 0; t < cfg.iterations; ++t) {
        try {
            double loss;
            if (bs == n) {
                loss = net.compute_loss(images, labels);
            } else {
                const std::int64_t epoch = t / batches_per_epoch;
                const std::int64_t slot = t % batches_per_epoch;
                if (slot == 0) {
                    Rng rng(derive_seed(cfg.seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
                    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
                    rng.shuffle(order);
                }
                const std::int64_t lo = slot * bs;
                const std::int64_t hi = std::min<std::int64_t>(lo + bs, n);
                batch_images.resize({hi - lo, images.dim(1), images.dim(2), images.dim(3)});
                batch_labels.resize(static_cast<std::size_t>(hi - lo));
                for (std::int64_t i = lo; i < hi; ++i) {
                    const std::int64_t src = order[static_cast<std::size_t>(i)];
                    std::copy(images.data() + src * per, images.data() + (src + 1) * per,
                              batch_images.data() + (i - lo) * per);
                    batch_labels[static_cast<std::size_t>(i - lo)] = labels[static_cast<std::size_t>(src)];
                }
                loss = net.compute_loss(batch_images, batch_labels);
            }
            if (!std::isfinite(loss)) throw NumericError("loss", "training loss became non-finite");
            snap.loss_curve.push_back(loss);
            net.graph.backward(net.loss);
            opt.step(cfg.lr, cfg.momentum, cfg.weight_decay);
        } catch (const NumericError& e) {
            // blown-up logits, grads or loss all mean the same thing here
            throw DivergedError(std::string("training diverged: ") + e.what(), t);
        }
    }

    try {
        snap.final_loss = net.compute_loss(images, labels);
    } catch (const NumericError& e) {
        throw DivergedError(std::string("post-training evaluation diverged: ") + e.what(), cfg.iterations);
    }
    if (!std::isfinite(snap.final_loss))
        throw DivergedError("post-training loss is non-finite", cfg.iterations);
    snap.pred_weight_t = flatten_prediction(net, cfg);
    snap.feat_t = flatten_features(net, cfg);
    try {
        snap.check_paired();
    } catch (const StateError& e) {
        // weights off the loss path can still overflow without tripping the loss
        throw DivergedError(e.what(), cfg.iterations);
    }
    return snap;
}

}  // namespace detail

// The short-training scheme: snapshot the fresh weights, run `iterations` SGD
// steps on the proxy set, snapshot again. `net` must be freshly initialized.
template <typename T>
WeightSnapshot short_train(NetworkInstance<T>& net, const ProxyDataset& proxy, const TrainConfig& cfg) {
    if (proxy.size() < 1) throw ConfigError("short_train: empty proxy dataset");
    const Tensor<T> images = proxy.images.template cast<T>();
    return detail::train_loop(net, images, proxy.labels, cfg);
}

}  // namespace stnas
