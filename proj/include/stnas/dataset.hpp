#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stnas/tensor.hpp"

namespace stnas {

// Images are stored normalized (per-channel standardized); the constants used
// are kept so run manifests can record them.
struct LabeledDataset {
    Tensor<float> images;  // [N, C, H, W]
    std::vector<int> labels;
    int class_count = 0;
    std::string source;  // e.g. "cifar:<path>" or "synth:classes=10,per_class=100,res=32,seed=1"
    std::vector<double> channel_mean;
    std::vector<double> channel_std;

    std::int64_t size() const { return images.empty() ? 0 : images.dim(0); }
    int resolution() const { return static_cast<int>(images.dim(2)); }
    int channels() const { return static_cast<int>(images.dim(1)); }

    // Images at the given indices as one batch tensor.
    Tensor<float> gather(const std::vector<std::int64_t>& indices) const;
    std::vector<int> gather_labels(const std::vector<std::int64_t>& indices) const;
};

// The condensed subsample used for short training: `per_class` images for each
// of `class_ids`, relabeled to 0..k-1 in chosen-class order.
struct ProxyDataset {
    std::string parent;  // source string of the dataset it came from
    std::vector<int> class_ids;
    int per_class = 0;
    Tensor<float> images;
    std::vector<int> labels;
    std::uint64_t seed = 0;

    int class_count() const { return static_cast<int>(class_ids.size()); }
    std::int64_t size() const { return images.empty() ? 0 : images.dim(0); }
};

// Standard CIFAR binary layout: records of 1 label byte + 3072 image bytes
// (3x32x32 row-major RGB). Pixels are scaled to [0,1] and standardized with
// the usual CIFAR-10 channel constants.
LabeledDataset load_cifar_binary(const std::string& path);

// Class-conditional Gaussian blob images: each class gets its own blob center
// and channel mix, plus pixel noise. Separable enough that a small conv net
// fits it within a few dozen iterations.
LabeledDataset synth_dataset(int classes, int per_class, int resolution, std::uint64_t seed);

// Balanced subsample: k classes uniformly without replacement, then per_class
// images per chosen class without replacement. Pure function of its arguments.
ProxyDataset sample_proxy(const LabeledDataset& dataset, int k_classes, int per_class, std::uint64_t seed);

// Uniform sample of n images (without replacement) as a batch, e.g. for
// training-free metrics.
Tensor<float> sample_batch(const LabeledDataset& dataset, std::int64_t n, std::uint64_t seed);

}  // namespace stnas
