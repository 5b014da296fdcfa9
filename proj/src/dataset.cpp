#include "stnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "stnas/errors.hpp"
#include "stnas/rng.hpp"

namespace stnas {

namespace {

constexpr std::int64_t kCifarRecordBytes = 1 + 3 * 32 * 32;
// Widely used CIFAR-10 channel statistics (pixels in [0,1]).
constexpr std::array<double, 3> kCifarMean = {0.4914, 0.4822, 0.4465};
constexpr std::array<double, 3> kCifarStd = {0.2470, 0.2435, 0.2616};

std::vector<std::vector<std::int64_t>> indices_by_class(const LabeledDataset& d) {
    std::vector<std::vector<std::int64_t>> per_class(static_cast<std::size_t>(d.class_count));
    for (std::int64_t i = 0; i < d.size(); ++i)
        per_class[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])].push_back(i);
    return per_class;
}

}  // namespace

Tensor<float> LabeledDataset::gather(const std::vector<std::int64_t>& indices) const {
    const std::int64_t per = images.numel() / images.dim(0);
    Tensor<float> out({static_cast<std::int64_t>(indices.size()), images.dim(1), images.dim(2), images.dim(3)});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const float* src = images.data() + indices[i] * per;
        std::copy(src, src + per, out.data() + static_cast<std::int64_t>(i) * per);
    }
    return out;
}

std::vector<int> LabeledDataset::gather_labels(const std::vector<std::int64_t>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::int64_t i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
    return out;
}

LabeledDataset load_cifar_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path, 0);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw FormatError(path + ": empty file", 0);
    const std::int64_t total = static_cast<std::int64_t>(bytes.size());
    const std::int64_t n = total / kCifarRecordBytes;
    if (total % kCifarRecordBytes != 0)
        throw FormatError(path + ": truncated record", static_cast<std::uint64_t>(n * kCifarRecordBytes));

    LabeledDataset d;
    d.source = "cifar:" + path;
    d.class_count = 10;
    d.channel_mean.assign(kCifarMean.begin(), kCifarMean.end());
    d.channel_std.assign(kCifarStd.begin(), kCifarStd.end());
    d.images.resize({n, 3, 32, 32});
    d.labels.resize(static_cast<std::size_t>(n));

    float* img = d.images.data();
    for (std::int64_t r = 0; r < n; ++r) {
        const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
        const int label = rec[0];
        if (label > 9)
            throw FormatError(path + ": label byte out of range", static_cast<std::uint64_t>(r * kCifarRecordBytes));
        d.labels[static_cast<std::size_t>(r)] = label;
        for (int c = 0; c < 3; ++c) {
            const double mu = kCifarMean[static_cast<std::size_t>(c)];
            const double sd = kCifarStd[static_cast<std::size_t>(c)];
            const unsigned char* plane = rec + 1 + c * 1024;
            float* dst = img + (r * 3 + c) * 1024;
            for (int t = 0; t < 1024; ++t)
                dst[t] = static_cast<float>((static_cast<double>(plane[t]) / 255.0 - mu) / sd);
        }
    }
    return d;
}

LabeledDataset synth_dataset(int classes, int per_class, int resolution, std::uint64_t seed) {
    if (classes < 2 || per_class < 1 || resolution < 4)
        throw ConfigError("synth_dataset: need classes >= 2, per_class >= 1, resolution >= 4");

    const std::int64_t n = static_cast<std::int64_t>(classes) * per_class;
    const int R = resolution;
    LabeledDataset d;
    d.source = "synth:classes=" + std::to_string(classes) + ",per_class=" + std::to_string(per_class) +
               ",res=" + std::to_string(resolution) + ",seed=" + std::to_string(seed);
    d.class_count = classes;
    d.images.resize({n, 3, R, R});
    d.labels.resize(static_cast<std::size_t>(n));

    // Class template: a Gaussian blob at a class-specific position with a
    // class-specific channel mix.
    Rng class_rng(derive_seed(seed, "synth.classes"));
    std::vector<std::array<double, 5>> tmpl(static_cast<std::size_t>(classes));  // cx, cy, mix[3]
    for (int k = 0; k < classes; ++k) {
        const double ang = 2.0 * M_PI * k / classes;
        auto& t = tmpl[static_cast<std::size_t>(k)];
        t[0] = R / 2.0 + 0.28 * R * std::cos(ang);
        t[1] = R / 2.0 + 0.28 * R * std::sin(ang);
        for (int c = 0; c < 3; ++c) t[2 + static_cast<std::size_t>(c)] = class_rng.uniform(-1.0, 1.0);
    }

    const double sigma = R / 5.0;
    const double noise_std = 0.25;
    Rng noise_rng(derive_seed(seed, "synth.noise"));
    float* img = d.images.data();
    std::int64_t idx = 0;
    for (int k = 0; k < classes; ++k) {
        const auto& t = tmpl[static_cast<std::size_t>(k)];
        for (int s = 0; s < per_class; ++s, ++idx) {
            d.labels[static_cast<std::size_t>(idx)] = k;
            // small per-sample jitter of the blob center
            const double cx = t[0] + noise_rng.uniform(-1.0, 1.0);
            const double cy = t[1] + noise_rng.uniform(-1.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                float* plane = img + ((idx * 3 + c) * R) * R;
                const double mix = t[2 + static_cast<std::size_t>(c)];
                for (int y = 0; y < R; ++y) {
                    for (int x = 0; x < R; ++x) {
                        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                        const double blob = mix * std::exp(-d2 / (2.0 * sigma * sigma));
                        plane[y * R + x] = static_cast<float>(blob + noise_std * noise_rng.normal());
                    }
                }
            }
        }
    }

    // Standardize per channel over the whole set and record the constants.
    d.channel_mean.resize(3);
    d.channel_std.resize(3);
    const std::int64_t plane = static_cast<std::int64_t>(R) * R;
    for (int c = 0; c < 3; ++c) {
        double s = 0.0, s2 = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const float* p = img + ((i * 3 + c) * plane);
            for (std::int64_t t = 0; t < plane; ++t) {
                s += p[t];
                s2 += static_cast<double>(p[t]) * p[t];
            }
        }
        const double m = s / static_cast<double>(n * plane);
        const double var = std::max(1e-12, s2 / static_cast<double>(n * plane) - m * m);
        const double sd = std::sqrt(var);
        d.channel_mean[static_cast<std::size_t>(c)] = m;
        d.channel_std[static_cast<std::size_t>(c)] = sd;
        for (std::int64_t i = 0; i < n; ++i) {
            float* p = img + ((i * 3 + c) * plane);
            for (std::int64_t t = 0; t < plane; ++t)
                p[t] = static_cast<float>((static_cast<double>(p[t]) - m) / sd);
        }
    }
    return d;
}

ProxyDataset sample_proxy(const LabeledDataset& dataset, int k_classes, int per_class, std::uint64_t seed) {
    if (k_classes < 1 || k_classes > dataset.class_count)
        throw ConfigError("sample_proxy: need 1 <= k_classes <= " + std::to_string(dataset.class_count));
    if (per_class < 1) throw ConfigError("sample_proxy: per_class must be >= 1");

    const auto per_class_indices = indices_by_class(dataset);

    Rng class_rng(derive_seed(seed, "proxy.classes"));
    const auto chosen = class_rng.sample_without_replacement(dataset.class_count, k_classes);

    ProxyDataset proxy;
    proxy.parent = dataset.source;
    proxy.per_class = per_class;
    proxy.seed = seed;
    std::vector<std::int64_t> picked;
    for (std::size_t ci = 0; ci < chosen.size(); ++ci) {
        const int cls = static_cast<int>(chosen[ci]);
        proxy.class_ids.push_back(cls);
        const auto& pool = per_class_indices[static_cast<std::size_t>(cls)];
        if (static_cast<int>(pool.size()) < per_class)
            throw ConfigError("sample_proxy: class " + std::to_string(cls) + " has only " +
                              std::to_string(pool.size()) + " images, need " + std::to_string(per_class));
        Rng img_rng(derive_seed(seed, "proxy.images", static_cast<std::uint64_t>(cls)));
        const auto sel = img_rng.sample_without_replacement(static_cast<std::int64_t>(pool.size()), per_class);
        for (std::int64_t s : sel) {
            picked.push_back(pool[static_cast<std::size_t>(s)]);
            proxy.labels.push_back(static_cast<int>(ci));  // relabel to chosen-class order
        }
    }
    proxy.images = dataset.gather(picked);
    return proxy;
}

Tensor<float> sample_batch(const LabeledDataset& dataset, std::int64_t n, std::uint64_t seed) {
    const std::int64_t take = std::min<std::int64_t>(n, dataset.size());
    if (take < 1) throw ConfigError("sample_batch: empty dataset");
    Rng rng(derive_seed(seed, "metric.batch"));
    return dataset.gather(rng.sample_without_replacement(dataset.size(), take));
}

}  // namespace stnas
