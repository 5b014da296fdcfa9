#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stnas/dataset.hpp"
#include "stnas/network.hpp"
#include "stnas/trainer.hpp"

namespace stnas {

// Score assigned to degenerate (singular kernel / singular NTK) cases; ranks
// below every regular score.
inline constexpr double kDegenerateScore = -1e30;

// The metrics a search can rank by. Every score is oriented so that a higher
// value predicts a better network.
enum class MetricKind { angle, loss, param, lr1, lr2, ntk };

inline constexpr int kNumMetricKinds = 6;

const char* metric_name(MetricKind m);
MetricKind parse_metric(const std::string& name);
std::vector<MetricKind> parse_metric_set(const std::string& comma_separated);
std::string metric_set_name(const std::vector<MetricKind>& set);

// All proxy scores for one network. Raw angles are kept in radians; oriented
// scores come out of score_for(). Fields that were not requested stay NaN.
struct MetricVector {
    std::string genotype;
    std::int64_t param_count = 0;
    double lr1 = std::numeric_limits<double>::quiet_NaN();        // distinct activation patterns (count)
    double lr2 = std::numeric_limits<double>::quiet_NaN();        // log-det of the pattern kernel
    double ntk_score = std::numeric_limits<double>::quiet_NaN();  // negative NTK condition number
    double theta_pred = std::numeric_limits<double>::quiet_NaN();  // radians
    double theta_feat = std::numeric_limits<double>::quiet_NaN();  // radians
    double loss_score = std::numeric_limits<double>::quiet_NaN();  // negative final training loss
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    bool lr2_degenerate = false;
    bool ntk_degenerate = false;
    std::uint64_t init_seed = 0;
    std::uint64_t proxy_seed = 0;
    std::uint64_t batch_seed = 0;

    // Orientation: angle score is -theta_pred, loss score is -final_loss, NTK
    // score is -condition; #Param, LR1, LR2 are already higher-is-better.
    double score_for(MetricKind m) const;
};

// ----------------------------- angle metric -----------------------------

// arccos of the cosine similarity between two flattened weight vectors,
// clamped into [-1, 1] before arccos. Throws on zero-norm input.
double angle_between(const std::vector<double>& v0, const std::vector<double>& vt);

// theta_pred: angle of the prediction-layer weights; score is its negation.
inline double metric_angle_pred(const WeightSnapshot& snap) { return -angle_between(snap.pred_weight_0, snap.pred_weight_t); }
// theta_feat is reported raw; it correlates positively on its own.
inline double metric_angle_feat(const WeightSnapshot& snap) { return angle_between(snap.feat_0, snap.feat_t); }
inline double metric_loss(const WeightSnapshot& snap) { return -snap.final_loss; }

// ----------------------------- activation patterns -----------------------------

// Per-sample ReLU on/off patterns, bit-packed. n_units is the total number of
// tapped ReLU units per sample (identical across samples of equal shape).
struct PackedCodes {
    std::int64_t n_samples = 0;
    std::int64_t n_units = 0;
    std::int64_t words_per_sample = 0;
    std::vector<std::uint64_t> bits;  // n_samples * words_per_sample

    const std::uint64_t* sample(std::int64_t i) const { return bits.data() + i * words_per_sample; }
};

// Reads the taps of a graph whose forward pass already ran. Disabled taps
// (masked-out supernet branches) do not execute and are not part of the
// pattern.
template <typename T>
PackedCodes collect_activation_codes(const ComputeGraph<T>& graph) {
    std::vector<const ReluNode<T>*> taps;
    for (const ReluNode<T>* tap : graph.activation_taps()) {
        if (tap->enabled()) taps.push_back(tap);
    }
    PackedCodes codes;
    if (taps.empty()) return codes;
    codes.n_samples = taps.front()->out.dim(0);
    for (const auto* tap : taps) codes.n_units += tap->units_per_sample();
    codes.words_per_sample = (codes.n_units + 63) / 64;
    codes.bits.assign(static_cast<std::size_t>(codes.n_samples * codes.words_per_sample), 0);
    std::vector<std::uint8_t> scratch;
    for (std::int64_t n = 0; n < codes.n_samples; ++n) {
        scratch.clear();
        for (const auto* tap : taps) tap->append_pattern(n, scratch);
        std::uint64_t* dst = codes.bits.data() + n * codes.words_per_sample;
        for (std::size_t b = 0; b < scratch.size(); ++b) {
            if (scratch[b]) dst[b / 64] |= (std::uint64_t{1} << (b % 64));
        }
    }
    return codes;
}

// Hamming-distance kernel over the patterns: K_ij = n_units - d_H(code_i, code_j).
struct KernelMatrix {
    std::vector<double> k;  // n x n, row-major, symmetric
    std::int64_t n = 0;
    std::int64_t n_units = 0;

    double at(std::int64_t i, std::int64_t j) const { return k[static_cast<std::size_t>(i * n + j)]; }
};

KernelMatrix naswot_kernel(const PackedCodes& codes);

// LR1: number of distinct activation patterns in the batch. A network with no
// ReLU taps is degenerate and scores 1.
double metric_lr1(const PackedCodes& codes);

struct Lr2Result {
    double score = kDegenerateScore;  // sum of log eigenvalues of K
    bool degenerate = false;
    KernelMatrix kernel;
};

// LR2: log-determinant of the pattern kernel via symmetric eigendecomposition.
// Samples are put into a canonical (lexicographic) order first so the result
// is bit-identical under any permutation of the batch. Any eigenvalue at or
// below 1e-9 * n_units flags the batch as degenerate.
Lr2Result metric_lr2(const PackedCodes& codes);

// Convenience wrappers: forward the batch at initialization, then score.
template <typename T>
PackedCodes forward_codes(NetworkInstance<T>& net, const Tensor<T>& batch) {
    if (batch.dim(0) < 2) throw ConfigError("linear-region metrics need a batch of >= 2 samples");
    net.forward_logits(batch);
    return collect_activation_codes(net.graph);
}

// ----------------------------- NTK -----------------------------

struct NtkResult {
    double condition = std::numeric_limits<double>::quiet_NaN();
    double score = kDegenerateScore;  // -condition when non-degenerate
    bool degenerate = false;
};

// Eigenvalues of a dense symmetric matrix (ascending).
std::vector<double> symmetric_eigenvalues(const std::vector<double>& matrix, std::int64_t n);

// Condition-number scoring of a Gram matrix (exposed for tests).
NtkResult ntk_from_gram(const std::vector<double>& gram, std::int64_t n);

// Exact NTK of the network's logits w.r.t. all parameters on a batch:
// Theta = J J^T computed with one backward pass per (sample, logit) pair.
// Runs on whatever precision the graph carries; use a double graph for
// stable condition numbers.
template <typename T>
NtkResult metric_ntk(ComputeGraph<T>& graph, InputNode<T>* input, Node<T>* logits, const Tensor<T>& batch) {
    input->set(batch);
    graph.forward_to(logits);
    const std::int64_t n = logits->out.dim(0), c = logits->out.dim(1);
    const std::int64_t rows = n * c;
    const std::int64_t p = graph.param_scalar_count();

    std::vector<double> jac(static_cast<std::size_t>(rows * p));
    Tensor<T> seed(logits->out.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        seed.zero();
        seed[r] = T{1};
        graph.backward(logits, &seed);
        double* row = jac.data() + r * p;
        std::int64_t off = 0;
        for (const auto& pg : graph.params()) {
            for (std::int64_t i = 0; i < pg->grad.numel(); ++i) {
                const double v = static_cast<double>(pg->grad[i]);
                if (!std::isfinite(v)) throw NumericError(pg->name, "non-finite jacobian entry");
                row[off++] = v;
            }
        }
    }

    std::vector<double> gram(static_cast<std::size_t>(rows * rows));
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = i; j < rows; ++j) {
            double acc = 0.0;
            const double* a = jac.data() + i * p;
            const double* b = jac.data() + j * p;
            for (std::int64_t t = 0; t < p; ++t) acc += a[t] * b[t];
            gram[static_cast<std::size_t>(i * rows + j)] = acc;
            gram[static_cast<std::size_t>(j * rows + i)] = acc;
        }
    }
    return ntk_from_gram(gram, rows);
}

// ----------------------------- full scoring -----------------------------

struct ScoreConfig {
    TrainConfig train;
    int proxy_classes = 10;
    int proxy_per_class = 10;
    int metric_batch = 64;  // batch for LR1/LR2
    int ntk_batch = 16;     // batch for NTK (n*c backward passes, 64-bit)
    int ntk_repeats = 1;    // average the condition number over this many batches
    std::uint64_t seed = 0;
    // When nonzero these override the seeds derived from `seed`; searches use
    // them to share one proxy set and one metric batch across candidates.
    std::uint64_t proxy_seed = 0;
    std::uint64_t batch_seed = 0;
    unsigned metric_mask = 0x3F;  // all six metrics

    bool wants(MetricKind m) const { return (metric_mask >> static_cast<int>(m)) & 1u; }
    static unsigned mask_of(const std::vector<MetricKind>& set);
};

// Builds the network for one genotype and fills the requested metric fields.
// Training-free metrics run on a fresh initialization; angle/loss run through
// short_train on the proxy subsample.
MetricVector score_network(const CellGenotype& genotype, const MacroConfig& macro, const LabeledDataset& dataset,
                           const ScoreConfig& cfg);

// CSV surface for MetricVector rows.
std::string metric_csv_header();
std::string metric_csv_row(const MetricVector& mv);
MetricVector metric_from_csv_row(const std::string& line);

}  // namespace stnas
