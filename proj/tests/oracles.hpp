// Independent reference implementations used as test oracles. These must stay
// naive and must not share code with the implementation paths they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "stnas/graph.hpp"
#include "stnas/rng.hpp"
#include "stnas/tensor.hpp"

namespace oracles {

// Seven nested loops, no tricks: the reference for conv2d_forward.
template <typename T>
stnas::Tensor<T> naive_conv2d(const stnas::Tensor<T>& in, const stnas::Tensor<T>& w, int stride, int padding) {
    const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    stnas::Tensor<T> out({N, K, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t k = 0; k < K; ++k)
            for (std::int64_t y = 0; y < Ho; ++y)
                for (std::int64_t x = 0; x < Wo; ++x) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t i = 0; i < kh; ++i)
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const std::int64_t iy = y * stride + i - padding;
                                const std::int64_t ix = x * stride + j - padding;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<double>(in[((n * C + c) * H + iy) * W + ix]) *
                                       static_cast<double>(w[((k * C + c) * kh + i) * kw + j]);
                            }
                    out[((n * K + k) * Ho + y) * Wo + x] = static_cast<T>(acc);
                }
    return out;
}

// Max relative error between analytic grads and central finite differences
// over every parameter scalar. `loss_fn` re-runs the forward pass.
inline double max_fd_relative_error(stnas::ComputeGraph<double>& graph, const std::function<double()>& loss_fn,
                                    double h = 1e-5, double floor = 1e-6) {
    double worst = 0.0;
    for (const auto& p : graph.params()) {
        for (std::int64_t i = 0; i < p->value.numel(); ++i) {
            const double analytic = p->grad[i];
            const double orig = p->value[i];
            p->value[i] = orig + h;
            const double lp = loss_fn();
            p->value[i] = orig - h;
            const double lm = loss_fn();
            p->value[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double rel = std::fabs(analytic - fd) / std::max({std::fabs(analytic), std::fabs(fd), floor});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Kendall's tau-b by exhaustive pair classification (the O(n^2) oracle).
// Returns NaN when a side is entirely tied.
inline double kendall_tau_pairs(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) continue;
            if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if (dx * dy > 0.0) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    // ties_x/ties_y exclude both-tied pairs, so C + D + ties_y = n0 - n1 and
    // C + D + ties_x = n0 - n2, matching the tau-b denominator.
    const double denom_sq = static_cast<double>(concordant + discordant + ties_y) *
                            static_cast<double>(concordant + discordant + ties_x);
    if (denom_sq <= 0.0) return std::nan("");
    return static_cast<double>(concordant - discordant) / std::sqrt(denom_sq);
}

// Distinct activation patterns via a hash set over the raw bit strings.
inline std::int64_t distinct_patterns_hashset(const std::vector<std::string>& raw_codes) {
    std::unordered_set<std::string> set(raw_codes.begin(), raw_codes.end());
    return static_cast<std::int64_t>(set.size());
}

template <typename T>
void fill_uniform(stnas::Tensor<T>& t, stnas::Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
}

}  // namespace oracles
