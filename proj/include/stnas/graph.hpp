#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "stnas/errors.hpp"
#include "stnas/rng.hpp"
#include "stnas/tensor.hpp"

namespace stnas {

// ----------------------------- parameters -----------------------------

enum class ParamRole { feature, prediction_weight, prediction_bias };
enum class ParamKind { conv_weight, linear_weight, bn_gamma, bn_beta, bias };
enum class InitScheme { kaiming_uniform, kaiming_normal, xavier_uniform };

inline const char* init_scheme_name(InitScheme s) {
    switch (s) {
        case InitScheme::kaiming_uniform: return "kaiming_uniform";
        case InitScheme::kaiming_normal: return "kaiming_normal";
        case InitScheme::xavier_uniform: return "xavier_uniform";
    }
    return "?";
}

inline InitScheme parse_init_scheme(std::string_view s) {
    if (s == "kaiming_uniform") return InitScheme::kaiming_uniform;
    if (s == "kaiming_normal") return InitScheme::kaiming_normal;
    if (s == "xavier_uniform") return InitScheme::xavier_uniform;
    throw ConfigError("unknown init scheme: " + std::string(s));
}

// One named trainable tensor with its gradient buffer.
template <typename T>
struct ParamGroup {
    std::string name;  // hierarchical path, e.g. "stage1.cell0.edge3.conv3x3.conv.weight"
    Tensor<T> value;
    Tensor<T> grad;
    ParamRole role = ParamRole::feature;
    ParamKind kind = ParamKind::conv_weight;
    std::int64_t fan_in = 0;
    std::int64_t fan_out = 0;
};

// ----------------------------- graph nodes -----------------------------

template <typename T>
struct Node {
    explicit Node(std::string node_path) : path(std::move(node_path)) {}
    virtual ~Node() = default;

    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    virtual void forward() = 0;
    // Accumulates into input grads and param grads; reads this->grad.
    virtual void backward() = 0;

    bool enabled() const { return enable == nullptr || *enable != 0; }

    std::string path;
    std::vector<Node<T>*> inputs;
    Tensor<T> out;
    Tensor<T> grad;              // d(loss)/d(out); valid during backward
    const std::uint8_t* enable = nullptr;  // supernet mask hook; nullptr = always on
    int topo_index = -1;
};

template <typename T>
void check_4d(const Node<T>& n, const Tensor<T>& t) {
    if (t.rank() != 4) throw ShapeError(n.path, "expected NCHW input, got " + shape_str(t.shape()));
}

// Placeholder fed from outside the graph.
template <typename T>
struct InputNode final : Node<T> {
    explicit InputNode(std::string path) : Node<T>(std::move(path)) {}

    void set(const Tensor<T>& value) { this->out = value; }

    void forward() override {
        if (this->out.empty()) throw StateError(this->path + ": input tensor not set");
    }
    void backward() override {}
};

// Cross-correlation, kernels 1x1 or 3x3, no bias (BatchNorm follows every conv).
template <typename T>
struct Conv2dNode final : Node<T> {
    Conv2dNode(std::string path, Node<T>* input, ParamGroup<T>* weight, int stride, int padding)
        : Node<T>(std::move(path)), w(weight), stride(stride), padding(padding) {
        this->inputs = {input};
    }

    void forward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        check_4d(*this, in);
        const auto& ws = w->value.shape();
        const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
        const std::int64_t K = ws[0], kh = ws[2], kw = ws[3];
        if (ws[1] != C)
            throw ShapeError(this->path, "weight expects " + std::to_string(ws[1]) +
                                             " input channels, input has " + std::to_string(C));
        const std::int64_t Ho = (H + 2 * padding - kh) / stride + 1;
        const std::int64_t Wo = (W + 2 * padding - kw) / stride + 1;
        if (Ho < 1 || Wo < 1) throw ShapeError(this->path, "output spatial size would be empty");
        this->out.resize({N, K, Ho, Wo});

        const T* inp = in.data();
        const T* wp = w->value.data();
        T* outp = this->out.data();
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t k = 0; k < K; ++k) {
                T* oplane = outp + ((n * K + k) * Ho) * Wo;
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* iplane = inp + ((n * C + c) * H) * W;
                    for (std::int64_t i = 0; i < kh; ++i) {
                        for (std::int64_t j = 0; j < kw; ++j) {
                            const T wv = wp[((k * C + c) * kh + i) * kw + j];
                            accumulate_tap(oplane, iplane, wv, H, W, Ho, Wo, i, j);
                        }
                    }
                }
            }
        }
    }

    void backward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        Tensor<T>& din = this->inputs[0]->grad;
        const auto& ws = w->value.shape();
        const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
        const std::int64_t K = ws[0], kh = ws[2], kw = ws[3];
        const std::int64_t Ho = this->out.dim(2), Wo = this->out.dim(3);

        const T* gout = this->grad.data();
        const T* inp = in.data();
        const T* wp = w->value.data();
        T* gw = w->grad.data();
        T* gin = din.data();

        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t k = 0; k < K; ++k) {
                const T* gplane = gout + ((n * K + k) * Ho) * Wo;
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* iplane = inp + ((n * C + c) * H) * W;
                    T* ginplane = gin + ((n * C + c) * H) * W;
                    for (std::int64_t i = 0; i < kh; ++i) {
                        for (std::int64_t j = 0; j < kw; ++j) {
                            const std::int64_t widx = ((k * C + c) * kh + i) * kw + j;
                            gw[widx] += weight_grad_tap(gplane, iplane, H, W, Ho, Wo, i, j);
                            scatter_data_grad(ginplane, gplane, wp[widx], H, W, Ho, Wo, i, j);
                        }
                    }
                }
            }
        }
    }

    ParamGroup<T>* w;
    int stride;
    int padding;

private:
    // Valid output-x range for kernel column j: 0 <= x*stride + j - padding < W.
    void x_bounds(std::int64_t W, std::int64_t Wo, std::int64_t j, std::int64_t& x0, std::int64_t& x1) const {
        const std::int64_t off = j - padding;
        x0 = off >= 0 ? 0 : (-off + stride - 1) / stride;
        const std::int64_t hi = W - 1 - off;  // max input x index
        x1 = hi < 0 ? x0 : std::min<std::int64_t>(Wo, hi / stride + 1);
        if (x1 < x0) x1 = x0;
    }

    void accumulate_tap(T* oplane, const T* iplane, T wv, std::int64_t H, std::int64_t W, std::int64_t Ho,
                        std::int64_t Wo, std::int64_t i, std::int64_t j) const {
        std::int64_t x0, x1;
        x_bounds(W, Wo, j, x0, x1);
        for (std::int64_t y = 0; y < Ho; ++y) {
            const std::int64_t iy = y * stride + i - padding;
            if (iy < 0 || iy >= H) continue;
            const T* irow = iplane + iy * W + (j - padding);
            T* orow = oplane + y * Wo;
            if (stride == 1) {
                for (std::int64_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            } else {
                for (std::int64_t x = x0; x < x1; ++x) orow[x] += wv * irow[x * stride];
            }
        }
    }

    T weight_grad_tap(const T* gplane, const T* iplane, std::int64_t H, std::int64_t W, std::int64_t Ho,
                      std::int64_t Wo, std::int64_t i, std::int64_t j) const {
        std::int64_t x0, x1;
        x_bounds(W, Wo, j, x0, x1);
        T acc{0};
        for (std::int64_t y = 0; y < Ho; ++y) {
            const std::int64_t iy = y * stride + i - padding;
            if (iy < 0 || iy >= H) continue;
            const T* irow = iplane + iy * W + (j - padding);
            const T* grow = gplane + y * Wo;
            if (stride == 1) {
                for (std::int64_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            } else {
                for (std::int64_t x = x0; x < x1; ++x) acc += grow[x] * irow[x * stride];
            }
        }
        return acc;
    }

    void scatter_data_grad(T* ginplane, const T* gplane, T wv, std::int64_t H, std::int64_t W, std::int64_t Ho,
                           std::int64_t Wo, std::int64_t i, std::int64_t j) const {
        std::int64_t x0, x1;
        x_bounds(W, Wo, j, x0, x1);
        for (std::int64_t y = 0; y < Ho; ++y) {
            const std::int64_t iy = y * stride + i - padding;
            if (iy < 0 || iy >= H) continue;
            T* girow = ginplane + iy * W + (j - padding);
            const T* grow = gplane + y * Wo;
            if (stride == 1) {
                for (std::int64_t x = x0; x < x1; ++x) girow[x] += wv * grow[x];
            } else {
                for (std::int64_t x = x0; x < x1; ++x) girow[x * stride] += wv * grow[x];
            }
        }
    }
};

// Batch statistics only (training mode); eps keeps zero-variance channels finite.
template <typename T>
struct BatchNormNode final : Node<T> {
    BatchNormNode(std::string path, Node<T>* input, ParamGroup<T>* gamma, ParamGroup<T>* beta, double eps = 1e-5)
        : Node<T>(std::move(path)), gamma(gamma), beta(beta), eps(eps) {
        this->inputs = {input};
    }

    void forward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        check_4d(*this, in);
        const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
        const std::int64_t plane = H * W, M = N * plane;
        this->out.resize(in.shape());
        mean_.assign(static_cast<std::size_t>(C), 0.0);
        inv_std_.assign(static_cast<std::size_t>(C), 0.0);

        const T* inp = in.data();
        T* outp = this->out.data();
        for (std::int64_t c = 0; c < C; ++c) {
            double s = 0.0, s2 = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* p = inp + ((n * C + c) * plane);
                for (std::int64_t t = 0; t < plane; ++t) {
                    const double v = static_cast<double>(p[t]);
                    s += v;
                    s2 += v * v;
                }
            }
            const double mu = s / static_cast<double>(M);
            const double var = std::max(0.0, s2 / static_cast<double>(M) - mu * mu);
            mean_[static_cast<std::size_t>(c)] = mu;
            inv_std_[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
            const T g = gamma->value[c], b = beta->value[c];
            const T a = static_cast<T>(inv_std_[static_cast<std::size_t>(c)]) * g;
            const T shift = b - a * static_cast<T>(mu);
            for (std::int64_t n = 0; n < N; ++n) {
                const T* p = inp + ((n * C + c) * plane);
                T* q = outp + ((n * C + c) * plane);
                for (std::int64_t t = 0; t < plane; ++t) q[t] = a * p[t] + shift;
            }
        }
    }

    void backward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        Tensor<T>& din = this->inputs[0]->grad;
        const std::int64_t N = in.dim(0), C = in.dim(1), plane = in.dim(2) * in.dim(3);
        const std::int64_t M = N * plane;

        const T* inp = in.data();
        const T* gout = this->grad.data();
        T* gin = din.data();
        for (std::int64_t c = 0; c < C; ++c) {
            const double mu = mean_[static_cast<std::size_t>(c)];
            const double is = inv_std_[static_cast<std::size_t>(c)];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* x = inp + ((n * C + c) * plane);
                const T* dy = gout + ((n * C + c) * plane);
                for (std::int64_t t = 0; t < plane; ++t) {
                    const double xhat = (static_cast<double>(x[t]) - mu) * is;
                    sum_dy += static_cast<double>(dy[t]);
                    sum_dy_xhat += static_cast<double>(dy[t]) * xhat;
                }
            }
            gamma->grad[c] += static_cast<T>(sum_dy_xhat);
            beta->grad[c] += static_cast<T>(sum_dy);

            const double g = static_cast<double>(gamma->value[c]);
            const double k = g * is / static_cast<double>(M);
            for (std::int64_t n = 0; n < N; ++n) {
                const T* x = inp + ((n * C + c) * plane);
                const T* dy = gout + ((n * C + c) * plane);
                T* dx = gin + ((n * C + c) * plane);
                for (std::int64_t t = 0; t < plane; ++t) {
                    const double xhat = (static_cast<double>(x[t]) - mu) * is;
                    dx[t] += static_cast<T>(k * (static_cast<double>(M) * static_cast<double>(dy[t]) - sum_dy -
                                                 xhat * sum_dy_xhat));
                }
            }
        }
    }

    ParamGroup<T>* gamma;
    ParamGroup<T>* beta;
    double eps;

private:
    std::vector<double> mean_, inv_std_;
};

// The on/off pattern (out > 0 per unit) is this node's activation tap; it is
// read back from the input values, so no mask is stored.
template <typename T>
struct ReluNode final : Node<T> {
    explicit ReluNode(std::string path, Node<T>* input) : Node<T>(std::move(path)) { this->inputs = {input}; }

    void forward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        this->out.resize_as(in.shape());
        const T* p = in.data();
        T* q = this->out.data();
        const std::int64_t n = in.numel();
        for (std::int64_t i = 0; i < n; ++i) q[i] = p[i] > T{0} ? p[i] : T{0};
    }

    void backward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        Tensor<T>& din = this->inputs[0]->grad;
        const T* p = in.data();
        const T* g = this->grad.data();
        T* gi = din.data();
        const std::int64_t n = in.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] > T{0}) gi[i] += g[i];
        }
    }

    // One bit per unit: 1 where the unit fired. Appends sample n's pattern.
    void append_pattern(std::int64_t n, std::vector<std::uint8_t>& bits) const {
        const std::int64_t per = this->out.numel() / this->out.dim(0);
        const T* p = this->inputs[0]->out.data() + n * per;
        for (std::int64_t i = 0; i < per; ++i) bits.push_back(p[i] > T{0} ? 1 : 0);
    }

    std::int64_t units_per_sample() const { return this->out.numel() / this->out.dim(0); }
};

// Average pooling; count_include_pad is always off (divisor counts valid cells only).
template <typename T>
struct AvgPoolNode final : Node<T> {
    AvgPoolNode(std::string path, Node<T>* input, int kernel, int stride, int padding)
        : Node<T>(std::move(path)), kernel(kernel), stride(stride), padding(padding) {
        this->inputs = {input};
    }

    void forward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        check_4d(*this, in);
        const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
        const std::int64_t Ho = (H + 2 * padding - kernel) / stride + 1;
        const std::int64_t Wo = (W + 2 * padding - kernel) / stride + 1;
        if (Ho < 1 || Wo < 1) throw ShapeError(this->path, "output spatial size would be empty");
        this->out.resize({N, C, Ho, Wo});

        const T* inp = in.data();
        T* outp = this->out.data();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* iplane = inp + nc * H * W;
            T* oplane = outp + nc * Ho * Wo;
            for (std::int64_t y = 0; y < Ho; ++y) {
                for (std::int64_t x = 0; x < Wo; ++x) {
                    T acc{0};
                    int cnt = 0;
                    for (int i = 0; i < kernel; ++i) {
                        const std::int64_t iy = y * stride + i - padding;
                        if (iy < 0 || iy >= H) continue;
                        for (int j = 0; j < kernel; ++j) {
                            const std::int64_t ix = x * stride + j - padding;
                            if (ix < 0 || ix >= W) continue;
                            acc += iplane[iy * W + ix];
                            ++cnt;
                        }
                    }
                    oplane[y * Wo + x] = acc / static_cast<T>(cnt);
                }
            }
        }
    }

    void backward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        Tensor<T>& din = this->inputs[0]->grad;
        const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
        const std::int64_t Ho = this->out.dim(2), Wo = this->out.dim(3);
        const T* gout = this->grad.data();
        T* gin = din.data();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* gplane = gout + nc * Ho * Wo;
            T* giplane = gin + nc * H * W;
            for (std::int64_t y = 0; y < Ho; ++y) {
                for (std::int64_t x = 0; x < Wo; ++x) {
                    int cnt = 0;
                    for (int i = 0; i < kernel; ++i) {
                        const std::int64_t iy = y * stride + i - padding;
                        if (iy < 0 || iy >= H) continue;
                        for (int j = 0; j < kernel; ++j) {
                            const std::int64_t ix = x * stride + j - padding;
                            if (ix >= 0 && ix < W) ++cnt;
                        }
                    }
                    const T share = gplane[y * Wo + x] / static_cast<T>(cnt);
                    for (int i = 0; i < kernel; ++i) {
                        const std::int64_t iy = y * stride + i - padding;
                        if (iy < 0 || iy >= H) continue;
                        for (int j = 0; j < kernel; ++j) {
                            const std::int64_t ix = x * stride + j - padding;
                            if (ix >= 0 && ix < W) giplane[iy * W + ix] += share;
                        }
                    }
                }
            }
        }
    }

    int kernel, stride, padding;
};

// [N,C,H,W] -> [N,C]
template <typename T>
struct GlobalAvgPoolNode final : Node<T> {
    explicit GlobalAvgPoolNode(std::string path, Node<T>* input) : Node<T>(std::move(path)) {
        this->inputs = {input};
    }

    void forward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        check_4d(*this, in);
        const std::int64_t N = in.dim(0), C = in.dim(1), plane = in.dim(2) * in.dim(3);
        this->out.resize({N, C});
        const T* p = in.data();
        T* q = this->out.data();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            T acc{0};
            const T* row = p + nc * plane;
            for (std::int64_t t = 0; t < plane; ++t) acc += row[t];
            q[nc] = acc / static_cast<T>(plane);
        }
    }

    void backward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        Tensor<T>& din = this->inputs[0]->grad;
        const std::int64_t N = in.dim(0), C = in.dim(1), plane = in.dim(2) * in.dim(3);
        const T* g = this->grad.data();
        T* gi = din.data();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T share = g[nc] / static_cast<T>(plane);
            T* row = gi + nc * plane;
            for (std::int64_t t = 0; t < plane; ++t) row[t] += share;
        }
    }
};

// Fully connected: out[n,o] = sum_f in[n,f] * w[o,f] (+ b[o]).
template <typename T>
struct LinearNode final : Node<T> {
    LinearNode(std::string path, Node<T>* input, ParamGroup<T>* weight, ParamGroup<T>* bias_or_null)
        : Node<T>(std::move(path)), w(weight), b(bias_or_null) {
        this->inputs = {input};
    }

    void forward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        if (in.rank() != 2) throw ShapeError(this->path, "expected [N,F] input, got " + shape_str(in.shape()));
        const std::int64_t N = in.dim(0), F = in.dim(1);
        const std::int64_t O = w->value.dim(0);
        if (w->value.dim(1) != F)
            throw ShapeError(this->path, "weight expects " + std::to_string(w->value.dim(1)) +
                                             " features, input has " + std::to_string(F));
        this->out.resize({N, O});
        const T* p = in.data();
        const T* wp = w->value.data();
        T* q = this->out.data();
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t o = 0; o < O; ++o) {
                T acc = b != nullptr ? b->value[o] : T{0};
                const T* wrow = wp + o * F;
                const T* irow = p + n * F;
                for (std::int64_t f = 0; f < F; ++f) acc += wrow[f] * irow[f];
                q[n * O + o] = acc;
            }
        }
    }

    void backward() override {
        const Tensor<T>& in = this->inputs[0]->out;
        Tensor<T>& din = this->inputs[0]->grad;
        const std::int64_t N = in.dim(0), F = in.dim(1), O = w->value.dim(0);
        const T* g = this->grad.data();
        const T* p = in.data();
        const T* wp = w->value.data();
        T* gw = w->grad.data();
        T* gi = din.data();
        for (std::int64_t n = 0; n < N; ++n) {
            const T* irow = p + n * F;
            T* girow = gi + n * F;
            for (std::int64_t o = 0; o < O; ++o) {
                const T go = g[n * O + o];
                if (b != nullptr) b->grad[o] += go;
                T* gwrow = gw + o * F;
                const T* wrow = wp + o * F;
                for (std::int64_t f = 0; f < F; ++f) {
                    gwrow[f] += go * irow[f];
                    girow[f] += go * wrow[f];
                }
            }
        }
    }

    ParamGroup<T>* w;
    ParamGroup<T>* b;  // may be null
};

// Sum of contributions, all shaped like `ref`. An empty (or fully masked)
// contribution list yields exact zeros, which is how zeroize edges and
// all-zeroize cells are realized. Per-contribution enable flags implement
// supernet operator masks; flags are re-read on every forward.
template <typename T>
struct SumNode final : Node<T> {
    SumNode(std::string path, Node<T>* shape_ref, std::vector<Node<T>*> contribs,
            std::vector<const std::uint8_t*> contrib_enables = {})
        : Node<T>(std::move(path)), ref(shape_ref), enables(std::move(contrib_enables)) {
        this->inputs = std::move(contribs);
        if (!enables.empty() && enables.size() != this->inputs.size())
            throw ConfigError(this->path + ": enable flags must match contribution count");
    }

    bool contrib_enabled(std::size_t i) const { return enables.empty() || enables[i] == nullptr || *enables[i] != 0; }

    void forward() override {
        this->out.resize(ref->out.shape());
        for (std::size_t i = 0; i < this->inputs.size(); ++i) {
            if (!contrib_enabled(i)) continue;
            const Tensor<T>& c = this->inputs[i]->out;
            if (!(c.shape() == this->out.shape()))
                throw ShapeError(this->path, "contribution " + std::to_string(i) + " has shape " +
                                                 shape_str(c.shape()) + ", expected " + shape_str(this->out.shape()));
            const T* p = c.data();
            T* q = this->out.data();
            const std::int64_t n = c.numel();
            for (std::int64_t t = 0; t < n; ++t) q[t] += p[t];
        }
    }

    void backward() override {
        const T* g = this->grad.data();
        const std::int64_t n = this->grad.numel();
        for (std::size_t i = 0; i < this->inputs.size(); ++i) {
            if (!contrib_enabled(i)) continue;
            T* gi = this->inputs[i]->grad.data();
            for (std::int64_t t = 0; t < n; ++t) gi[t] += g[t];
        }
    }

    Node<T>* ref;
    std::vector<const std::uint8_t*> enables;
};

// Mean softmax cross-entropy over the batch; labels are set per batch.
template <typename T>
struct SoftmaxCrossEntropyNode final : Node<T> {
    explicit SoftmaxCrossEntropyNode(std::string path, Node<T>* logits) : Node<T>(std::move(path)) {
        this->inputs = {logits};
    }

    void set_labels(std::vector<int> batch_labels) { labels = std::move(batch_labels); }

    void forward() override {
        const Tensor<T>& z = this->inputs[0]->out;
        if (z.rank() != 2) throw ShapeError(this->path, "expected [N,C] logits, got " + shape_str(z.shape()));
        const std::int64_t N = z.dim(0), C = z.dim(1);
        if (static_cast<std::int64_t>(labels.size()) != N)
            throw ShapeError(this->path, "have " + std::to_string(labels.size()) + " labels for batch of " +
                                             std::to_string(N));
        probs.resize({N, C});
        this->out.resize({1});
        const T* zp = z.data();
        T* pp = probs.data();
        double total = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* row = zp + n * C;
            double m = -1e300;
            for (std::int64_t c = 0; c < C; ++c) {
                if (!std::isfinite(static_cast<double>(row[c])))
                    throw NumericError(this->path, "non-finite logit for sample " + std::to_string(n));
                m = std::max(m, static_cast<double>(row[c]));
            }
            double sum = 0.0;
            for (std::int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(row[c]) - m);
            const double lse = m + std::log(sum);
            const int y = labels[static_cast<std::size_t>(n)];
            if (y < 0 || y >= C) throw ConfigError(this->path + ": label out of range");
            total += lse - static_cast<double>(row[y]);
            for (std::int64_t c = 0; c < C; ++c)
                pp[n * C + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
        }
        this->out[0] = static_cast<T>(total / static_cast<double>(N));
    }

    void backward() override {
        Tensor<T>& din = this->inputs[0]->grad;
        const std::int64_t N = probs.dim(0), C = probs.dim(1);
        const T g = this->grad[0];
        const T scale = g / static_cast<T>(N);
        const T* pp = probs.data();
        T* gi = din.data();
        for (std::int64_t n = 0; n < N; ++n) {
            const int y = labels[static_cast<std::size_t>(n)];
            for (std::int64_t c = 0; c < C; ++c) {
                T delta = pp[n * C + c];
                if (c == y) delta -= T{1};
                gi[n * C + c] += scale * delta;
            }
        }
    }

    std::vector<int> labels;
    Tensor<T> probs;
};

// ----------------------------- compute graph -----------------------------

// Owns nodes (in topological order) and parameter groups (in registration
// order). One graph instance is confined to a single thread while evaluating.
template <typename T>
class ComputeGraph {
public:
    template <typename N, typename... Args>
    N* make(Args&&... args) {
        auto node = std::make_unique<N>(std::forward<Args>(args)...);
        N* raw = node.get();
        raw->topo_index = static_cast<int>(nodes_.size());
        for (const Node<T>* in : raw->inputs) {
            if (in->topo_index < 0 || in->topo_index >= raw->topo_index)
                throw ConfigError(raw->path + ": inputs must precede the node in topological order");
        }
        if (auto* relu = dynamic_cast<ReluNode<T>*>(raw)) activation_taps_.push_back(relu);
        nodes_.push_back(std::move(node));
        return raw;
    }

    ParamGroup<T>* add_param(std::string name, Shape shape, ParamKind kind, ParamRole role, std::int64_t fan_in,
                             std::int64_t fan_out) {
        auto p = std::make_unique<ParamGroup<T>>();
        p->name = std::move(name);
        p->value.resize(shape);
        p->grad.resize(shape);
        p->kind = kind;
        p->role = role;
        p->fan_in = fan_in;
        p->fan_out = fan_out;
        params_.push_back(std::move(p));
        return params_.back().get();
    }

    // Runs nodes [0 .. last], skipping disabled ones.
    void forward_to(const Node<T>* last) {
        const int stop = last->topo_index;
        for (int i = 0; i <= stop; ++i) {
            if (nodes_[static_cast<std::size_t>(i)]->enabled()) nodes_[static_cast<std::size_t>(i)]->forward();
        }
        forward_extent_ = stop;
    }

    void forward_all() {
        if (nodes_.empty()) return;
        forward_to(nodes_.back().get());
    }

    // Reverse sweep from `from`; grads of every param and node up to `from`
    // are zeroed first. `seed` must match from->out's shape; when null, `from`
    // must be scalar and is seeded with 1.
    void backward(Node<T>* from, const Tensor<T>* seed = nullptr) {
        if (from->topo_index > forward_extent_)
            throw StateError("backward(" + from->path + ") called before forward covering the node");
        for (int i = 0; i <= from->topo_index; ++i) {
            Node<T>* n = nodes_[static_cast<std::size_t>(i)].get();
            n->grad.resize(n->out.shape());
        }
        for (auto& p : params_) p->grad.zero();
        if (seed != nullptr) {
            if (!(seed->shape() == from->out.shape()))
                throw ShapeError(from->path, "backward seed shape " + shape_str(seed->shape()) +
                                                 " does not match output " + shape_str(from->out.shape()));
            from->grad = *seed;
        } else {
            if (from->out.numel() != 1)
                throw ShapeError(from->path, "scalar backward seed requires a scalar output");
            from->grad.fill(T{1});
        }
        for (int i = from->topo_index; i >= 0; --i) {
            Node<T>* n = nodes_[static_cast<std::size_t>(i)].get();
            if (n->enabled()) n->backward();
        }
    }

    Node<T>* find(std::string_view path) {
        for (auto& n : nodes_) {
            if (n->path == path) return n.get();
        }
        return nullptr;
    }

    ParamGroup<T>* find_param(std::string_view name) {
        for (auto& p : params_) {
            if (p->name == name) return p.get();
        }
        return nullptr;
    }

    const std::vector<std::unique_ptr<Node<T>>>& nodes() const { return nodes_; }
    const std::vector<std::unique_ptr<ParamGroup<T>>>& params() const { return params_; }
    const std::vector<ReluNode<T>*>& activation_taps() const { return activation_taps_; }
    int forward_extent() const { return forward_extent_; }

    std::int64_t param_scalar_count() const {
        std::int64_t total = 0;
        for (const auto& p : params_) total += p->value.numel();
        return total;
    }

private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    std::vector<std::unique_ptr<ParamGroup<T>>> params_;
    std::vector<ReluNode<T>*> activation_taps_;
    int forward_extent_ = -1;
};

// Every parameter draws from its own stream keyed by (seed, param name), so
// initial values do not depend on registration order or on which other
// operators exist in the graph. This is what makes a one-op-per-edge supernet
// bit-identical to the plain network built from the matching genotype.
template <typename T>
void init_params(ComputeGraph<T>& graph, std::uint64_t seed, InitScheme scheme = InitScheme::kaiming_uniform) {
    for (const auto& p : graph.params()) {
        Rng rng(derive_seed(seed, p->name));
        switch (p->kind) {
            case ParamKind::conv_weight:
            case ParamKind::linear_weight: {
                const double fan_in = static_cast<double>(p->fan_in);
                const double fan_out = static_cast<double>(p->fan_out);
                if (scheme == InitScheme::kaiming_uniform) {
                    const double bound = std::sqrt(6.0 / fan_in);
                    for (std::int64_t i = 0; i < p->value.numel(); ++i)
                        p->value[i] = static_cast<T>(rng.uniform(-bound, bound));
                } else if (scheme == InitScheme::kaiming_normal) {
                    const double std_dev = std::sqrt(2.0 / fan_in);
                    for (std::int64_t i = 0; i < p->value.numel(); ++i)
                        p->value[i] = static_cast<T>(rng.normal() * std_dev);
                } else {
                    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
                    for (std::int64_t i = 0; i < p->value.numel(); ++i)
                        p->value[i] = static_cast<T>(rng.uniform(-bound, bound));
                }
                break;
            }
            case ParamKind::bn_gamma:
                p->value.fill(T{1});
                break;
            case ParamKind::bn_beta:
            case ParamKind::bias:
                p->value.fill(T{0});
                break;
        }
        p->grad.zero();
    }
}

}  // namespace stnas
