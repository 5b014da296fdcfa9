#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stnas/genotype.hpp"
#include "stnas/graph.hpp"

namespace stnas {

// A built, parameterized network: the graph plus handles into its interesting
// places. Confined to one thread while evaluating; movable between threads.
template <typename T>
struct NetworkInstance {
    MacroConfig macro;
    ComputeGraph<T> graph;
    InputNode<T>* input = nullptr;
    Node<T>* features = nullptr;  // global-avg-pool output, [N, C_final]
    Node<T>* logits = nullptr;    // classifier output, [N, num_classes]
    SoftmaxCrossEntropyNode<T>* loss = nullptr;
    ParamGroup<T>* prediction_weight = nullptr;
    ParamGroup<T>* prediction_bias = nullptr;
    std::unique_ptr<SupernetState> supernet;  // null for plain networks
    std::uint64_t init_seed = 0;
    InitScheme init_scheme = InitScheme::kaiming_uniform;

    bool is_supernet() const { return supernet != nullptr; }

    // Convenience: forward a batch through the loss head and return the loss.
    double compute_loss(const Tensor<T>& images, const std::vector<int>& labels) {
        input->set(images);
        loss->set_labels(labels);
        graph.forward_to(loss);
        return static_cast<double>(loss->out[0]);
    }

    // Forward up to the logits only (no labels required).
    const Tensor<T>& forward_logits(const Tensor<T>& images) {
        input->set(images);
        graph.forward_to(logits);
        return logits->out;
    }
};

namespace detail {

template <typename T>
struct NetBuilder {
    ComputeGraph<T>& g;
    const MacroConfig& macro;

    ParamGroup<T>* conv_weight(const std::string& base, std::int64_t out_ch, std::int64_t in_ch, std::int64_t k) {
        return g.add_param(base + ".weight", {out_ch, in_ch, k, k}, ParamKind::conv_weight, ParamRole::feature,
                           in_ch * k * k, out_ch * k * k);
    }

    // ReLU -> Conv -> BN chain used for every parameterized cell operator.
    Node<T>* relu_conv_bn(const std::string& base, Node<T>* x, std::int64_t out_ch, std::int64_t in_ch,
                          int k, int stride, const std::uint8_t* enable) {
        auto* relu = g.template make<ReluNode<T>>(base + ".relu", x);
        auto* w = conv_weight(base + ".conv", out_ch, in_ch, k);
        auto* conv = g.template make<Conv2dNode<T>>(base + ".conv", relu, w, stride, k / 2);
        auto* gamma = g.add_param(base + ".bn.gamma", {out_ch}, ParamKind::bn_gamma, ParamRole::feature, 0, 0);
        auto* beta = g.add_param(base + ".bn.beta", {out_ch}, ParamKind::bn_beta, ParamRole::feature, 0, 0);
        auto* bn = g.template make<BatchNormNode<T>>(base + ".bn", conv, gamma, beta);
        relu->enable = enable;
        conv->enable = enable;
        bn->enable = enable;
        return bn;
    }

    // Appends edge (src -> dst)'s contribution(s). For a plain network exactly
    // the genotype's operator is built; for a supernet all candidate operators
    // are built and gated by the state's mask row.
    void add_edge(const std::string& cell_prefix, int edge, Node<T>* src, std::int64_t channels,
                  const CellGenotype* genotype, SupernetState* state, std::vector<Node<T>*>& contribs,
                  std::vector<const std::uint8_t*>& enables) {
        const std::string base = cell_prefix + ".edge" + std::to_string(edge) + ".";
        const auto build_op = [&](EdgeOp op, const std::uint8_t* enable) -> Node<T>* {
            switch (op) {
                case EdgeOp::zeroize:
                    return nullptr;  // contributes exact zeros: nothing to sum
                case EdgeOp::skip_connect:
                    return src;
                case EdgeOp::conv1x1:
                    return relu_conv_bn(base + "conv1x1", src, channels, channels, 1, 1, enable);
                case EdgeOp::conv3x3:
                    return relu_conv_bn(base + "conv3x3", src, channels, channels, 3, 1, enable);
                case EdgeOp::avgpool3x3: {
                    auto* pool = g.template make<AvgPoolNode<T>>(base + "avgpool3x3", src, 3, 1, 1);
                    pool->enable = enable;
                    return pool;
                }
            }
            return nullptr;
        };

        if (genotype != nullptr) {
            if (Node<T>* n = build_op(genotype->edge_ops[static_cast<std::size_t>(edge)], nullptr)) {
                contribs.push_back(n);
                enables.push_back(nullptr);
            }
            return;
        }
        for (int op = 1; op < kNumEdgeOps; ++op) {  // op 0 (zeroize) never contributes
            const std::uint8_t* flag = &state->active[static_cast<std::size_t>(edge)][static_cast<std::size_t>(op)];
            if (Node<T>* n = build_op(static_cast<EdgeOp>(op), flag)) {
                contribs.push_back(n);
                enables.push_back(flag);
            }
        }
    }

    // Densely connected 4-node cell; node j sums its incoming edge outputs.
    Node<T>* cell(const std::string& prefix, Node<T>* cell_input, std::int64_t channels,
                  const CellGenotype* genotype, SupernetState* state) {
        std::vector<Node<T>*> node_values = {cell_input};
        for (int j = 1; j < kNumCellNodes; ++j) {
            std::vector<Node<T>*> contribs;
            std::vector<const std::uint8_t*> enables;
            for (int e = 0; e < kNumEdges; ++e) {
                if (kEdgePairs[static_cast<std::size_t>(e)].second != j) continue;
                const int i = kEdgePairs[static_cast<std::size_t>(e)].first;
                add_edge(prefix, e, node_values[static_cast<std::size_t>(i)], channels, genotype, state, contribs,
                         enables);
            }
            node_values.push_back(g.template make<SumNode<T>>(prefix + ".node" + std::to_string(j), cell_input,
                                                              std::move(contribs), std::move(enables)));
        }
        return node_values.back();
    }

    // Residual basic block, stride 2, channels double.
    Node<T>* reduction(const std::string& prefix, Node<T>* x, std::int64_t in_ch) {
        const std::int64_t out_ch = in_ch * 2;
        Node<T>* branch = relu_conv_bn(prefix + ".a", x, out_ch, in_ch, 3, 2, nullptr);
        branch = relu_conv_bn(prefix + ".b", branch, out_ch, out_ch, 3, 1, nullptr);
        auto* pool = g.template make<AvgPoolNode<T>>(prefix + ".shortcut.pool", x, 2, 2, 0);
        auto* w = conv_weight(prefix + ".shortcut.conv", out_ch, in_ch, 1);
        auto* proj = g.template make<Conv2dNode<T>>(prefix + ".shortcut.conv", pool, w, 1, 0);
        return g.template make<SumNode<T>>(prefix + ".out", branch,
                                           std::vector<Node<T>*>{branch, proj});
    }
};

template <typename T>
NetworkInstance<T> build_impl(const CellGenotype* genotype, const MacroConfig& macro, std::uint64_t seed,
                              InitScheme scheme, std::unique_ptr<SupernetState> state) {
    macro.validate();
    NetworkInstance<T> net;
    net.macro = macro;
    net.supernet = std::move(state);
    net.init_seed = seed;
    net.init_scheme = scheme;

    NetBuilder<T> b{net.graph, macro};
    net.input = net.graph.template make<InputNode<T>>("input");

    const std::int64_t C = macro.stem_channels;
    auto* stem_w = b.conv_weight("stem.conv", C, macro.input_channels, 3);
    auto* stem_conv = net.graph.template make<Conv2dNode<T>>("stem.conv", net.input, stem_w, 1, 1);
    auto* stem_gamma = net.graph.add_param("stem.bn.gamma", {C}, ParamKind::bn_gamma, ParamRole::feature, 0, 0);
    auto* stem_beta = net.graph.add_param("stem.bn.beta", {C}, ParamKind::bn_beta, ParamRole::feature, 0, 0);
    Node<T>* x = net.graph.template make<BatchNormNode<T>>("stem.bn", stem_conv, stem_gamma, stem_beta);

    for (int stage = 1; stage <= macro.num_stages; ++stage) {
        const std::int64_t ch = macro.stage_channels(stage);
        for (int c = 0; c < macro.cells_per_stage; ++c) {
            const std::string prefix = "stage" + std::to_string(stage) + ".cell" + std::to_string(c);
            x = b.cell(prefix, x, ch, genotype, net.supernet.get());
        }
        if (stage < macro.num_stages) x = b.reduction("reduction" + std::to_string(stage), x, ch);
    }

    net.features = net.graph.template make<GlobalAvgPoolNode<T>>("gap", x);
    net.prediction_weight =
        net.graph.add_param("classifier.weight", {macro.num_classes, macro.final_channels()},
                            ParamKind::linear_weight, ParamRole::prediction_weight, macro.final_channels(),
                            macro.num_classes);
    net.prediction_bias = net.graph.add_param("classifier.bias", {macro.num_classes}, ParamKind::bias,
                                              ParamRole::prediction_bias, 0, 0);
    net.logits = net.graph.template make<LinearNode<T>>("classifier", net.features, net.prediction_weight,
                                                        net.prediction_bias);
    net.loss = net.graph.template make<SoftmaxCrossEntropyNode<T>>("loss", net.logits);

    init_params(net.graph, seed, scheme);
    return net;
}

}  // namespace detail

template <typename T>
NetworkInstance<T> build_network(const CellGenotype& genotype, const MacroConfig& macro, std::uint64_t seed,
                                 InitScheme scheme = InitScheme::kaiming_uniform) {
    return detail::build_impl<T>(&genotype, macro, seed, scheme, nullptr);
}

// All candidate operators live on every edge, gated by the returned state's
// masks. Parameter init streams are keyed by name, so a fully pruned supernet
// computes bit-identically to build_network of the corresponding genotype.
template <typename T>
NetworkInstance<T> build_supernet(const MacroConfig& macro, std::uint64_t seed,
                                  InitScheme scheme = InitScheme::kaiming_uniform,
                                  const SupernetState& initial = SupernetState::all_active()) {
    for (int e = 0; e < kNumEdges; ++e) {
        if (initial.active_count(e) < 1)
            throw ConfigError("supernet edge " + std::to_string(e) + " has no active op");
    }
    return detail::build_impl<T>(nullptr, macro, seed, scheme, std::make_unique<SupernetState>(initial));
}

// ----------------------------- parameter counting -----------------------------

inline std::int64_t edge_op_param_count(EdgeOp op, std::int64_t channels) {
    switch (op) {
        case EdgeOp::conv1x1: return channels * channels + 2 * channels;      // conv + BN affine
        case EdgeOp::conv3x3: return 9 * channels * channels + 2 * channels;  // conv + BN affine
        default: return 0;
    }
}

inline std::int64_t macro_param_count(const MacroConfig& macro,
                                      const std::function<std::int64_t(int edge, std::int64_t ch)>& edge_params) {
    macro.validate();
    const std::int64_t C = macro.stem_channels;
    std::int64_t total = static_cast<std::int64_t>(macro.input_channels) * C * 9 + 2 * C;  // stem conv + BN
    for (int stage = 1; stage <= macro.num_stages; ++stage) {
        const std::int64_t ch = macro.stage_channels(stage);
        std::int64_t cell = 0;
        for (int e = 0; e < kNumEdges; ++e) cell += edge_params(e, ch);
        total += cell * macro.cells_per_stage;
        if (stage < macro.num_stages) {
            const std::int64_t oc = ch * 2;
            total += 9 * ch * oc + 2 * oc;  // conv_a + BN
            total += 9 * oc * oc + 2 * oc;  // conv_b + BN
            total += ch * oc;               // 1x1 shortcut projection
        }
    }
    total += static_cast<std::int64_t>(macro.final_channels()) * macro.num_classes + macro.num_classes;  // FC
    return total;
}

// Exact count of trainable scalars for one genotype (analytic; the graph-walk
// over a built network's ParamGroups is the test oracle for this).
inline std::int64_t count_params(const CellGenotype& genotype, const MacroConfig& macro) {
    return macro_param_count(macro, [&](int e, std::int64_t ch) {
        return edge_op_param_count(genotype.edge_ops[static_cast<std::size_t>(e)], ch);
    });
}

// #Param of the still-active part of a supernet.
inline std::int64_t count_supernet_params(const SupernetState& state, const MacroConfig& macro) {
    return macro_param_count(macro, [&](int e, std::int64_t ch) {
        std::int64_t sum = 0;
        for (int op = 0; op < kNumEdgeOps; ++op) {
            if (state.active[static_cast<std::size_t>(e)][static_cast<std::size_t>(op)])
                sum += edge_op_param_count(static_cast<EdgeOp>(op), ch);
        }
        return sum;
    });
}

// ----------------------------- space enumeration -----------------------------

// Visits all 5^6 genotypes in lexicographic order; with a filter, only those
// whose #Param equals it (how same-size network groups are formed).
inline void enumerate_space(const MacroConfig& macro, const std::function<void(const CellGenotype&)>& visit,
                            std::optional<std::int64_t> param_filter = std::nullopt) {
    for (std::int64_t idx = 0; idx < CellGenotype::space_size(); ++idx) {
        const CellGenotype g = CellGenotype::from_index(idx);
        if (param_filter.has_value() && count_params(g, macro) != *param_filter) continue;
        visit(g);
    }
}

inline std::vector<CellGenotype> enumerate_space_vec(const MacroConfig& macro,
                                                     std::optional<std::int64_t> param_filter = std::nullopt) {
    std::vector<CellGenotype> out;
    enumerate_space(macro, [&](const CellGenotype& g) { out.push_back(g); }, param_filter);
    return out;
}

}  // namespace stnas
