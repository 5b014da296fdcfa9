#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stnas/errors.hpp"

namespace stnas {

// Cell operator vocabulary. Ids are part of the genotype text format.
enum class EdgeOp : int {
    zeroize = 0,
    skip_connect = 1,
    conv1x1 = 2,
    conv3x3 = 3,
    avgpool3x3 = 4,
};

inline constexpr int kNumEdgeOps = 5;
inline constexpr int kNumEdges = 6;
inline constexpr int kNumCellNodes = 4;

inline const char* edge_op_name(EdgeOp op) {
    switch (op) {
        case EdgeOp::zeroize: return "zeroize";
        case EdgeOp::skip_connect: return "skip";
        case EdgeOp::conv1x1: return "conv1x1";
        case EdgeOp::conv3x3: return "conv3x3";
        case EdgeOp::avgpool3x3: return "avgpool3x3";
    }
    return "?";
}

// Edge e connects node pair kEdgePairs[e] = (src, dst), ordered by (dst, src).
inline constexpr std::array<std::pair<int, int>, kNumEdges> kEdgePairs = {{
    {0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3},
}};

// One architecture in the cell space: an operator per DAG edge.
// Canonical text form "a|b|c|d|e|f" with op ids 0..4.
struct CellGenotype {
    std::array<EdgeOp, kNumEdges> edge_ops{};

    static CellGenotype uniform(EdgeOp op) {
        CellGenotype g;
        g.edge_ops.fill(op);
        return g;
    }

    static CellGenotype parse(std::string_view text) {
        CellGenotype g;
        std::size_t field = 0;
        std::size_t pos = 0;
        bool more = true;
        while (more && field < kNumEdges) {
            const std::size_t sep = text.find('|', pos);
            more = sep != std::string_view::npos;
            const std::string_view tok = more ? text.substr(pos, sep - pos) : text.substr(pos);
            if (tok.size() != 1 || tok[0] < '0' || tok[0] > '4')
                throw ConfigError("genotype \"" + std::string(text) + "\": invalid op id \"" + std::string(tok) +
                                  "\" at field " + std::to_string(field + 1));
            g.edge_ops[field] = static_cast<EdgeOp>(tok[0] - '0');
            ++field;
            pos = sep + 1;
        }
        if (field != kNumEdges || more)
            throw ConfigError("genotype \"" + std::string(text) + "\": expected exactly 6 fields");
        return g;
    }

    std::string str() const {
        std::string s;
        for (int e = 0; e < kNumEdges; ++e) {
            if (e) s += '|';
            s += static_cast<char>('0' + static_cast<int>(edge_ops[static_cast<std::size_t>(e)]));
        }
        return s;
    }

    // Index in the lexicographic enumeration of the 5^6 space.
    std::int64_t index() const {
        std::int64_t idx = 0;
        for (int e = 0; e < kNumEdges; ++e) idx = idx * kNumEdgeOps + static_cast<int>(edge_ops[static_cast<std::size_t>(e)]);
        return idx;
    }

    static CellGenotype from_index(std::int64_t idx) {
        if (idx < 0 || idx >= space_size()) throw ConfigError("genotype index out of range");
        CellGenotype g;
        for (int e = kNumEdges - 1; e >= 0; --e) {
            g.edge_ops[static_cast<std::size_t>(e)] = static_cast<EdgeOp>(idx % kNumEdgeOps);
            idx /= kNumEdgeOps;
        }
        return g;
    }

    static constexpr std::int64_t space_size() { return 15625; }  // 5^6

    bool operator==(const CellGenotype& other) const = default;
};

// Macro skeleton shared by every network: stem, `num_stages` stages of
// `cells_per_stage` cells separated by stride-2 residual reduction blocks,
// then global average pooling and a fully connected classifier. Channels
// double at each reduction.
struct MacroConfig {
    int stem_channels = 16;
    int cells_per_stage = 1;
    int num_stages = 3;  // the standard macro; tests may shrink it
    int num_classes = 10;
    int input_resolution = 32;
    int input_channels = 3;

    void validate() const {
        if (stem_channels < 4 || stem_channels % 2 != 0)
            throw ConfigError("stem_channels must be even and >= 4");
        if (cells_per_stage < 1) throw ConfigError("cells_per_stage must be >= 1");
        if (num_stages < 1 || num_stages > 3) throw ConfigError("num_stages must be in 1..3");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
        const int div = 1 << (num_stages - 1);  // = 4 for the standard 3-stage macro
        if (input_resolution < div || input_resolution % div != 0)
            throw ConfigError("input_resolution must be divisible by " + std::to_string(div));
    }

    int stage_channels(int stage /*1-based*/) const { return stem_channels << (stage - 1); }
    int final_channels() const { return stage_channels(num_stages); }
};

// Per-edge operator masks over the full operator set. Starts fully active;
// search prunes it down to one operator per edge.
struct SupernetState {
    std::array<std::array<std::uint8_t, kNumEdgeOps>, kNumEdges> active{};

    static SupernetState all_active() {
        SupernetState s;
        for (auto& row : s.active) row.fill(1);
        return s;
    }

    int active_count(int edge) const {
        int n = 0;
        for (std::uint8_t v : active[static_cast<std::size_t>(edge)]) n += v != 0;
        return n;
    }

    int total_active() const {
        int n = 0;
        for (int e = 0; e < kNumEdges; ++e) n += active_count(e);
        return n;
    }

    bool is_active(int edge, EdgeOp op) const {
        return active[static_cast<std::size_t>(edge)][static_cast<std::size_t>(static_cast<int>(op))] != 0;
    }

    bool fully_pruned() const {
        for (int e = 0; e < kNumEdges; ++e) {
            if (active_count(e) != 1) return false;
        }
        return true;
    }

    // Valid only when exactly one operator is active per edge.
    CellGenotype to_genotype() const {
        CellGenotype g;
        for (int e = 0; e < kNumEdges; ++e) {
            if (active_count(e) != 1)
                throw ConfigError("supernet edge " + std::to_string(e) + " has " +
                                  std::to_string(active_count(e)) + " active operators, expected 1");
            for (int op = 0; op < kNumEdgeOps; ++op) {
                if (active[static_cast<std::size_t>(e)][static_cast<std::size_t>(op)]) {
                    g.edge_ops[static_cast<std::size_t>(e)] = static_cast<EdgeOp>(op);
                }
            }
        }
        return g;
    }
};

// Clears (edge, op) from the mask. Removing the last operator on an edge or
// an already-inactive operator violates the pruning contract.
inline void prune_operator(SupernetState& state, int edge, EdgeOp op) {
    if (edge < 0 || edge >= kNumEdges) throw ConfigError("prune_operator: edge out of range");
    auto& flag = state.active[static_cast<std::size_t>(edge)][static_cast<std::size_t>(static_cast<int>(op))];
    if (flag == 0)
        throw ConfigError("prune_operator: edge " + std::to_string(edge) + " op " + edge_op_name(op) +
                          " is not active");
    if (state.active_count(edge) < 2)
        throw ConfigError("prune_operator: cannot remove the last operator on edge " + std::to_string(edge));
    flag = 0;
}

}  // namespace stnas
