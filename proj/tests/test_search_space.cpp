#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <map>
#include <set>

#include "oracles.hpp"
#include "stnas/network.hpp"

using namespace stnas;

namespace {

MacroConfig tiny_macro() {
    MacroConfig m;
    m.stem_channels = 4;
    m.cells_per_stage = 1;
    m.num_stages = 2;
    m.num_classes = 3;
    m.input_resolution = 8;
    return m;
}

CellGenotype random_genotype(Rng& rng) {
    CellGenotype g;
    for (int e = 0; e < kNumEdges; ++e)
        g.edge_ops[static_cast<std::size_t>(e)] = static_cast<EdgeOp>(rng.below(kNumEdgeOps));
    return g;
}

}  // namespace

TEST_CASE("genotype text form round-trips and validates") {
    CHECK(CellGenotype::parse("0|1|2|3|4|0").str() == "0|1|2|3|4|0");
    CHECK_THROWS_AS(CellGenotype::parse("0|1|2"), ConfigError);
    CHECK_THROWS_AS(CellGenotype::parse("0|1|2|3|4|0|1"), ConfigError);
    try {
        CellGenotype::parse("7|1|2|3|4|0");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("\"7\"") != std::string::npos);
        CHECK(std::string(e.what()).find("field 1") != std::string::npos);
    }

    Rng rng(123);
    for (int t = 0; t < 200; ++t) {
        const CellGenotype g = random_genotype(rng);
        CHECK(CellGenotype::parse(g.str()) == g);
        CHECK(CellGenotype::from_index(g.index()) == g);
    }
}

TEST_CASE("enumeration covers exactly the 5^6 space in lexicographic order") {
    const MacroConfig macro = tiny_macro();
    std::int64_t count = 0;
    std::string prev;
    std::set<std::string> seen;
    enumerate_space(macro, [&](const CellGenotype& g) {
        const std::string s = g.str();
        if (count > 0) CHECK(prev < s);
        prev = s;
        seen.insert(s);
        ++count;
    });
    CHECK(count == 15625);
    CHECK(static_cast<std::int64_t>(seen.size()) == count);
}

TEST_CASE("param filter groups all-zeroize with all-skip; group sizes partition the space") {
    const MacroConfig macro = tiny_macro();
    const auto z = CellGenotype::uniform(EdgeOp::zeroize);
    const auto s = CellGenotype::uniform(EdgeOp::skip_connect);
    CHECK(count_params(z, macro) == count_params(s, macro));

    const auto filtered = enumerate_space_vec(macro, count_params(z, macro));
    bool has_z = false, has_s = false;
    for (const auto& g : filtered) {
        has_z = has_z || g == z;
        has_s = has_s || g == s;
    }
    CHECK(has_z);
    CHECK(has_s);

    std::map<std::int64_t, std::int64_t> sizes;
    enumerate_space(macro, [&](const CellGenotype& g) { sizes[count_params(g, macro)]++; });
    std::int64_t total = 0;
    for (const auto& [param, n] : sizes) total += n;
    CHECK(total == 15625);
}

TEST_CASE("count_params: analytic count matches the graph walk on 100 random genotypes") {
    const MacroConfig macro = tiny_macro();
    Rng rng(77);
    for (int t = 0; t < 100; ++t) {
        const CellGenotype g = random_genotype(rng);
        auto net = build_network<float>(g, macro, 1);
        CHECK(count_params(g, macro) == net.graph.param_scalar_count());
    }
}

TEST_CASE("count_params: hand-computed total for the all-conv3x3 genotype") {
    MacroConfig macro;
    macro.stem_channels = 16;
    macro.cells_per_stage = 1;
    macro.num_stages = 3;
    macro.num_classes = 10;
    macro.input_resolution = 32;
    const auto g = CellGenotype::uniform(EdgeOp::conv3x3);

    // stem: 3*16*9 + 2*16 = 464
    // stage1 cell (C=16): 6 * (9*256 + 32) = 14016
    // reduction1 (16->32): 9*16*32+64 + 9*32*32+64 + 16*32 = 4672 + 9280 + 512 = 14464
    // stage2 cell (C=32): 6 * (9*1024 + 64) = 55680
    // reduction2 (32->64): 9*32*64+128 + 9*64*64+128 + 32*64 = 18560 + 36992 + 2048 = 57600
    // stage3 cell (C=64): 6 * (9*4096 + 128) = 221952
    // classifier: 64*10 + 10 = 650
    const std::int64_t expected = 464 + 14016 + 14464 + 55680 + 57600 + 221952 + 650;
    CHECK(count_params(g, macro) == expected);

    auto net = build_network<float>(g, macro, 1);
    CHECK(net.graph.param_scalar_count() == expected);
}

TEST_CASE("count_params: swapping one conv3x3 edge to conv1x1 removes exactly 8*C^2") {
    const MacroConfig macro = tiny_macro();
    Rng rng(5);
    for (int e = 0; e < kNumEdges; ++e) {
        CellGenotype a = random_genotype(rng);
        a.edge_ops[static_cast<std::size_t>(e)] = EdgeOp::conv3x3;
        CellGenotype b = a;
        b.edge_ops[static_cast<std::size_t>(e)] = EdgeOp::conv1x1;
        // each edge appears once per stage; channels are 4 then 8
        const std::int64_t c1 = macro.stem_channels, c2 = 2 * macro.stem_channels;
        CHECK(count_params(a, macro) - count_params(b, macro) == 8 * (c1 * c1 + c2 * c2));
    }
}

TEST_CASE("count_params: zeroize/skip/avgpool are free, conv1x1 < conv3x3") {
    const MacroConfig macro = tiny_macro();
    CellGenotype g = CellGenotype::uniform(EdgeOp::zeroize);
    const std::int64_t base = count_params(g, macro);
    g.edge_ops[0] = EdgeOp::skip_connect;
    CHECK(count_params(g, macro) == base);
    g.edge_ops[0] = EdgeOp::avgpool3x3;
    CHECK(count_params(g, macro) == base);
    g.edge_ops[0] = EdgeOp::conv1x1;
    const std::int64_t with_1x1 = count_params(g, macro);
    CHECK(with_1x1 > base);
    g.edge_ops[0] = EdgeOp::conv3x3;
    CHECK(count_params(g, macro) > with_1x1);
}

TEST_CASE("build_network determinism: same genotype+macro+seed means bit-identical weights") {
    const MacroConfig macro = tiny_macro();
    const CellGenotype g = CellGenotype::parse("3|0|1|2|4|3");
    auto a = build_network<float>(g, macro, 4242);
    auto b = build_network<float>(g, macro, 4242);
    REQUIRE(a.graph.params().size() == b.graph.params().size());
    for (std::size_t i = 0; i < a.graph.params().size(); ++i) {
        const auto& pa = a.graph.params()[i]->value;
        const auto& pb = b.graph.params()[i]->value;
        REQUIRE(pa.numel() == pb.numel());
        CHECK(std::memcmp(pa.data(), pb.data(), sizeof(float) * static_cast<std::size_t>(pa.numel())) == 0);
    }
}

TEST_CASE("all-zeroize network: pre-classifier features are exactly zero") {
    const MacroConfig macro = tiny_macro();
    auto net = build_network<float>(CellGenotype::uniform(EdgeOp::zeroize), macro, 3);
    Tensor<float> images({4, 3, 8, 8});
    Rng rng(8);
    oracles::fill_uniform(images, rng);
    net.forward_logits(images);
    for (std::int64_t i = 0; i < net.features->out.numel(); ++i) CHECK(net.features->out[i] == 0.0f);
}

TEST_CASE("all-skip cell is the 4x identity on its input") {
    // node1 = x, node2 = x + node1 = 2x, node3 = x + node1 + node2 = 4x
    MacroConfig macro = tiny_macro();
    macro.num_stages = 1;  // single cell, no reductions
    auto net = build_network<float>(CellGenotype::uniform(EdgeOp::skip_connect), macro, 3);
    CHECK(count_params(CellGenotype::uniform(EdgeOp::skip_connect), macro) ==
          count_params(CellGenotype::uniform(EdgeOp::zeroize), macro));

    Tensor<float> images({2, 3, 8, 8});
    Rng rng(8);
    oracles::fill_uniform(images, rng);
    net.forward_logits(images);
    const Node<float>* stem = net.graph.find("stem.bn");
    const Node<float>* cell_out = net.graph.find("stage1.cell0.node3");
    REQUIRE(stem != nullptr);
    REQUIRE(cell_out != nullptr);
    for (std::int64_t i = 0; i < stem->out.numel(); ++i) CHECK(cell_out->out[i] == 4.0f * stem->out[i]);
}

TEST_CASE("exactly one prediction_weight param group per network") {
    const MacroConfig macro = tiny_macro();
    auto net = build_network<float>(CellGenotype::parse("1|2|3|4|0|1"), macro, 5);
    int pred = 0;
    for (const auto& p : net.graph.params()) pred += p->role == ParamRole::prediction_weight ? 1 : 0;
    CHECK(pred == 1);
}

TEST_CASE("supernet with one active op per edge is bit-identical to the plain network") {
    const MacroConfig macro = tiny_macro();
    Rng rng(31);
    for (int t = 0; t < 5; ++t) {
        const CellGenotype g = random_genotype(rng);
        SupernetState state;
        for (int e = 0; e < kNumEdges; ++e)
            state.active[static_cast<std::size_t>(e)]
                        [static_cast<std::size_t>(static_cast<int>(g.edge_ops[static_cast<std::size_t>(e)]))] = 1;

        auto plain = build_network<float>(g, macro, 555);
        auto super = build_supernet<float>(macro, 555, InitScheme::kaiming_uniform, state);

        Tensor<float> images({3, 3, 8, 8});
        oracles::fill_uniform(images, rng);
        const auto& a = plain.forward_logits(images);
        const auto& b = super.forward_logits(images);
        REQUIRE(a.numel() == b.numel());
        CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.numel())) == 0);
    }
}

TEST_CASE("supernet masks: pruning zeroize never changes the forward output") {
    const MacroConfig macro = tiny_macro();
    auto super = build_supernet<float>(macro, 1234);
    Tensor<float> images({2, 3, 8, 8});
    Rng rng(6);
    oracles::fill_uniform(images, rng);
    const Tensor<float> before = super.forward_logits(images);
    prune_operator(*super.supernet, 2, EdgeOp::zeroize);
    const Tensor<float>& after = super.forward_logits(images);
    for (std::int64_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("supernet pruning contract") {
    SupernetState state = SupernetState::all_active();
    CHECK(state.total_active() == 30);

    SUBCASE("24 removals leave one op per edge, convertible to a genotype") {
        Rng rng(2);
        int removed = 0;
        while (removed < 24) {
            const int e = static_cast<int>(rng.below(kNumEdges));
            const int op = static_cast<int>(rng.below(kNumEdgeOps));
            if (!state.is_active(e, static_cast<EdgeOp>(op)) || state.active_count(e) < 2) continue;
            prune_operator(state, e, static_cast<EdgeOp>(op));
            ++removed;
        }
        CHECK(state.fully_pruned());
        const CellGenotype g = state.to_genotype();
        CHECK(CellGenotype::parse(g.str()) == g);
    }
    SUBCASE("removing an inactive op (re-add is unsupported) errors") {
        prune_operator(state, 0, EdgeOp::conv1x1);
        CHECK_THROWS_AS(prune_operator(state, 0, EdgeOp::conv1x1), ConfigError);
    }
    SUBCASE("removing the last op on an edge errors") {
        for (int op = 0; op < 4; ++op) prune_operator(state, 1, static_cast<EdgeOp>(op));
        CHECK(state.active_count(1) == 1);
        CHECK_THROWS_AS(prune_operator(state, 1, EdgeOp::avgpool3x3), ConfigError);
    }
}

TEST_CASE("masked supernet forward reflects the live mask on every pass") {
    const MacroConfig macro = tiny_macro();
    auto super = build_supernet<float>(macro, 77);
    Tensor<float> images({2, 3, 8, 8});
    Rng rng(14);
    oracles::fill_uniform(images, rng);
    const Tensor<float> full = super.forward_logits(images);
    prune_operator(*super.supernet, 0, EdgeOp::conv3x3);
    const Tensor<float> pruned = super.forward_logits(images);
    bool changed = false;
    for (std::int64_t i = 0; i < full.numel(); ++i) changed = changed || full[i] != pruned[i];
    CHECK(changed);
}
