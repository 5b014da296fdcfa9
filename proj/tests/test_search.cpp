#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stnas/search.hpp"

using namespace stnas;

namespace {

MacroConfig search_macro(int classes = 4) {
    MacroConfig m;
    m.stem_channels = 8;
    m.cells_per_stage = 1;
    m.num_stages = 2;
    m.num_classes = classes;
    m.input_resolution = 16;
    return m;
}

SearchConfig fast_config(std::vector<MetricKind> metrics, int n, int repeats) {
    SearchConfig cfg;
    cfg.n_candidates = n;
    cfg.metrics = std::move(metrics);
    cfg.repeats = repeats;
    cfg.score.train.iterations = 6;
    cfg.score.proxy_classes = 4;
    cfg.score.proxy_per_class = 4;
    cfg.score.metric_batch = 8;
    cfg.score.ntk_batch = 4;
    return cfg;
}

}  // namespace

TEST_CASE("aggregate_ranks: single metric selects the max score") {
    const RankTable t = aggregate_ranks({"a", "b", "c"}, {MetricKind::loss}, {{0.5, 0.9, 0.1}});
    CHECK(t.selected == 1);
    CHECK(t.ranks[0] == std::vector<double>{2, 3, 1});
    CHECK(t.aggregate == std::vector<double>{2, 3, 1});
}

TEST_CASE("aggregate_ranks: hand-checked two-metric aggregation") {
    // angle ranks [3,1,2], loss ranks [2,3,1] -> R = [5,4,3] -> candidate 0
    const RankTable t = aggregate_ranks({"a", "b", "c"}, {MetricKind::angle, MetricKind::loss},
                                        {{0.9, 0.1, 0.5}, {0.5, 0.9, 0.1}});
    CHECK(t.ranks[0] == std::vector<double>{3, 1, 2});
    CHECK(t.ranks[1] == std::vector<double>{2, 3, 1});
    CHECK(t.aggregate == std::vector<double>{5, 4, 3});
    CHECK(t.selected == 0);
}

TEST_CASE("aggregate_ranks: opposite orderings tie and break lexicographically") {
    const RankTable t = aggregate_ranks({"b|x", "a|x"}, {MetricKind::angle, MetricKind::loss},
                                        {{1.0, 2.0}, {2.0, 1.0}});
    CHECK(t.aggregate[0] == t.aggregate[1]);
    CHECK(t.candidates[static_cast<std::size_t>(t.selected)] == "a|x");
}

TEST_CASE("aggregate_ranks: ties share the average rank") {
    const RankTable t = aggregate_ranks({"a", "b", "c", "d"}, {MetricKind::param}, {{5.0, 5.0, 1.0, 9.0}});
    CHECK(t.ranks[0][2] == 1.0);
    CHECK(t.ranks[0][0] == 2.5);
    CHECK(t.ranks[0][1] == 2.5);
    CHECK(t.ranks[0][3] == 4.0);
}

TEST_CASE("aggregate_ranks: NaN scores exclude the candidate from ranking and selection") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const RankTable t =
        aggregate_ranks({"a", "b", "c"}, {MetricKind::loss, MetricKind::angle}, {{0.5, nan, 0.1}, {1, 2, 3}});
    CHECK(t.excluded == std::vector<char>{0, 1, 0});
    CHECK(std::isnan(t.aggregate[1]));
    CHECK(t.ranks[0][0] == 2.0);  // ranks over the two included candidates only
    CHECK(t.ranks[0][2] == 1.0);
    CHECK(t.selected != 1);

    const RankTable all_gone = aggregate_ranks({"a"}, {MetricKind::loss}, {{nan}});
    CHECK(all_gone.selected == -1);
}

TEST_CASE("aggregate_ranks is invariant under strictly increasing transforms of one metric") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s0(10), s1(10);
        for (int i = 0; i < 10; ++i) {
            s0[static_cast<std::size_t>(i)] = rng.uniform(-5, 5);
            s1[static_cast<std::size_t>(i)] = rng.uniform(-5, 5);
        }
        std::vector<std::string> ids;
        for (int i = 0; i < 10; ++i) ids.push_back("g" + std::to_string(i));

        const RankTable base = aggregate_ranks(ids, {MetricKind::angle, MetricKind::loss}, {s0, s1});
        std::vector<double> warped = s0;
        for (auto& v : warped) v = std::exp(0.3 * v) + 7.0;  // strictly increasing
        const RankTable after = aggregate_ranks(ids, {MetricKind::angle, MetricKind::loss}, {warped, s1});
        CHECK(base.selected == after.selected);
        CHECK(base.ranks == after.ranks);
    }
}

TEST_CASE("random_search with metric {param} selects the max-#Param candidate") {
    const LabeledDataset d = synth_dataset(4, 8, 16, 200);
    const MacroConfig macro = search_macro();
    SearchConfig cfg = fast_config({MetricKind::param}, 12, 2);
    cfg.seed = 31;
    const SearchResult result = random_search(macro, d, cfg);
    REQUIRE(result.repeats.size() == 2);
    for (const auto& rr : result.repeats) {
        std::int64_t max_param = 0;
        for (const auto& id : rr.table.candidates)
            max_param = std::max(max_param, count_params(CellGenotype::parse(id), macro));
        CHECK(count_params(CellGenotype::parse(rr.selected), macro) == max_param);
    }
}

TEST_CASE("random_search: N equal to the full space with metric {param} finds all-conv3x3") {
    // #Param is training-free, so sampling every genotype stays cheap
    const LabeledDataset d = synth_dataset(4, 8, 16, 201);
    const MacroConfig macro = search_macro();
    SearchConfig cfg = fast_config({MetricKind::param}, 15625, 1);
    cfg.seed = 7;
    const SearchResult result = random_search(macro, d, cfg);
    CHECK(result.repeats[0].selected == CellGenotype::uniform(EdgeOp::conv3x3).str());
    CHECK(result.repeats[0].table.candidates.size() == 15625);
}

TEST_CASE("random_search determinism: fixed seeds give identical selections and tables") {
    const LabeledDataset d = synth_dataset(4, 10, 16, 202);
    const MacroConfig macro = search_macro();
    SearchConfig cfg = fast_config({MetricKind::angle, MetricKind::loss}, 5, 2);
    cfg.seed = 77;
    const SearchResult a = random_search(macro, d, cfg);
    const SearchResult b = random_search(macro, d, cfg);
    for (std::size_t r = 0; r < a.repeats.size(); ++r) {
        CHECK(a.repeats[r].selected == b.repeats[r].selected);
        CHECK(a.repeats[r].table.csv() == b.repeats[r].table.csv());
    }
    // and a different seed samples a different candidate set
    SearchConfig cfg2 = cfg;
    cfg2.seed = 78;
    const SearchResult c = random_search(macro, d, cfg2);
    CHECK(c.repeats[0].table.candidates != a.repeats[0].table.candidates);
}

TEST_CASE("random_search: space smaller than N is rejected") {
    const LabeledDataset d = synth_dataset(4, 8, 16, 203);
    std::vector<CellGenotype> pool = {CellGenotype::uniform(EdgeOp::conv3x3)};
    SearchConfig cfg = fast_config({MetricKind::param}, 2, 1);
    CHECK_THROWS_AS(random_search(search_macro(), d, cfg, &pool), ConfigError);
}

TEST_CASE("prune_search: one-per-edge-per-round with 3 ops finishes in 2 rounds") {
    const LabeledDataset d = synth_dataset(4, 8, 16, 204);
    const MacroConfig macro = search_macro();

    SupernetState initial;
    for (auto& row : initial.active) {
        row.fill(0);
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::zeroize))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::skip_connect))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::conv1x1))] = 1;
    }

    SearchConfig cfg = fast_config({MetricKind::angle, MetricKind::loss}, 2, 1);
    cfg.prune_mode = PruneMode::one_per_edge_per_round;
    cfg.supernet_iterations = 4;
    cfg.seed = 5;
    const PruneResult result = prune_search(macro, d, cfg, initial);

    CHECK(result.rounds.size() == 2);
    CHECK(result.rounds[0].evaluations.size() == 18);  // 6 edges x 3 ops
    CHECK(result.rounds[1].evaluations.size() == 12);  // 6 edges x 2 ops
    const CellGenotype g = result.genotype;
    CHECK(CellGenotype::parse(g.str()) == g);  // valid text form
    for (int e = 0; e < kNumEdges; ++e) {
        const int op = static_cast<int>(g.edge_ops[static_cast<std::size_t>(e)]);
        CHECK((op == 0 || op == 1 || op == 2));  // stayed within the restricted set
    }
}

TEST_CASE("prune_search: one-per-round removes exactly one operator per round") {
    const LabeledDataset d = synth_dataset(4, 8, 16, 205);
    const MacroConfig macro = search_macro();

    // two ops per edge -> 6 removals, one round each
    SupernetState initial;
    for (auto& row : initial.active) {
        row.fill(0);
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::skip_connect))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::conv1x1))] = 1;
    }
    SearchConfig cfg = fast_config({MetricKind::loss}, 2, 1);
    cfg.prune_mode = PruneMode::one_per_round;
    cfg.supernet_iterations = 3;
    cfg.seed = 8;
    const PruneResult result = prune_search(macro, d, cfg, initial);
    CHECK(result.rounds.size() == 6);
    for (const auto& round : result.rounds) {
        int removed = 0;
        for (const auto& ev : round.evaluations) removed += ev.removed ? 1 : 0;
        CHECK(removed == 1);
    }
    // trace is well-formed CSV with one header + one line per evaluation
    const std::string trace = result.trace_csv();
    std::size_t lines = 0;
    for (char c : trace) lines += c == '\n' ? 1 : 0;
    std::size_t evals = 0;
    for (const auto& round : result.rounds) evals += round.evaluations.size();
    CHECK(lines == evals + 1);
}

TEST_CASE("prune_search with training-free metrics in the set") {
    const LabeledDataset d = synth_dataset(4, 10, 16, 207);
    const MacroConfig macro = search_macro();
    SupernetState initial;
    for (auto& row : initial.active) {
        row.fill(0);
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::skip_connect))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::conv1x1))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::conv3x3))] = 1;
    }
    SearchConfig cfg = fast_config({MetricKind::param, MetricKind::lr1, MetricKind::lr2}, 2, 1);
    cfg.prune_mode = PruneMode::one_per_edge_per_round;
    cfg.supernet_iterations = 2;
    cfg.seed = 13;
    const PruneResult result = prune_search(macro, d, cfg, initial);
    CHECK(result.rounds.size() == 2);
    for (const auto& round : result.rounds) {
        for (const auto& ev : round.evaluations) {
            CHECK(ev.metrics.param_count > 0);
            CHECK(ev.metrics.lr1 >= 1.0);
        }
    }
}

TEST_CASE("prune_search determinism") {
    const LabeledDataset d = synth_dataset(4, 8, 16, 206);
    const MacroConfig macro = search_macro();
    SupernetState initial;
    for (auto& row : initial.active) {
        row.fill(0);
        row[1] = 1;
        row[2] = 1;
    }
    SearchConfig cfg = fast_config({MetricKind::angle, MetricKind::loss}, 2, 1);
    cfg.supernet_iterations = 3;
    cfg.seed = 99;
    const PruneResult a = prune_search(macro, d, cfg, initial);
    const PruneResult b = prune_search(macro, d, cfg, initial);
    CHECK(a.genotype == b.genotype);
    CHECK(a.trace_csv() == b.trace_csv());
}
