// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its runtime. Configs are desk-scale so the whole suite stays
// comfortably inside its time budgets on one core.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "stnas/csv.hpp"
#include "stnas/dataset.hpp"
#include "stnas/metrics.hpp"
#include "stnas/search.hpp"
#include "stnas/stats.hpp"
#include "stnas/trainer.hpp"

using namespace stnas;

namespace {

struct Criterion {
    int id;
    std::string label;
    bool pass = true;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    Criterion(int id, std::string label) : id(id), label(std::move(label)) {}

    void expect(bool condition, const std::string& what) {
        if (!condition) {
            pass = false;
            std::printf("[criterion %d]   failed check: %s\n", id, what.c_str());
        }
        CHECK_MESSAGE(condition, what);
    }

    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    void finish(double budget_seconds) {
        const double elapsed = seconds();
        expect(elapsed < budget_seconds,
               "runtime " + std::to_string(elapsed) + "s within " + std::to_string(budget_seconds) + "s");
        std::printf("[criterion %d] %s  %s (%.1fs)\n", id, pass ? "PASS" : "FAIL", label.c_str(), elapsed);
        std::fflush(stdout);
    }
};

CellGenotype random_genotype(Rng& rng) {
    CellGenotype g;
    for (int e = 0; e < kNumEdges; ++e)
        g.edge_ops[static_cast<std::size_t>(e)] = static_cast<EdgeOp>(rng.below(kNumEdgeOps));
    return g;
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness on a random 2-cell 8-channel network") {
    Criterion c(1, "backward matches central finite differences (64-bit, rel err < 1e-4)");

    MacroConfig macro;
    macro.stem_channels = 8;
    macro.cells_per_stage = 1;
    macro.num_stages = 2;  // two cells, one reduction
    macro.num_classes = 4;
    macro.input_resolution = 4;

    Rng rng(2024);
    const CellGenotype g = random_genotype(rng);
    auto net = build_network<double>(g, macro, 31337);

    Tensor<double> images({2, 3, 4, 4});
    oracles::fill_uniform(images, rng);
    const std::vector<int> labels = {1, 3};

    net.compute_loss(images, labels);
    net.graph.backward(net.loss);
    const double err =
        oracles::max_fd_relative_error(net.graph, [&] { return net.compute_loss(images, labels); }, 1e-5);

    c.expect(err < 1e-4, "max relative error " + std::to_string(err) + " < 1e-4 over " +
                             std::to_string(net.graph.param_scalar_count()) + " params (genotype " + g.str() + ")");
    c.finish(120.0);
}

TEST_CASE("criterion 2: angle metric identities over 1000 random vector pairs") {
    Criterion c(2, "theta in [0,pi]; theta(v,v)=0, theta(v,-v)=pi, theta(v,cv)=0 within 1e-6");
    Rng rng(2);
    bool bounds_ok = true, self_ok = true, neg_ok = true, scale_ok = true;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t dim = 2 + rng.below(64);
        std::vector<double> v0(dim), vt(dim);
        for (auto& v : v0) v = rng.uniform(-2, 2);
        for (auto& v : vt) v = rng.uniform(-2, 2);
        const double theta = angle_between(v0, vt);
        bounds_ok = bounds_ok && theta >= 0.0 && theta <= M_PI;
        self_ok = self_ok && std::fabs(angle_between(v0, v0)) < 1e-6;
        std::vector<double> neg = v0, scaled = v0;
        const double scale = rng.uniform(0.001, 100.0);
        for (auto& v : neg) v = -v;
        for (auto& v : scaled) v *= scale;
        neg_ok = neg_ok && std::fabs(angle_between(v0, neg) - M_PI) < 1e-6;
        scale_ok = scale_ok && std::fabs(angle_between(v0, scaled)) < 1e-6;
    }
    c.expect(bounds_ok, "theta within [0, pi]");
    c.expect(self_ok, "theta(v, v) = 0 within 1e-6");
    c.expect(neg_ok, "theta(v, -v) = pi within 1e-6");
    c.expect(scale_ok, "theta(v, c*v) = 0 for c > 0 within 1e-6");
    c.finish(120.0);
}

TEST_CASE("criterion 3: kendall tau agrees exactly with pair enumeration") {
    Criterion c(3, "tau-b equals the O(n^2) oracle on 200 tied vectors; tau(x,x)=1, tau(x,rev)=-1");
    Rng rng(3);
    bool all_equal = true;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + rng.below(60);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng.below(7));
            y[i] = static_cast<double>(rng.below(7));
        }
        const auto mine = kendall_tau(x, y);
        const double oracle = oracles::kendall_tau_pairs(x, y);
        if (std::isnan(oracle)) {
            all_equal = all_equal && !mine.has_value();
        } else {
            all_equal = all_equal && mine.has_value() && *mine == oracle;
        }
    }
    c.expect(all_equal, "exact agreement on all 200 random tied vectors");

    std::vector<double> x(50), rev(50);
    for (int i = 0; i < 50; ++i) x[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < 50; ++i) rev[static_cast<std::size_t>(i)] = 49 - i;
    c.expect(*kendall_tau(x, x) == 1.0, "tau(x, x) = 1");
    c.expect(*kendall_tau(x, rev) == -1.0, "tau(x, reversed x) = -1");
    c.finish(120.0);
}

TEST_CASE("criterion 4: all-zeroize collapse reproduction") {
    Criterion c(4, "all-zeroize, 10x10 proxy, 50 iters: theta_pred < 1e-3 and loss = ln(10) +- 1e-3");

    MacroConfig macro;
    macro.stem_channels = 8;
    macro.cells_per_stage = 1;
    macro.num_stages = 3;
    macro.num_classes = 10;
    macro.input_resolution = 16;

    const LabeledDataset dataset = synth_dataset(10, 12, 16, 404);
    const ProxyDataset proxy = sample_proxy(dataset, 10, 10, 41);
    auto net = build_network<float>(CellGenotype::uniform(EdgeOp::zeroize), macro, 42);

    TrainConfig cfg;
    cfg.iterations = 50;
    cfg.seed = 4;
    const WeightSnapshot snap = short_train(net, proxy, cfg);
    const double theta_pred = angle_between(snap.pred_weight_0, snap.pred_weight_t);

    c.expect(theta_pred < 1e-3, "theta_pred = " + std::to_string(theta_pred) + " < 1e-3 rad");
    c.expect(std::fabs(snap.final_loss - std::log(10.0)) < 1e-3,
             "final loss " + std::to_string(snap.final_loss) + " = ln(10) within 1e-3");
    c.finish(60.0);
}

TEST_CASE("criterion 5: linear-region metric properties") {
    Criterion c(5, "LR1 in [1,n] and equals the hash-set oracle; LR2 permutation-exact; duplicate degenerates");

    MacroConfig macro;
    macro.stem_channels = 8;
    macro.cells_per_stage = 1;
    macro.num_stages = 2;
    macro.num_classes = 4;
    macro.input_resolution = 16;
    const LabeledDataset dataset = synth_dataset(4, 16, 16, 505);

    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const CellGenotype g = random_genotype(rng);
        auto net = build_network<float>(g, macro, 100 + trial);
        const std::int64_t n = 8;
        Tensor<float> batch = sample_batch(dataset, n, 55 + static_cast<std::uint64_t>(trial));
        const PackedCodes codes = forward_codes(net, batch);

        const double lr1 = metric_lr1(codes);
        std::vector<std::string> raw;
        for (std::int64_t s = 0; s < n; ++s) {
            std::string bits;
            for (const auto* tap : net.graph.activation_taps()) {
                std::vector<std::uint8_t> sample_bits;
                tap->append_pattern(s, sample_bits);
                for (std::uint8_t b : sample_bits) bits += b ? '1' : '0';
            }
            raw.push_back(bits);
        }
        c.expect(lr1 >= 1.0 && lr1 <= static_cast<double>(n), "LR1 in [1, n] (genotype " + g.str() + ")");
        c.expect(lr1 == static_cast<double>(oracles::distinct_patterns_hashset(raw)),
                 "LR1 equals the hash-set oracle (genotype " + g.str() + ")");

        const Lr2Result base = metric_lr2(codes);
        // reverse the batch: LR2 must be bit-identical
        Tensor<float> reversed(batch.shape());
        const std::int64_t per = batch.numel() / n;
        for (std::int64_t i = 0; i < n; ++i)
            std::copy(batch.data() + i * per, batch.data() + (i + 1) * per,
                      reversed.data() + (n - 1 - i) * per);
        const Lr2Result permuted = metric_lr2(forward_codes(net, reversed));
        c.expect(permuted.score == base.score && permuted.degenerate == base.degenerate,
                 "LR2 exactly invariant under sample permutation");

        Tensor<float> dup = batch;
        std::copy(dup.data(), dup.data() + per, dup.data() + per);
        c.expect(metric_lr2(forward_codes(net, dup)).degenerate, "duplicated sample flags LR2 degenerate");
    }
    c.finish(120.0);
}

TEST_CASE("criterion 6: NTK sanity") {
    Criterion c(6, "1x1 score -1; permutation invariance within 1e-8; 2x2 closed form within 1e-8");

    const NtkResult one = ntk_from_gram({3.7}, 1);
    c.expect(!one.degenerate && one.score == -1.0, "single sample / single logit gives score -1");

    // closed-form 2x2: linear model y = w.x
    {
        ComputeGraph<double> g;
        auto* in = g.make<InputNode<double>>("input");
        Tensor<double> batch({2, 2});
        batch[0] = 3.0;
        batch[1] = -1.0;
        batch[2] = 0.5;
        batch[3] = 2.0;
        auto* w = g.add_param("w", {1, 2}, ParamKind::linear_weight, ParamRole::prediction_weight, 2, 1);
        w->value[0] = 0.7;
        w->value[1] = -0.4;
        auto* lin = g.make<LinearNode<double>>("lin", in, w, nullptr);
        const NtkResult r = metric_ntk(g, in, lin, batch);

        const double a = 10.0, b = -0.5, d = 4.25;  // x1.x1, x1.x2, x2.x2
        const double tr = a + d, det = a * d - b * b;
        const double lam_max = (tr + std::sqrt(tr * tr - 4 * det)) / 2.0;
        const double lam_min = (tr - std::sqrt(tr * tr - 4 * det)) / 2.0;
        c.expect(std::fabs(r.condition - lam_max / lam_min) < 1e-8,
                 "2x2 linear-model condition matches hand eigenvalues within 1e-8");
    }

    {
        MacroConfig macro;
        macro.stem_channels = 4;
        macro.cells_per_stage = 1;
        macro.num_stages = 1;
        macro.num_classes = 3;
        macro.input_resolution = 8;
        const LabeledDataset dataset = synth_dataset(3, 8, 8, 606);
        auto net = build_network<double>(CellGenotype::parse("2|1|3|0|1|2"), macro, 66);
        Tensor<double> batch = sample_batch(dataset, 4, 6).cast<double>();
        const NtkResult a = metric_ntk(net.graph, net.input, net.logits, batch);
        Tensor<double> reversed(batch.shape());
        const std::int64_t per = batch.numel() / 4;
        for (std::int64_t i = 0; i < 4; ++i)
            std::copy(batch.data() + i * per, batch.data() + (i + 1) * per, reversed.data() + (3 - i) * per);
        const NtkResult b = metric_ntk(net.graph, net.input, net.logits, reversed);
        c.expect(!a.degenerate && !b.degenerate, "small-network NTK non-degenerate");
        c.expect(std::fabs(a.condition - b.condition) <= 1e-8 * std::max(1.0, a.condition),
                 "sample-permutation invariance within 1e-8 (relative)");
    }
    c.finish(120.0);
}

TEST_CASE("criterion 7: #Param analytic counts match the graph walk") {
    Criterion c(7, "hand counts for 3 genotypes match graph totals; conv3x3->conv1x1 changes count by 8C^2");

    MacroConfig macro;
    macro.stem_channels = 16;
    macro.cells_per_stage = 1;
    macro.num_stages = 3;
    macro.num_classes = 10;
    macro.input_resolution = 32;

    // hand-computed totals (stem + cells + reductions + classifier)
    const std::int64_t backbone = 464 + 14464 + 57600 + 650;  // stem + red1 + red2 + fc
    const std::int64_t zeroize_expected = backbone;
    const std::int64_t conv3_expected = backbone + 14016 + 55680 + 221952;
    // mixed "3|0|1|2|4|3": per cell at width C: two conv3x3 (9C^2+2C each) + one conv1x1 (C^2+2C)
    const auto mixed = CellGenotype::parse("3|0|1|2|4|3");
    const auto cell_cost = [](std::int64_t ch) { return 2 * (9 * ch * ch + 2 * ch) + (ch * ch + 2 * ch); };
    const std::int64_t mixed_expected = backbone + cell_cost(16) + cell_cost(32) + cell_cost(64);

    const struct {
        CellGenotype g;
        std::int64_t expected;
    } cases[] = {
        {CellGenotype::uniform(EdgeOp::zeroize), zeroize_expected},
        {CellGenotype::uniform(EdgeOp::conv3x3), conv3_expected},
        {mixed, mixed_expected},
    };
    for (const auto& [g, expected] : cases) {
        const std::int64_t analytic = count_params(g, macro);
        auto net = build_network<float>(g, macro, 7);
        c.expect(analytic == expected, "analytic count matches hand total for " + g.str());
        c.expect(net.graph.param_scalar_count() == expected, "graph walk matches hand total for " + g.str());
    }

    CellGenotype a = mixed, b = mixed;
    a.edge_ops[5] = EdgeOp::conv3x3;
    b.edge_ops[5] = EdgeOp::conv1x1;
    const std::int64_t delta = count_params(a, macro) - count_params(b, macro);
    const std::int64_t expected_delta = 8 * (16 * 16 + 32 * 32 + 64 * 64);  // one edge per stage
    c.expect(delta == expected_delta, "edge swap changes the count by exactly 8C^2 per stage");
    c.finish(120.0);
}

TEST_CASE("criterion 8: end-to-end random search") {
    Criterion c(8, "N=20 {angle,loss,param} x3 repeats: deterministic CSVs; {param} selects max-#Param");

    MacroConfig macro;
    macro.stem_channels = 8;
    macro.cells_per_stage = 1;
    macro.num_stages = 2;
    macro.num_classes = 10;
    macro.input_resolution = 16;
    const LabeledDataset dataset = synth_dataset(10, 12, 16, 808);

    SearchConfig cfg;
    cfg.n_candidates = 20;
    cfg.metrics = {MetricKind::angle, MetricKind::loss, MetricKind::param};
    cfg.repeats = 3;
    cfg.seed = 88;
    cfg.jobs = 1;
    cfg.score.train.iterations = 25;
    cfg.score.proxy_classes = 10;
    cfg.score.proxy_per_class = 4;

    const SearchResult first = random_search(macro, dataset, cfg);
    const SearchResult second = random_search(macro, dataset, cfg);
    for (int r = 0; r < 3; ++r) {
        const auto& a = first.repeats[static_cast<std::size_t>(r)];
        const auto& b = second.repeats[static_cast<std::size_t>(r)];
        c.expect(a.selected == b.selected, "repeat " + std::to_string(r) + " selection deterministic");
        c.expect(a.table.csv() == b.table.csv(), "repeat " + std::to_string(r) + " rank CSV byte-identical");
        std::string rows_a, rows_b;
        for (const auto& mv : a.rows) rows_a += metric_csv_row(mv) + "\n";
        for (const auto& mv : b.rows) rows_b += metric_csv_row(mv) + "\n";
        c.expect(rows_a == rows_b, "repeat " + std::to_string(r) + " metric rows byte-identical");
    }

    SearchConfig param_only = cfg;
    param_only.metrics = {MetricKind::param};
    param_only.repeats = 2;
    const SearchResult by_param = random_search(macro, dataset, param_only);
    for (const auto& rr : by_param.repeats) {
        std::int64_t max_param = 0;
        for (const auto& id : rr.table.candidates)
            max_param = std::max(max_param, count_params(CellGenotype::parse(id), macro));
        c.expect(count_params(CellGenotype::parse(rr.selected), macro) == max_param,
                 "{param} selection equals the max-#Param candidate");
    }
    c.finish(600.0);
}

TEST_CASE("criterion 9: pruning search in a reduced space") {
    Criterion c(9, "6 edges x 3 ops, one-per-edge-per-round: valid genotype in exactly 2 rounds");

    MacroConfig macro;
    macro.stem_channels = 8;
    macro.cells_per_stage = 1;
    macro.num_stages = 2;
    macro.num_classes = 4;
    macro.input_resolution = 16;
    const LabeledDataset dataset = synth_dataset(4, 10, 16, 909);

    SupernetState initial;
    for (auto& row : initial.active) {
        row.fill(0);
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::zeroize))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::skip_connect))] = 1;
        row[static_cast<std::size_t>(static_cast<int>(EdgeOp::conv3x3))] = 1;
    }

    SearchConfig cfg;
    cfg.metrics = {MetricKind::angle, MetricKind::loss};
    cfg.prune_mode = PruneMode::one_per_edge_per_round;
    cfg.supernet_iterations = 10;
    cfg.seed = 99;
    cfg.score.proxy_classes = 4;
    cfg.score.proxy_per_class = 5;
    cfg.score.train.lr = 0.025;  // a supernet sums many branches; keep full-batch GD stable

    const PruneResult result = prune_search(macro, dataset, cfg, initial);
    c.expect(result.rounds.size() == 2, "exactly 2 rounds (3 -> 2 -> 1 ops per edge)");
    c.expect(result.rounds[0].evaluations.size() == 18, "round 0 evaluates 18 removals");
    c.expect(result.rounds[1].evaluations.size() == 12, "round 1 evaluates 12 removals");
    const CellGenotype g = result.genotype;
    c.expect(CellGenotype::parse(g.str()) == g, "selected genotype has a valid canonical form");
    bool in_set = true;
    for (int e = 0; e < kNumEdges; ++e) {
        const EdgeOp op = g.edge_ops[static_cast<std::size_t>(e)];
        in_set = in_set && (op == EdgeOp::zeroize || op == EdgeOp::skip_connect || op == EdgeOp::conv3x3);
    }
    c.expect(in_set, "selection stays inside the reduced operator set");
    c.finish(900.0);
}

TEST_CASE("criterion 10: desk-scale correlation study with the oracle trainer") {
    Criterion c(10, "16 genotypes oracle-trained 2 epochs: report emitted, taus in [-1,1], deterministic");

    MacroConfig macro;
    macro.stem_channels = 8;
    macro.cells_per_stage = 1;
    macro.num_stages = 2;
    macro.num_classes = 6;
    macro.input_resolution = 16;
    const LabeledDataset dataset = synth_dataset(6, 40, 16, 1010);

    const auto run_study = [&] {
        Rng rng(10);
        std::vector<CellGenotype> genotypes;
        for (int i = 0; i < 16; ++i) genotypes.push_back(random_genotype(rng));

        GroundTruthTable gt;
        gt.provenance = "oracle:epochs=2";
        std::vector<MetricVector> rows;
        const std::vector<MetricKind> metrics = {MetricKind::param, MetricKind::lr1, MetricKind::lr2,
                                                 MetricKind::angle, MetricKind::loss};
        for (std::size_t i = 0; i < genotypes.size(); ++i) {
            ScoreConfig sc;
            sc.seed = derive_seed(1010, "candidate", static_cast<std::uint64_t>(i));
            sc.proxy_seed = derive_seed(1010, "proxy");
            sc.batch_seed = derive_seed(1010, "batch");
            sc.train.iterations = 15;
            sc.train.lr = 0.05;  // keep all 16 full-batch trainings stable
            sc.proxy_classes = 6;
            sc.proxy_per_class = 6;
            sc.metric_batch = 12;
            sc.metric_mask = ScoreConfig::mask_of(metrics);
            rows.push_back(score_network(genotypes[i], macro, dataset, sc));
            const OracleResult oracle = oracle_train(genotypes[i], macro, dataset, 2,
                                                     derive_seed(1010, "oracle", static_cast<std::uint64_t>(i)));
            gt.accuracy[genotypes[i].str()] = oracle.accuracy;
        }
        return correlation_study(rows, metrics, &gt).to_csv();
    };

    const std::string report_a = run_study();
    c.expect(report_a.find("metric_a,metric_b,tau") == 0, "Table-shaped CSV report emitted");
    // every tau parses and lies in [-1, 1]
    std::istringstream lines(report_a);
    std::string line;
    std::getline(lines, line);  // header
    int entries = 0;
    bool taus_ok = true;
    while (std::getline(lines, line)) {
        const auto f = csv::split(line);
        const double tau = csv::parse_double(f[2]);
        if (!std::isnan(tau)) taus_ok = taus_ok && tau >= -1.0 && tau <= 1.0;
        ++entries;
    }
    c.expect(entries >= 15, "accuracy row per metric plus all metric pairs present");
    c.expect(taus_ok, "all defined taus within [-1, 1]");

    const std::string report_b = run_study();
    c.expect(report_a == report_b, "byte-identical report under fixed seeds");
    c.finish(1200.0);
}
