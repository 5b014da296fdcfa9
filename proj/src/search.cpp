#include "stnas/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "stnas/csv.hpp"
#include "stnas/parallel.hpp"

namespace stnas {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Average ranks 1..n_included, higher score -> higher rank.
std::vector<double> rank_column(const std::vector<double>& scores, const std::vector<char>& excluded) {
    const std::size_t n = scores.size();
    std::vector<double> ranks(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        if (!excluded[i]) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

RankTable aggregate_ranks(std::vector<std::string> candidates, std::vector<MetricKind> metrics,
                          std::vector<std::vector<double>> scores) {
    if (metrics.size() != scores.size()) throw ConfigError("aggregate_ranks: one score vector per metric required");
    const std::size_t n = candidates.size();
    for (const auto& col : scores) {
        if (col.size() != n) throw ConfigError("aggregate_ranks: score vectors must match candidate count");
    }

    RankTable t;
    t.candidates = std::move(candidates);
    t.metrics = std::move(metrics);
    t.scores = std::move(scores);
    t.excluded.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& col : t.scores) {
            if (std::isnan(col[i])) t.excluded[i] = 1;
        }
    }
    t.ranks.reserve(t.scores.size());
    for (const auto& col : t.scores) t.ranks.push_back(rank_column(col, t.excluded));

    t.aggregate.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
        if (t.excluded[i]) continue;
        double sum = 0.0;
        for (const auto& col : t.ranks) sum += col[i];
        t.aggregate[i] = sum;
    }

    t.selected = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (t.excluded[i]) continue;
        if (t.selected < 0 || t.aggregate[i] > t.aggregate[static_cast<std::size_t>(t.selected)] ||
            (t.aggregate[i] == t.aggregate[static_cast<std::size_t>(t.selected)] &&
             t.candidates[i] < t.candidates[static_cast<std::size_t>(t.selected)])) {
            t.selected = static_cast<int>(i);
        }
    }
    return t;
}

std::string RankTable::csv() const {
    std::vector<std::string> header = {"candidate", "id"};
    for (MetricKind m : metrics) header.push_back(std::string("score_") + metric_name(m));
    for (MetricKind m : metrics) header.push_back(std::string("rank_") + metric_name(m));
    header.push_back("aggregate");
    header.push_back("excluded");
    header.push_back("selected");
    std::string out = csv::join(header) + "\n";
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::vector<std::string> row = {std::to_string(i), candidates[i]};
        for (const auto& col : scores) row.push_back(csv::fmt(col[i]));
        for (const auto& col : ranks) row.push_back(csv::fmt(col[i]));
        row.push_back(csv::fmt(aggregate[i]));
        row.push_back(excluded[i] ? "1" : "0");
        row.push_back(static_cast<int>(i) == selected ? "1" : "0");
        out += csv::join(row) + "\n";
    }
    return out;
}

// ----------------------------- random search -----------------------------

SearchResult random_search(const MacroConfig& macro, const LabeledDataset& dataset, const SearchConfig& cfg,
                           const std::vector<CellGenotype>* pool) {
    cfg.validate();
    const std::int64_t space = pool != nullptr ? static_cast<std::int64_t>(pool->size())
                                               : CellGenotype::space_size();
    if (space < cfg.n_candidates)
        throw ConfigError("random_search: space of " + std::to_string(space) + " is smaller than N=" +
                          std::to_string(cfg.n_candidates));

    SearchResult result;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
        RepeatResult rr;
        rr.repeat_seed = derive_seed(cfg.seed, "repeat", static_cast<std::uint64_t>(rep));
        rr.proxy_seed = derive_seed(rr.repeat_seed, "proxy");
        rr.batch_seed = derive_seed(rr.repeat_seed, "metric.batch");
        const double t0 = now_seconds();

        Rng sampler(derive_seed(rr.repeat_seed, "sample"));
        const auto picks = sampler.sample_without_replacement(space, cfg.n_candidates);
        std::vector<CellGenotype> genotypes;
        genotypes.reserve(picks.size());
        for (std::int64_t p : picks)
            genotypes.push_back(pool != nullptr ? (*pool)[static_cast<std::size_t>(p)]
                                                : CellGenotype::from_index(p));

        rr.rows.assign(genotypes.size(), MetricVector{});
        std::vector<std::string> events(genotypes.size());
        parallel_for(cfg.jobs, genotypes.size(), [&](std::size_t i) {
            ScoreConfig sc = cfg.score;
            sc.metric_mask = ScoreConfig::mask_of(cfg.metrics);
            sc.seed = derive_seed(rr.repeat_seed, "candidate", static_cast<std::uint64_t>(i));
            sc.proxy_seed = rr.proxy_seed;
            sc.batch_seed = rr.batch_seed;
            try {
                rr.rows[i] = score_network(genotypes[i], macro, dataset, sc);
            } catch (const DivergedError& e) {
                rr.rows[i].genotype = genotypes[i].str();
                events[i] = std::string("diverged: ") + e.what();
            }
        });
        for (const auto& e : events) {
            if (!e.empty()) rr.events.push_back(e);
        }

        std::vector<std::string> ids;
        ids.reserve(rr.rows.size());
        for (const auto& g : genotypes) ids.push_back(g.str());
        std::vector<std::vector<double>> scores(cfg.metrics.size(), std::vector<double>(rr.rows.size()));
        for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
            for (std::size_t i = 0; i < rr.rows.size(); ++i) scores[m][i] = rr.rows[i].score_for(cfg.metrics[m]);
        }
        rr.table = aggregate_ranks(std::move(ids), cfg.metrics, std::move(scores));
        for (std::size_t i = 0; i < rr.rows.size(); ++i) {
            if (rr.table.excluded[i])
                rr.events.push_back("excluded: " + rr.table.candidates[i] + " (NaN score)");
        }
        if (rr.table.selected < 0) throw ConfigError("random_search: all candidates degenerate or diverged");
        rr.selected = rr.table.candidates[static_cast<std::size_t>(rr.table.selected)];
        rr.seconds = now_seconds() - t0;
        result.repeats.push_back(std::move(rr));
    }
    return result;
}

// ----------------------------- pruning search -----------------------------

namespace {

// Scores the still-active part of a supernet: rebuilds it (both precisions
// when needed) from the round's init seed, so every candidate of a round
// starts from the identical initialization snapshot.
MetricVector score_supernet(const SupernetState& state, const MacroConfig& macro, const LabeledDataset& dataset,
                            const SearchConfig& cfg, std::uint64_t init_seed, std::uint64_t proxy_seed,
                            std::uint64_t batch_seed, std::uint64_t train_seed) {
    const unsigned mask = ScoreConfig::mask_of(cfg.metrics);
    const auto wants = [&](MetricKind m) { return (mask >> static_cast<int>(m)) & 1u; };

    MetricVector mv;
    mv.init_seed = init_seed;
    mv.proxy_seed = proxy_seed;
    mv.batch_seed = batch_seed;
    mv.param_count = count_supernet_params(state, macro);

    if (wants(MetricKind::lr1) || wants(MetricKind::lr2)) {
        auto net = build_supernet<float>(macro, init_seed, cfg.score.train.init_scheme, state);
        const Tensor<float> batch = sample_batch(dataset, cfg.score.metric_batch, batch_seed);
        const PackedCodes codes = forward_codes(net, batch);
        if (wants(MetricKind::lr1)) mv.lr1 = metric_lr1(codes);
        if (wants(MetricKind::lr2)) {
            const Lr2Result lr2 = metric_lr2(codes);
            mv.lr2 = lr2.score;
            mv.lr2_degenerate = lr2.degenerate;
        }
    }
    if (wants(MetricKind::ntk)) {
        auto net = build_supernet<double>(macro, init_seed, cfg.score.train.init_scheme, state);
        const Tensor<double> batch = sample_batch(dataset, cfg.score.ntk_batch, batch_seed).cast<double>();
        const NtkResult r = metric_ntk(net.graph, net.input, net.logits, batch);
        mv.ntk_degenerate = r.degenerate;
        mv.ntk_score = r.degenerate ? kDegenerateScore : r.score;
    }
    if (wants(MetricKind::angle) || wants(MetricKind::loss)) {
        MacroConfig train_macro = macro;
        train_macro.num_classes = cfg.score.proxy_classes;
        auto net = build_supernet<float>(train_macro, init_seed, cfg.score.train.init_scheme, state);
        const ProxyDataset proxy =
            sample_proxy(dataset, cfg.score.proxy_classes, cfg.score.proxy_per_class, proxy_seed);
        TrainConfig tc = cfg.score.train;
        tc.iterations = cfg.supernet_iterations;
        tc.seed = train_seed;
        const WeightSnapshot snap = short_train(net, proxy, tc);
        mv.theta_pred = angle_between(snap.pred_weight_0, snap.pred_weight_t);
        mv.theta_feat = angle_between(snap.feat_0, snap.feat_t);
        mv.final_loss = snap.final_loss;
        mv.loss_score = -snap.final_loss;
    }
    return mv;
}

}  // namespace

PruneResult prune_search(const MacroConfig& macro, const LabeledDataset& dataset, const SearchConfig& cfg,
                         const SupernetState& initial) {
    cfg.validate();
    const double t0 = now_seconds();

    PruneResult result;
    result.proxy_seed = derive_seed(cfg.seed, "proxy");
    result.batch_seed = derive_seed(cfg.seed, "metric.batch");

    SupernetState state = initial;
    int round = 0;
    while (!state.fully_pruned()) {
        PruneRoundRecord rec;
        rec.round = round;
        rec.init_seed = derive_seed(cfg.seed, "round", static_cast<std::uint64_t>(round));

        // Every active operator on every edge that still has >= 2 operators is
        // a removal candidate this round.
        std::vector<std::pair<int, EdgeOp>> candidates;
        for (int e = 0; e < kNumEdges; ++e) {
            if (state.active_count(e) < 2) continue;
            for (int op = 0; op < kNumEdgeOps; ++op) {
                if (state.is_active(e, static_cast<EdgeOp>(op)))
                    candidates.emplace_back(e, static_cast<EdgeOp>(op));
            }
        }
        if (candidates.empty()) break;

        rec.evaluations.assign(candidates.size(), PruneEvaluation{});
        std::vector<std::string> events(candidates.size());
        parallel_for(cfg.jobs, candidates.size(), [&](std::size_t i) {
            const auto [edge, op] = candidates[i];
            PruneEvaluation& ev = rec.evaluations[i];
            ev.round = round;
            ev.edge = edge;
            ev.op = op;
            SupernetState candidate_state = state;
            prune_operator(candidate_state, edge, op);
            const std::uint64_t train_seed =
                derive_seed(rec.init_seed, "candidate", static_cast<std::uint64_t>(i));
            ev.metrics.param_count = count_supernet_params(candidate_state, macro);
            try {
                ev.metrics = score_supernet(candidate_state, macro, dataset, cfg, rec.init_seed,
                                            result.proxy_seed, result.batch_seed, train_seed);
            } catch (const DivergedError& e) {
                ev.diverged = true;
                events[i] = std::string("diverged: round ") + std::to_string(round) + " edge " +
                            std::to_string(edge) + " " + edge_op_name(op) + ": " + e.what();
            }
        });
        for (const auto& e : events) {
            if (!e.empty()) result.events.push_back(e);
        }

        // Joint rank table over all removal candidates; a diverged candidate's
        // scores become -inf so it lands on the worst rank instead of being
        // dropped.
        std::vector<std::string> ids;
        for (const auto& [e, op] : candidates)
            ids.push_back("edge" + std::to_string(e) + "-" + edge_op_name(op));
        std::vector<std::vector<double>> scores(cfg.metrics.size(),
                                                std::vector<double>(candidates.size()));
        for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                scores[m][i] = rec.evaluations[i].diverged ? -std::numeric_limits<double>::infinity()
                                                           : rec.evaluations[i].metrics.score_for(cfg.metrics[m]);
            }
        }
        const bool all_diverged = std::all_of(rec.evaluations.begin(), rec.evaluations.end(),
                                              [](const PruneEvaluation& ev) { return ev.diverged; });
        RankTable table = aggregate_ranks(std::move(ids), cfg.metrics, std::move(scores));
        if (table.selected < 0 || all_diverged)
            throw ConfigError("prune_search: every removal candidate failed in round " + std::to_string(round));
        for (std::size_t i = 0; i < candidates.size(); ++i) rec.evaluations[i].aggregate = table.aggregate[i];

        if (cfg.prune_mode == PruneMode::one_per_round) {
            const auto [edge, op] = candidates[static_cast<std::size_t>(table.selected)];
            prune_operator(state, edge, op);
            rec.evaluations[static_cast<std::size_t>(table.selected)].removed = true;
        } else {
            // Best removal per edge; ties break toward the lower operator id.
            for (int e = 0; e < kNumEdges; ++e) {
                int best = -1;
                for (std::size_t i = 0; i < candidates.size(); ++i) {
                    if (candidates[i].first != e) continue;
                    if (best < 0 || table.aggregate[i] > table.aggregate[static_cast<std::size_t>(best)])
                        best = static_cast<int>(i);
                }
                if (best >= 0) {
                    prune_operator(state, e, candidates[static_cast<std::size_t>(best)].second);
                    rec.evaluations[static_cast<std::size_t>(best)].removed = true;
                }
            }
        }
        result.rounds.push_back(std::move(rec));
        ++round;
    }

    result.genotype = state.to_genotype();
    result.seconds = now_seconds() - t0;
    return result;
}

std::string PruneResult::trace_csv() const {
    std::string out =
        "round,edge,op,param_count,lr1,lr2,ntk_score,theta_pred,theta_feat,loss_score,diverged,aggregate,removed\n";
    for (const auto& round : rounds) {
        for (const auto& ev : round.evaluations) {
            out += csv::join({csv::fmt(ev.round), csv::fmt(ev.edge), edge_op_name(ev.op),
                              csv::fmt(ev.metrics.param_count), csv::fmt(ev.metrics.lr1), csv::fmt(ev.metrics.lr2),
                              csv::fmt(ev.metrics.ntk_score), csv::fmt(ev.metrics.theta_pred),
                              csv::fmt(ev.metrics.theta_feat), csv::fmt(ev.metrics.loss_score),
                              ev.diverged ? "1" : "0", csv::fmt(ev.aggregate), ev.removed ? "1" : "0"}) +
                   "\n";
        }
    }
    return out;
}

}  // namespace stnas
