// stnas: reproducible experiments over NAS proxy metrics on a cell search
// space. Every command derives all randomness from --seed and writes a JSON
// manifest next to its outputs.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stnas/csv.hpp"
#include "stnas/dataset.hpp"
#include "stnas/errors.hpp"
#include "stnas/manifest.hpp"
#include "stnas/metrics.hpp"
#include "stnas/network.hpp"
#include "stnas/parallel.hpp"
#include "stnas/search.hpp"
#include "stnas/stats.hpp"

namespace {

using namespace stnas;

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct CommonOpts {
    std::uint64_t seed = 1;
    std::string dataset = "synth";
    int synth_classes = 10;
    int synth_per_class = 100;
    int synth_res = 32;
    int stem_channels = 16;
    int cells_per_stage = 1;
    int stages = 3;
    int jobs = 1;
    // short-training knobs
    int iterations = 50;
    double lr = 0.2;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::string init = "kaiming_uniform";
    int proxy_classes = 10;
    int proxy_per_class = 10;
    int metric_batch = 64;
    int ntk_batch = 16;
    int ntk_repeats = 1;
    int train_batch = 0;  // 0 = full proxy batch
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--seed", o.seed, "master seed; all randomness derives from it");
    cmd->add_option("--dataset", o.dataset, "'synth' or 'cifar:<path to binary batch>'");
    cmd->add_option("--synth-classes", o.synth_classes, "synthetic dataset: class count");
    cmd->add_option("--synth-per-class", o.synth_per_class, "synthetic dataset: images per class");
    cmd->add_option("--synth-res", o.synth_res, "synthetic dataset: resolution");
    cmd->add_option("--stem-channels", o.stem_channels, "macro: stem width");
    cmd->add_option("--cells-per-stage", o.cells_per_stage, "macro: cells per stage");
    cmd->add_option("--stages", o.stages, "macro: number of stages");
    cmd->add_option("--jobs", o.jobs, "parallel candidate evaluations");
    cmd->add_option("--iterations", o.iterations, "short-training iterations");
    cmd->add_option("--lr", o.lr, "short-training learning rate");
    cmd->add_option("--momentum", o.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", o.weight_decay, "SGD weight decay");
    cmd->add_option("--init", o.init, "kaiming_uniform | kaiming_normal | xavier_uniform");
    cmd->add_option("--proxy-classes", o.proxy_classes, "proxy subsample: classes");
    cmd->add_option("--proxy-per-class", o.proxy_per_class, "proxy subsample: images per class");
    cmd->add_option("--metric-batch", o.metric_batch, "batch for linear-region metrics");
    cmd->add_option("--ntk-batch", o.ntk_batch, "batch for the NTK metric");
    cmd->add_option("--ntk-repeats", o.ntk_repeats, "average NTK over this many batches");
    cmd->add_option("--train-batch", o.train_batch, "short-training mini-batch size (0 = full batch)");
}

LabeledDataset open_dataset(const CommonOpts& o) {
    if (o.dataset == "synth")
        return synth_dataset(o.synth_classes, o.synth_per_class, o.synth_res, derive_seed(o.seed, "dataset.synth"));
    if (o.dataset.rfind("cifar:", 0) == 0) return load_cifar_binary(o.dataset.substr(6));
    throw ConfigError("unknown dataset spec \"" + o.dataset + "\" (use 'synth' or 'cifar:<path>')");
}

MacroConfig make_macro(const CommonOpts& o, const LabeledDataset& d) {
    MacroConfig m;
    m.stem_channels = o.stem_channels;
    m.cells_per_stage = o.cells_per_stage;
    m.num_stages = o.stages;
    m.num_classes = d.class_count;
    m.input_resolution = d.resolution();
    m.input_channels = d.channels();
    m.validate();
    return m;
}

ScoreConfig make_score_config(const CommonOpts& o) {
    ScoreConfig sc;
    sc.train.iterations = o.iterations;
    sc.train.lr = o.lr;
    sc.train.momentum = o.momentum;
    sc.train.weight_decay = o.weight_decay;
    sc.train.init_scheme = parse_init_scheme(o.init);
    sc.train.batch_size = o.train_batch;
    sc.proxy_classes = o.proxy_classes;
    sc.proxy_per_class = o.proxy_per_class;
    sc.metric_batch = o.metric_batch;
    sc.ntk_batch = o.ntk_batch;
    sc.ntk_repeats = o.ntk_repeats;
    return sc;
}

nlohmann::json config_json(const CommonOpts& o) {
    nlohmann::json j;
    j["dataset"] = o.dataset;
    j["synth"] = {{"classes", o.synth_classes}, {"per_class", o.synth_per_class}, {"res", o.synth_res}};
    j["macro"] = {{"stem_channels", o.stem_channels}, {"cells_per_stage", o.cells_per_stage}, {"stages", o.stages}};
    j["train"] = {{"iterations", o.iterations},       {"lr", o.lr},
                  {"momentum", o.momentum},           {"weight_decay", o.weight_decay},
                  {"init", o.init},                   {"proxy_classes", o.proxy_classes},
                  {"proxy_per_class", o.proxy_per_class}, {"train_batch", o.train_batch}};
    j["metric_batch"] = o.metric_batch;
    j["ntk_batch"] = o.ntk_batch;
    j["ntk_repeats"] = o.ntk_repeats;
    j["bn"] = {{"eps", 1e-5}, {"affine", true}};
    j["angle"] = {{"include_bn_in_feat", true}, {"include_pred_bias", false}};
    j["jobs"] = o.jobs;
    return j;
}

void note_dataset(RunManifest& man, const LabeledDataset& d) {
    man.config["dataset_source"] = d.source;
    man.config["dataset_normalization"] = {{"mean", d.channel_mean}, {"std", d.channel_std}};
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing", 0);
    out << content;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// ----------------------------- score -----------------------------

int cmd_score(const CommonOpts& o, const std::string& genotype_text, const std::string& metrics_text,
              const std::string& out_path, const std::string& loss_curve_path) {
    const double t0 = now_seconds();
    const CellGenotype genotype = CellGenotype::parse(genotype_text);
    const LabeledDataset dataset = open_dataset(o);
    const MacroConfig macro = make_macro(o, dataset);
    const auto metrics = parse_metric_set(metrics_text);

    ScoreConfig sc = make_score_config(o);
    sc.metric_mask = ScoreConfig::mask_of(metrics);
    sc.seed = derive_seed(o.seed, "score");
    MetricVector mv = score_network(genotype, macro, dataset, sc);

    csv::Writer w(out_path);
    w.raw(metric_csv_header());
    w.raw(metric_csv_row(mv));

    if (!loss_curve_path.empty() && (sc.wants(MetricKind::angle) || sc.wants(MetricKind::loss))) {
        // Re-run the short training to export the loss curve.
        MacroConfig tm = macro;
        tm.num_classes = sc.proxy_classes;
        auto net = build_network<float>(genotype, tm, mv.init_seed, sc.train.init_scheme);
        const ProxyDataset proxy = sample_proxy(dataset, sc.proxy_classes, sc.proxy_per_class, mv.proxy_seed);
        TrainConfig tc = sc.train;
        tc.seed = derive_seed(sc.seed, "train");
        const WeightSnapshot snap = short_train(net, proxy, tc);
        csv::Writer lw(loss_curve_path);
        lw.raw("iteration,loss");
        for (std::size_t i = 0; i < snap.loss_curve.size(); ++i)
            lw.row({std::to_string(i), csv::fmt(snap.loss_curve[i])});
    }

    RunManifest man;
    man.command = "score";
    man.config = config_json(o);
    man.config["genotype"] = genotype.str();
    man.config["metrics"] = metric_set_name(metrics);
    note_dataset(man, dataset);
    man.master_seed = o.seed;
    man.derived_seeds = {{"score", sc.seed}, {"init", mv.init_seed}, {"proxy", mv.proxy_seed},
                         {"metric_batch", mv.batch_seed}};
    man.outputs = {out_path};
    if (!loss_curve_path.empty()) man.outputs.push_back(loss_curve_path);
    if (mv.lr2_degenerate) man.degenerate_events.push_back("lr2 kernel singular");
    if (mv.ntk_degenerate) man.degenerate_events.push_back("ntk singular");
    man.wall_seconds = now_seconds() - t0;
    man.save(out_path + ".manifest.json");
    std::cout << metric_csv_header() << "\n" << metric_csv_row(mv) << "\n";
    return 0;
}

// ----------------------------- random-search -----------------------------

int cmd_random_search(const CommonOpts& o, int n, const std::string& metrics_text, int repeats,
                      const std::string& out_prefix, const std::string& ground_truth_path) {
    const double t0 = now_seconds();
    const LabeledDataset dataset = open_dataset(o);
    const MacroConfig macro = make_macro(o, dataset);

    SearchConfig cfg;
    cfg.strategy = SearchStrategy::random;
    cfg.n_candidates = n;
    cfg.metrics = parse_metric_set(metrics_text);
    cfg.repeats = repeats;
    cfg.seed = o.seed;
    cfg.jobs = o.jobs;
    cfg.score = make_score_config(o);

    GroundTruthTable gt;
    const bool have_gt = !ground_truth_path.empty();
    if (have_gt) gt = GroundTruthTable::load_csv(ground_truth_path);

    const SearchResult result = random_search(macro, dataset, cfg);

    std::vector<double> selected_acc;
    for (int r = 0; r < repeats; ++r) {
        const RepeatResult& rr = result.repeats[static_cast<std::size_t>(r)];
        const std::string base = out_prefix + "_repeat" + std::to_string(r);
        write_text(base + "_ranks.csv", rr.table.csv());
        csv::Writer rows(base + "_rows.csv");
        rows.raw(metric_csv_header());
        for (const auto& mv : rr.rows) rows.raw(metric_csv_row(mv));

        RunManifest man;
        man.command = "random-search";
        man.config = config_json(o);
        man.config["n"] = n;
        man.config["metrics"] = metric_set_name(cfg.metrics);
        man.config["repeat"] = r;
        man.config["selection"] = rr.selected;
        // per-candidate scores, ranks and aggregates, embedded for one-file reproduction
        nlohmann::json table = nlohmann::json::array();
        for (std::size_t i = 0; i < rr.table.candidates.size(); ++i) {
            nlohmann::json row;
            row["genotype"] = rr.table.candidates[i];
            for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
                row[std::string("score_") + metric_name(cfg.metrics[m])] = rr.table.scores[m][i];
                row[std::string("rank_") + metric_name(cfg.metrics[m])] = rr.table.ranks[m][i];
            }
            row["aggregate"] = rr.table.aggregate[i];
            row["excluded"] = rr.table.excluded[i] != 0;
            table.push_back(row);
        }
        man.config["rank_table"] = table;
        note_dataset(man, dataset);
        man.master_seed = o.seed;
        man.derived_seeds = {{"repeat", rr.repeat_seed}, {"proxy", rr.proxy_seed}, {"metric_batch", rr.batch_seed}};
        man.outputs = {base + "_ranks.csv", base + "_rows.csv"};
        man.degenerate_events = rr.events;
        man.wall_seconds = rr.seconds;
        man.save(base + "_manifest.json");

        if (have_gt) {
            const auto acc = gt.lookup(rr.selected);
            if (acc.has_value()) selected_acc.push_back(*acc);
        }
        std::cout << "repeat " << r << ": selected " << rr.selected << " ("
                  << count_params(CellGenotype::parse(rr.selected), macro) << " params)\n";
    }

    csv::Writer summary(out_prefix + "_summary.csv");
    summary.raw("metric_set,n,repeats,mean_accuracy,std_accuracy,search_seconds,selections");
    double total_seconds = 0.0;
    std::string selections;
    for (const auto& rr : result.repeats) {
        total_seconds += rr.seconds;
        selections += (selections.empty() ? "" : ";") + rr.selected;
    }
    summary.row({metric_set_name(cfg.metrics), csv::fmt(n), csv::fmt(repeats),
                 selected_acc.empty() ? "" : csv::fmt(mean_of(selected_acc)),
                 selected_acc.empty() ? "" : csv::fmt(std_of(selected_acc)), csv::fmt(total_seconds), selections});

    RunManifest man;
    man.command = "random-search";
    man.config = config_json(o);
    man.config["n"] = n;
    man.config["metrics"] = metric_set_name(cfg.metrics);
    man.config["repeats"] = repeats;
    if (have_gt) man.config["ground_truth"] = ground_truth_path;
    note_dataset(man, dataset);
    man.master_seed = o.seed;
    man.outputs = {out_prefix + "_summary.csv"};
    man.wall_seconds = now_seconds() - t0;
    man.save(out_prefix + "_manifest.json");
    return 0;
}

// ----------------------------- prune-search -----------------------------

int cmd_prune_search(const CommonOpts& o, const std::string& metrics_text, int supernet_iters,
                     const std::string& mode, int repeats, const std::string& ops_text,
                     const std::string& out_prefix) {
    const double t0 = now_seconds();
    const LabeledDataset dataset = open_dataset(o);
    const MacroConfig macro = make_macro(o, dataset);

    SearchConfig cfg;
    cfg.strategy = SearchStrategy::prune;
    cfg.metrics = parse_metric_set(metrics_text);
    cfg.supernet_iterations = supernet_iters;
    cfg.prune_mode = parse_prune_mode(mode);
    cfg.jobs = o.jobs;
    cfg.score = make_score_config(o);

    SupernetState initial = SupernetState::all_active();
    if (!ops_text.empty()) {
        // Restrict the operator set, e.g. "--ops 1,2,3".
        for (auto& row : initial.active) row.fill(0);
        for (const auto& tok : csv::split(ops_text, ',')) {
            const int op = std::stoi(tok);
            if (op < 0 || op >= kNumEdgeOps) throw ConfigError("--ops: op id out of range: " + tok);
            for (auto& row : initial.active) row[static_cast<std::size_t>(op)] = 1;
        }
    }

    csv::Writer summary(out_prefix + "_summary.csv");
    summary.raw("repeat,selected_genotype,param_count,rounds,evaluations");
    for (int r = 0; r < repeats; ++r) {
        cfg.seed = derive_seed(o.seed, "repeat", static_cast<std::uint64_t>(r));
        const PruneResult result = prune_search(macro, dataset, cfg, initial);
        const std::string base = out_prefix + "_repeat" + std::to_string(r);
        write_text(base + "_trace.csv", result.trace_csv());

        std::size_t evals = 0;
        for (const auto& round : result.rounds) evals += round.evaluations.size();
        summary.row({std::to_string(r), result.genotype.str(),
                     csv::fmt(count_params(result.genotype, macro)), csv::fmt(static_cast<int>(result.rounds.size())),
                     csv::fmt(static_cast<std::int64_t>(evals))});

        RunManifest man;
        man.command = "prune-search";
        man.config = config_json(o);
        man.config["metrics"] = metric_set_name(cfg.metrics);
        man.config["supernet_iterations"] = supernet_iters;
        man.config["mode"] = mode;
        man.config["repeat"] = r;
        man.config["selection"] = result.genotype.str();
        if (!ops_text.empty()) man.config["ops"] = ops_text;
        note_dataset(man, dataset);
        man.master_seed = o.seed;
        man.derived_seeds = {{"repeat", cfg.seed}, {"proxy", result.proxy_seed}, {"metric_batch", result.batch_seed}};
        man.outputs = {base + "_trace.csv"};
        man.degenerate_events = result.events;
        man.wall_seconds = result.seconds;
        man.save(base + "_manifest.json");
        std::cout << "repeat " << r << ": selected " << result.genotype.str() << " in " << result.rounds.size()
                  << " rounds\n";
    }

    RunManifest man;
    man.command = "prune-search";
    man.config = config_json(o);
    man.config["repeats"] = repeats;
    note_dataset(man, dataset);
    man.master_seed = o.seed;
    man.outputs = {out_prefix + "_summary.csv"};
    man.wall_seconds = now_seconds() - t0;
    man.save(out_prefix + "_manifest.json");
    return 0;
}

// ----------------------------- correlate -----------------------------

int cmd_correlate(const CommonOpts& o, int sample_n, const std::string& metrics_text,
                  const std::string& ground_truth_path, int oracle_epochs, const std::string& out_prefix) {
    const double t0 = now_seconds();
    const LabeledDataset dataset = open_dataset(o);
    const MacroConfig macro = make_macro(o, dataset);
    const auto metrics = parse_metric_set(metrics_text);
    if (!ground_truth_path.empty() && oracle_epochs > 0)
        throw ConfigError("correlate: use either --ground-truth or --oracle-epochs, not both");

    Rng sampler(derive_seed(o.seed, "sample"));
    const auto picks = sampler.sample_without_replacement(CellGenotype::space_size(), sample_n);
    std::vector<CellGenotype> genotypes;
    for (std::int64_t p : picks) genotypes.push_back(CellGenotype::from_index(p));

    const std::uint64_t proxy_seed = derive_seed(o.seed, "proxy");
    const std::uint64_t batch_seed = derive_seed(o.seed, "metric.batch");
    std::vector<MetricVector> rows(genotypes.size());
    std::vector<std::string> events(genotypes.size());
    parallel_for(o.jobs, genotypes.size(), [&](std::size_t i) {
        ScoreConfig sc = make_score_config(o);
        sc.metric_mask = ScoreConfig::mask_of(metrics);
        sc.seed = derive_seed(o.seed, "candidate", static_cast<std::uint64_t>(i));
        sc.proxy_seed = proxy_seed;
        sc.batch_seed = batch_seed;
        try {
            rows[i] = score_network(genotypes[i], macro, dataset, sc);
        } catch (const DivergedError& e) {
            rows[i].genotype = "";  // dropped from the study below
            events[i] = std::string("dropped: ") + e.what();
        }
    });
    std::vector<std::string> degenerate_events;
    {
        std::vector<MetricVector> kept;
        std::vector<CellGenotype> kept_genotypes;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (events[i].empty()) {
                kept.push_back(rows[i]);
                kept_genotypes.push_back(genotypes[i]);
            } else {
                degenerate_events.push_back(events[i]);
            }
        }
        rows = std::move(kept);
        genotypes = std::move(kept_genotypes);
    }

    GroundTruthTable gt;
    const GroundTruthTable* gt_ptr = nullptr;
    if (!ground_truth_path.empty()) {
        gt = GroundTruthTable::load_csv(ground_truth_path);
        gt_ptr = &gt;
    } else if (oracle_epochs > 0) {
        gt.provenance = "oracle:epochs=" + std::to_string(oracle_epochs) + ",seed=" + std::to_string(o.seed);
        std::vector<double> acc(genotypes.size());
        parallel_for(o.jobs, genotypes.size(), [&](std::size_t i) {
            const OracleResult r = oracle_train(genotypes[i], macro, dataset, oracle_epochs,
                                                derive_seed(o.seed, "oracle", static_cast<std::uint64_t>(i)));
            acc[i] = r.accuracy;
        });
        for (std::size_t i = 0; i < genotypes.size(); ++i) gt.accuracy[genotypes[i].str()] = acc[i];
        gt.save_csv(out_prefix + "_ground_truth.csv");
        gt_ptr = &gt;
    }

    const CorrelationReport report = correlation_study(rows, metrics, gt_ptr);

    csv::Writer rows_out(out_prefix + "_rows.csv");
    rows_out.raw(metric_csv_header());
    for (const auto& mv : rows) rows_out.raw(metric_csv_row(mv));
    write_text(out_prefix + "_report.csv", report.to_csv());
    write_text(out_prefix + "_report.json", report.to_json());
    std::cout << report.to_text();

    RunManifest man;
    man.command = "correlate";
    man.config = config_json(o);
    man.config["sample"] = sample_n;
    man.config["metrics"] = metric_set_name(metrics);
    man.config["ground_truth"] = gt_ptr != nullptr ? gt.provenance : "none";
    note_dataset(man, dataset);
    man.master_seed = o.seed;
    man.derived_seeds = {{"proxy", proxy_seed}, {"metric_batch", batch_seed}};
    man.outputs = {out_prefix + "_rows.csv", out_prefix + "_report.csv", out_prefix + "_report.json"};
    man.degenerate_events = degenerate_events;
    man.wall_seconds = now_seconds() - t0;
    man.save(out_prefix + "_manifest.json");
    return 0;
}

// ----------------------------- group-study -----------------------------

int cmd_group_study(const CommonOpts& o, int groups, int n_per_group, const std::string& metrics_text, int repeats,
                    const std::string& ground_truth_path, const std::string& out_prefix) {
    const double t0 = now_seconds();
    const LabeledDataset dataset = open_dataset(o);
    const MacroConfig macro = make_macro(o, dataset);
    const auto metrics = parse_metric_set(metrics_text);

    GroundTruthTable gt;
    const bool have_gt = !ground_truth_path.empty();
    if (have_gt) gt = GroundTruthTable::load_csv(ground_truth_path);

    // The `groups` most populated same-#Param groups.
    auto all_groups = group_by_param(macro);
    std::sort(all_groups.begin(), all_groups.end(), [](const auto& a, const auto& b) {
        if (a.genotypes.size() != b.genotypes.size()) return a.genotypes.size() > b.genotypes.size();
        return a.param_count < b.param_count;
    });
    if (static_cast<int>(all_groups.size()) < groups)
        throw ConfigError("group-study: only " + std::to_string(all_groups.size()) + " distinct #Param groups exist");
    all_groups.resize(static_cast<std::size_t>(groups));
    std::sort(all_groups.begin(), all_groups.end(),
              [](const auto& a, const auto& b) { return a.param_count < b.param_count; });

    csv::Writer out(out_prefix + "_selections.csv");
    out.raw("group_param,group_size,metric,repeat,selected_genotype,selected_score,accuracy");
    for (const auto& group : all_groups) {
        const int n = std::min<int>(n_per_group, static_cast<int>(group.genotypes.size()));
        for (int rep = 0; rep < repeats; ++rep) {
            const std::uint64_t rep_seed = derive_seed(o.seed, "group" + std::to_string(group.param_count), rep);
            Rng sampler(derive_seed(rep_seed, "sample"));
            const auto picks =
                sampler.sample_without_replacement(static_cast<std::int64_t>(group.genotypes.size()), n);
            std::vector<CellGenotype> sample;
            for (std::int64_t p : picks) sample.push_back(group.genotypes[static_cast<std::size_t>(p)]);

            const std::uint64_t proxy_seed = derive_seed(rep_seed, "proxy");
            const std::uint64_t batch_seed = derive_seed(rep_seed, "metric.batch");
            std::vector<MetricVector> rows(sample.size());
            parallel_for(o.jobs, sample.size(), [&](std::size_t i) {
                ScoreConfig sc = make_score_config(o);
                sc.metric_mask = ScoreConfig::mask_of(metrics);
                sc.seed = derive_seed(rep_seed, "candidate", static_cast<std::uint64_t>(i));
                sc.proxy_seed = proxy_seed;
                sc.batch_seed = batch_seed;
                rows[i] = score_network(sample[i], macro, dataset, sc);
            });

            // Each metric selects on its own, as in the same-size-group protocol.
            for (MetricKind m : metrics) {
                std::vector<std::string> ids;
                std::vector<double> scores;
                for (const auto& mv : rows) {
                    ids.push_back(mv.genotype);
                    scores.push_back(mv.score_for(m));
                }
                const RankTable t = aggregate_ranks(ids, {m}, {scores});
                if (t.selected < 0) continue;
                const std::string& sel = t.candidates[static_cast<std::size_t>(t.selected)];
                const auto acc = have_gt ? gt.lookup(sel) : std::nullopt;
                out.row({csv::fmt(group.param_count), csv::fmt(static_cast<std::int64_t>(group.genotypes.size())),
                         metric_name(m), std::to_string(rep), sel,
                         csv::fmt(t.scores[0][static_cast<std::size_t>(t.selected)]),
                         acc.has_value() ? csv::fmt(*acc) : ""});
            }
        }
    }

    RunManifest man;
    man.command = "group-study";
    man.config = config_json(o);
    man.config["groups"] = groups;
    man.config["n_per_group"] = n_per_group;
    man.config["metrics"] = metric_set_name(metrics);
    man.config["repeats"] = repeats;
    note_dataset(man, dataset);
    man.master_seed = o.seed;
    man.outputs = {out_prefix + "_selections.csv"};
    man.wall_seconds = now_seconds() - t0;
    man.save(out_prefix + "_manifest.json");
    return 0;
}

// ----------------------------- sweep -----------------------------

int cmd_sweep(const CommonOpts& base_opts, const std::string& param, const std::string& values_text, int n,
              const std::string& metrics_text, int repeats, const std::string& ground_truth_path,
              const std::string& out_prefix) {
    const double t0 = now_seconds();
    const auto values = csv::split(values_text, ',');
    if (values.empty()) throw ConfigError("sweep: --values must not be empty");

    GroundTruthTable gt;
    const bool have_gt = !ground_truth_path.empty();
    if (have_gt) gt = GroundTruthTable::load_csv(ground_truth_path);

    csv::Writer out(out_prefix + "_sweep.csv");
    out.raw("param,value,repeat,selected_genotype,param_count,accuracy");
    csv::Writer summary(out_prefix + "_sweep_summary.csv");
    summary.raw("param,value,mean_accuracy,std_accuracy");

    for (const auto& value : values) {
        CommonOpts o = base_opts;
        if (param == "iterations") {
            o.iterations = std::stoi(value);
        } else if (param == "classes") {
            o.proxy_classes = std::stoi(value);
        } else if (param == "images") {
            o.proxy_per_class = std::stoi(value);
        } else if (param == "init") {
            o.init = value;
            parse_init_scheme(value);  // validate early
        } else {
            throw ConfigError("sweep: --param must be one of iterations|classes|images|init");
        }

        const LabeledDataset dataset = open_dataset(o);
        const MacroConfig macro = make_macro(o, dataset);
        SearchConfig cfg;
        cfg.n_candidates = n;
        cfg.metrics = parse_metric_set(metrics_text);
        cfg.repeats = repeats;
        cfg.seed = derive_seed(o.seed, "sweep." + param + "=" + value);
        cfg.jobs = o.jobs;
        cfg.score = make_score_config(o);

        const SearchResult result = random_search(macro, dataset, cfg);
        std::vector<double> accs;
        for (int r = 0; r < repeats; ++r) {
            const auto& rr = result.repeats[static_cast<std::size_t>(r)];
            const auto acc = have_gt ? gt.lookup(rr.selected) : std::nullopt;
            if (acc.has_value()) accs.push_back(*acc);
            out.row({param, value, std::to_string(r), rr.selected,
                     csv::fmt(count_params(CellGenotype::parse(rr.selected), macro)),
                     acc.has_value() ? csv::fmt(*acc) : ""});
        }
        summary.row({param, value, accs.empty() ? "" : csv::fmt(mean_of(accs)),
                     accs.empty() ? "" : csv::fmt(std_of(accs))});
    }

    RunManifest man;
    man.command = "sweep";
    man.config = config_json(base_opts);
    man.config["param"] = param;
    man.config["values"] = values_text;
    man.config["n"] = n;
    man.config["metrics"] = metrics_text;
    man.config["repeats"] = repeats;
    man.master_seed = base_opts.seed;
    man.outputs = {out_prefix + "_sweep.csv", out_prefix + "_sweep_summary.csv"};
    man.wall_seconds = now_seconds() - t0;
    man.save(out_prefix + "_manifest.json");
    return 0;
}

// ----------------------------- enumerate -----------------------------

int cmd_enumerate(const CommonOpts& o, const std::string& out_path, std::int64_t filter_param) {
    const LabeledDataset dataset = open_dataset(o);
    const MacroConfig macro = make_macro(o, dataset);
    csv::Writer w(out_path);
    w.raw("genotype,param_count");
    enumerate_space(
        macro, [&](const CellGenotype& g) { w.row({g.str(), csv::fmt(count_params(g, macro))}); },
        filter_param >= 0 ? std::optional<std::int64_t>(filter_param) : std::nullopt);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"short-training NAS metrics laboratory"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.fallthrough(true);
    // flat key-value config, keys scoped by subcommand ("score.seed=41" or a
    // [score] section); explicit flags win on conflict
    app.set_config("--config", "", "key-value config file; flags win");
    app.require_subcommand(1);

    CommonOpts opts;

    // score
    auto* score = app.add_subcommand("score", "score one genotype with the selected metrics");
    std::string genotype_text, score_metrics = "angle,loss,param,lr1,lr2,ntk", score_out = "score.csv";
    std::string loss_curve_out;
    score->add_option("--genotype", genotype_text, "genotype text, e.g. \"3|3|1|0|2|4\"")->required();
    score->add_option("--metrics", score_metrics, "comma-separated metric set");
    score->add_option("--out", score_out, "output CSV path");
    score->add_option("--loss-curve-out", loss_curve_out, "also export the training loss curve");
    add_common(score, opts);

    // random-search
    auto* rs = app.add_subcommand("random-search", "sample N genotypes and select by aggregated ranks");
    int rs_n = 100, rs_repeats = 5;
    std::string rs_metrics = "angle,loss", rs_out = "random_search", rs_gt;
    rs->add_option("--n", rs_n, "candidates per repeat");
    rs->add_option("--metrics", rs_metrics, "comma-separated metric set");
    rs->add_option("--repeats", rs_repeats, "independent repeats");
    rs->add_option("--out", rs_out, "output path prefix");
    rs->add_option("--ground-truth", rs_gt, "genotype,accuracy CSV for reporting");
    add_common(rs, opts);

    // prune-search
    auto* ps = app.add_subcommand("prune-search", "prune a supernet down to one operator per edge");
    int ps_iters = 100, ps_repeats = 1;
    std::string ps_metrics = "angle,loss", ps_mode = "one-per-edge-per-round", ps_out = "prune_search", ps_ops;
    ps->add_option("--metrics", ps_metrics, "comma-separated metric set");
    ps->add_option("--supernet-iters", ps_iters, "short-training iterations per candidate");
    ps->add_option("--mode", ps_mode, "one-per-round | one-per-edge-per-round");
    ps->add_option("--repeats", ps_repeats, "independent repeats");
    ps->add_option("--ops", ps_ops, "restrict the operator set, e.g. \"1,2,3\"");
    ps->add_option("--out", ps_out, "output path prefix");
    add_common(ps, opts);

    // correlate
    auto* corr = app.add_subcommand("correlate", "rank correlations between metrics (and ground truth)");
    int corr_sample = 100, corr_oracle_epochs = 0;
    std::string corr_metrics = "param,lr1,lr2,ntk,angle,loss", corr_gt, corr_out = "correlate";
    corr->add_option("--sample", corr_sample, "genotypes to sample");
    corr->add_option("--metrics", corr_metrics, "comma-separated metric set");
    corr->add_option("--ground-truth", corr_gt, "genotype,accuracy CSV");
    corr->add_option("--oracle-epochs", corr_oracle_epochs, "train sampled genotypes for ground truth");
    corr->add_option("--out", corr_out, "output path prefix");
    add_common(corr, opts);

    // group-study
    auto* gs = app.add_subcommand("group-study", "per-metric selection inside same-#Param groups");
    int gs_groups = 8, gs_n = 100, gs_repeats = 5;
    std::string gs_metrics = "param,lr1,lr2,angle,loss", gs_gt, gs_out = "group_study";
    gs->add_option("--groups", gs_groups, "number of (largest) groups to study");
    gs->add_option("--n-per-group", gs_n, "candidates sampled per group");
    gs->add_option("--metrics", gs_metrics, "comma-separated metric set");
    gs->add_option("--repeats", gs_repeats, "independent repeats");
    gs->add_option("--ground-truth", gs_gt, "genotype,accuracy CSV");
    gs->add_option("--out", gs_out, "output path prefix");
    add_common(gs, opts);

    // sweep
    auto* sw = app.add_subcommand("sweep", "random search across one hyperparameter's values");
    std::string sw_param, sw_values, sw_metrics = "angle,loss", sw_gt, sw_out = "sweep";
    int sw_n = 20, sw_repeats = 3;
    sw->add_option("--param", sw_param, "iterations | classes | images | init")->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required();
    sw->add_option("--n", sw_n, "candidates per repeat");
    sw->add_option("--metrics", sw_metrics, "comma-separated metric set");
    sw->add_option("--repeats", sw_repeats, "independent repeats");
    sw->add_option("--ground-truth", sw_gt, "genotype,accuracy CSV");
    sw->add_option("--out", sw_out, "output path prefix");
    add_common(sw, opts);

    // enumerate
    auto* en = app.add_subcommand("enumerate", "export the whole space as genotype,#Param CSV");
    std::string en_out = "space.csv";
    std::int64_t en_filter = -1;
    en->add_option("--out", en_out, "output CSV path");
    en->add_option("--filter-param", en_filter, "only genotypes with exactly this #Param");
    add_common(en, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the error message
        return code == 0 ? 0 : static_cast<int>(ErrorCategory::usage);
    }

    try {
        if (score->parsed()) return cmd_score(opts, genotype_text, score_metrics, score_out, loss_curve_out);
        if (rs->parsed()) return cmd_random_search(opts, rs_n, rs_metrics, rs_repeats, rs_out, rs_gt);
        if (ps->parsed()) return cmd_prune_search(opts, ps_metrics, ps_iters, ps_mode, ps_repeats, ps_ops, ps_out);
        if (corr->parsed()) return cmd_correlate(opts, corr_sample, corr_metrics, corr_gt, corr_oracle_epochs, corr_out);
        if (gs->parsed()) return cmd_group_study(opts, gs_groups, gs_n, gs_metrics, gs_repeats, gs_gt, gs_out);
        if (sw->parsed())
            return cmd_sweep(opts, sw_param, sw_values, sw_n, sw_metrics, sw_repeats, sw_gt, sw_out);
        if (en->parsed()) return cmd_enumerate(opts, en_out, en_filter);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
