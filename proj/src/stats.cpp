#include "stnas/stats.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "stnas/csv.hpp"
#include "stnas/network.hpp"
#include "stnas/trainer.hpp"

namespace stnas {

namespace {

// Pairs (i < j) with y[i] > y[j], counted by merge sort. The input must be
// pre-sorted so that equal keys arrive in non-decreasing y order.
std::int64_t count_inversions(std::vector<double>& y) {
    const std::size_t n = y.size();
    std::vector<double> buf(n);
    std::int64_t swaps = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
            const std::size_t mid = lo + width;
            const std::size_t hi = std::min(lo + 2 * width, n);
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (y[j] < y[i]) {
                    swaps += static_cast<std::int64_t>(mid - i);
                    buf[k++] = y[j++];
                } else {
                    buf[k++] = y[i++];
                }
            }
            while (i < mid) buf[k++] = y[i++];
            while (j < hi) buf[k++] = y[j++];
            std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
                      y.begin() + static_cast<std::ptrdiff_t>(lo));
        }
    }
    return swaps;
}

std::int64_t run_pairs(std::int64_t run) { return run * (run - 1) / 2; }

}  // namespace

std::int64_t tied_pair_count(const std::vector<double>& x) {
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    std::int64_t ties = 0, run = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] == sorted[i - 1]) {
            ++run;
        } else {
            ties += run_pairs(run);
            run = 1;
        }
    }
    return ties + run_pairs(run);
}

std::optional<double> kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw ConfigError("kendall_tau: vectors differ in length");
    if (n < 2) throw ConfigError("kendall_tau: need at least 2 observations");
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) throw ConfigError("kendall_tau: NaN observation");
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    // Tie counts from runs in the sorted sequences.
    std::int64_t n1 = 0, n3 = 0;
    {
        std::int64_t run_x = 1, run_xy = 1;
        for (std::size_t i = 1; i < n; ++i) {
            const std::size_t prev = order[i - 1], cur = order[i];
            if (x[cur] == x[prev]) {
                ++run_x;
                if (y[cur] == y[prev]) {
                    ++run_xy;
                } else {
                    n3 += run_pairs(run_xy);
                    run_xy = 1;
                }
            } else {
                n1 += run_pairs(run_x);
                n3 += run_pairs(run_xy);
                run_x = run_xy = 1;
            }
        }
        n1 += run_pairs(run_x);
        n3 += run_pairs(run_xy);
    }
    const std::int64_t n2 = tied_pair_count(y);
    const std::int64_t n0 = static_cast<std::int64_t>(n) * (static_cast<std::int64_t>(n) - 1) / 2;

    std::vector<double> y_in_x_order(n);
    for (std::size_t i = 0; i < n; ++i) y_in_x_order[i] = y[order[i]];
    const std::int64_t discordant = count_inversions(y_in_x_order);

    const std::int64_t c_minus_d = n0 - n1 - n2 + n3 - 2 * discordant;
    const double denom_sq = static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2);
    if (denom_sq <= 0.0) return std::nullopt;  // an all-tied vector: tau undefined
    return static_cast<double>(c_minus_d) / std::sqrt(denom_sq);
}

// ----------------------------- parameter groups -----------------------------

std::vector<ParamGroupOfGenotypes> group_by_param(const MacroConfig& macro) {
    std::map<std::int64_t, std::vector<CellGenotype>> by_count;
    enumerate_space(macro, [&](const CellGenotype& g) { by_count[count_params(g, macro)].push_back(g); });
    std::vector<ParamGroupOfGenotypes> out;
    out.reserve(by_count.size());
    for (auto& [count, genotypes] : by_count) out.push_back({count, std::move(genotypes)});
    return out;
}

// ----------------------------- ground truth -----------------------------

GroundTruthTable GroundTruthTable::load_csv(const std::string& path) {
    GroundTruthTable t;
    t.provenance = "csv:" + path;
    const auto rows = csv::read_table(path);
    if (rows.empty()) throw FormatError(path + ": empty ground-truth file", 0);
    std::size_t start = 0;
    if (!rows[0].empty() && rows[0][0] == "genotype") start = 1;  // header row
    for (std::size_t r = start; r < rows.size(); ++r) {
        if (rows[r].size() != 2)
            throw ConfigError(path + ": ground-truth rows must be \"genotype,accuracy\" (row " +
                              std::to_string(r) + ")");
        const CellGenotype g = CellGenotype::parse(rows[r][0]);  // validates the text form
        const double acc = csv::parse_double(rows[r][1]);
        if (!(acc >= 0.0 && acc <= 100.0))
            throw ConfigError(path + ": accuracy out of [0,100] at row " + std::to_string(r));
        t.accuracy[g.str()] = acc;
    }
    return t;
}

void GroundTruthTable::save_csv(const std::string& path) const {
    csv::Writer w(path);
    w.raw("genotype,accuracy");
    for (const auto& [g, acc] : accuracy) w.row({g, csv::fmt(acc)});
}

std::optional<double> GroundTruthTable::lookup(const std::string& genotype) const {
    const auto it = accuracy.find(genotype);
    if (it == accuracy.end()) return std::nullopt;
    return it->second;
}

// ----------------------------- oracle trainer -----------------------------

OracleResult oracle_train(const CellGenotype& genotype, const MacroConfig& macro, const LabeledDataset& dataset,
                          int epochs, std::uint64_t seed, const OracleConfig& cfg) {
    if (epochs < 1) throw ConfigError("oracle_train: epochs must be >= 1");
    const std::int64_t n = dataset.size();
    std::int64_t holdout = static_cast<std::int64_t>(std::floor(cfg.holdout_fraction * static_cast<double>(n)));
    holdout = std::max<std::int64_t>(1, std::min(holdout, n - 1));

    std::vector<std::int64_t> indices(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
    Rng split_rng(derive_seed(seed, "oracle.split"));
    split_rng.shuffle(indices);
    const std::vector<std::int64_t> hold(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(holdout));
    const std::vector<std::int64_t> train(indices.begin() + static_cast<std::ptrdiff_t>(holdout), indices.end());

    auto net = build_network<float>(genotype, macro, derive_seed(seed, "oracle.init"), cfg.init_scheme);

    const Tensor<float> train_images = dataset.gather(train);
    const std::vector<int> train_labels = dataset.gather_labels(train);
    const std::int64_t batches_per_epoch =
        (static_cast<std::int64_t>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;

    TrainConfig tc;
    tc.iterations = static_cast<int>(batches_per_epoch) * epochs;
    tc.lr = cfg.lr;
    tc.momentum = cfg.momentum;
    tc.weight_decay = cfg.weight_decay;
    tc.batch_size = cfg.batch_size;
    tc.seed = derive_seed(seed, "oracle.train");

    OracleResult result;
    try {
        detail::train_loop(net, train_images, train_labels, tc);
    } catch (const DivergedError&) {
        result.diverged = true;
        result.accuracy = 0.0;
        return result;
    }

    // Top-1 on the held-out split, evaluated in manageable chunks.
    std::int64_t correct = 0;
    const std::int64_t chunk = 256;
    for (std::size_t lo = 0; lo < hold.size(); lo += static_cast<std::size_t>(chunk)) {
        const std::size_t hi = std::min(hold.size(), lo + static_cast<std::size_t>(chunk));
        const std::vector<std::int64_t> part(hold.begin() + static_cast<std::ptrdiff_t>(lo),
                                             hold.begin() + static_cast<std::ptrdiff_t>(hi));
        const Tensor<float>& logits = net.forward_logits(dataset.gather(part));
        const std::int64_t classes = logits.dim(1);
        for (std::size_t i = 0; i < part.size(); ++i) {
            std::int64_t best = 0;
            for (std::int64_t c = 1; c < classes; ++c) {
                if (logits[static_cast<std::int64_t>(i) * classes + c] >
                    logits[static_cast<std::int64_t>(i) * classes + best])
                    best = c;
            }
            if (static_cast<int>(best) == dataset.labels[static_cast<std::size_t>(part[i])]) ++correct;
        }
    }
    result.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(hold.size());
    return result;
}

// ----------------------------- correlation study -----------------------------

namespace {

CorrelationEntry make_entry(const std::string& a, const std::string& b, const std::vector<double>& va,
                            const std::vector<double>& vb) {
    CorrelationEntry e;
    e.a = a;
    e.b = b;
    e.tau = kendall_tau(va, vb);
    e.ties_a = tied_pair_count(va);
    e.ties_b = tied_pair_count(vb);
    return e;
}

}  // namespace

CorrelationReport correlation_study(const std::vector<MetricVector>& rows, const std::vector<MetricKind>& metrics,
                                    const GroundTruthTable* ground_truth) {
    if (rows.size() < 2) throw ConfigError("correlation_study: need at least 2 scored networks");
    CorrelationReport report;
    report.n = static_cast<std::int64_t>(rows.size());

    std::vector<std::vector<double>> cols(metrics.size(), std::vector<double>(rows.size()));
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        for (std::size_t i = 0; i < rows.size(); ++i) cols[m][i] = rows[i].score_for(metrics[m]);
    }

    if (ground_truth != nullptr) {
        std::vector<double> acc(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto a = ground_truth->lookup(rows[i].genotype);
            if (!a.has_value())
                throw ConfigError("correlation_study: no ground truth for genotype " + rows[i].genotype);
            acc[i] = *a;
        }
        for (std::size_t m = 0; m < metrics.size(); ++m)
            report.entries.push_back(make_entry(metric_name(metrics[m]), "accuracy", cols[m], acc));
    }
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        for (std::size_t k = m + 1; k < metrics.size(); ++k)
            report.entries.push_back(make_entry(metric_name(metrics[m]), metric_name(metrics[k]), cols[m], cols[k]));
    }
    return report;
}

std::string CorrelationReport::to_text() const {
    std::string out = "kendall tau over " + std::to_string(n) + " networks\n";
    out += "  pair                          tau        tied pairs\n";
    for (const auto& e : entries) {
        char buf[128];
        const std::string pair = e.a + " vs " + e.b;
        if (e.tau.has_value()) {
            std::snprintf(buf, sizeof(buf), "  %-28s %+8.4f   %lld/%lld\n", pair.c_str(), *e.tau,
                          static_cast<long long>(e.ties_a), static_cast<long long>(e.ties_b));
        } else {
            std::snprintf(buf, sizeof(buf), "  %-28s %8s   %lld/%lld\n", pair.c_str(), "undef",
                          static_cast<long long>(e.ties_a), static_cast<long long>(e.ties_b));
        }
        out += buf;
    }
    return out;
}

std::string CorrelationReport::to_csv() const {
    std::string out = "metric_a,metric_b,tau,ties_a,ties_b,n\n";
    for (const auto& e : entries) {
        out += csv::join({e.a, e.b, e.tau.has_value() ? csv::fmt(*e.tau) : "nan", csv::fmt(e.ties_a),
                          csv::fmt(e.ties_b), csv::fmt(n)}) +
               "\n";
    }
    return out;
}

std::string CorrelationReport::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["pairs"] = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json p;
        p["a"] = e.a;
        p["b"] = e.b;
        if (e.tau.has_value())
            p["tau"] = *e.tau;
        else
            p["tau"] = nullptr;
        p["ties_a"] = e.ties_a;
        p["ties_b"] = e.ties_b;
        j["pairs"].push_back(p);
    }
    return j.dump(2);
}

}  // namespace stnas
