#include "stnas/metrics.hpp"

#include <algorithm>
#include <bit>

#include <Eigen/Dense>

#include "stnas/csv.hpp"

namespace stnas {

const char* metric_name(MetricKind m) {
    switch (m) {
        case MetricKind::angle: return "angle";
        case MetricKind::loss: return "loss";
        case MetricKind::param: return "param";
        case MetricKind::lr1: return "lr1";
        case MetricKind::lr2: return "lr2";
        case MetricKind::ntk: return "ntk";
    }
    return "?";
}

MetricKind parse_metric(const std::string& name) {
    for (int i = 0; i < kNumMetricKinds; ++i) {
        if (name == metric_name(static_cast<MetricKind>(i))) return static_cast<MetricKind>(i);
    }
    throw ConfigError("unknown metric: \"" + name + "\"");
}

std::vector<MetricKind> parse_metric_set(const std::string& text) {
    // accepts "angle,loss,param" or the CSV-safe "angle+loss+param"
    std::string normalized = text;
    std::replace(normalized.begin(), normalized.end(), '+', ',');
    std::vector<MetricKind> out;
    for (const auto& tok : csv::split(normalized, ',')) {
        if (tok.empty()) continue;
        const MetricKind m = parse_metric(tok);
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) throw ConfigError("metric set must not be empty");
    return out;
}

std::string metric_set_name(const std::vector<MetricKind>& set) {
    std::string s;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) s += "+";
        s += metric_name(set[i]);
    }
    return s;
}

unsigned ScoreConfig::mask_of(const std::vector<MetricKind>& set) {
    unsigned mask = 0;
    for (MetricKind m : set) mask |= 1u << static_cast<int>(m);
    return mask;
}

double MetricVector::score_for(MetricKind m) const {
    switch (m) {
        case MetricKind::angle: return -theta_pred;
        case MetricKind::loss: return loss_score;
        case MetricKind::param: return static_cast<double>(param_count);
        case MetricKind::lr1: return lr1;
        case MetricKind::lr2: return lr2;
        case MetricKind::ntk: return ntk_score;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// ----------------------------- angle -----------------------------

double angle_between(const std::vector<double>& v0, const std::vector<double>& vt) {
    if (v0.size() != vt.size()) throw ConfigError("angle: vectors differ in length");
    if (v0.empty()) throw ConfigError("angle: empty vectors");
    double dot = 0.0, n0 = 0.0, nt = 0.0;
    for (std::size_t i = 0; i < v0.size(); ++i) {
        dot += v0[i] * vt[i];
        n0 += v0[i] * v0[i];
        nt += vt[i] * vt[i];
    }
    if (n0 == 0.0 || nt == 0.0) throw NumericError("angle", "zero-norm weight vector");
    const double cosine = std::clamp(dot / (std::sqrt(n0) * std::sqrt(nt)), -1.0, 1.0);
    return std::acos(cosine);
}

// ----------------------------- linear regions -----------------------------

namespace {

int code_compare(const std::uint64_t* a, const std::uint64_t* b, std::int64_t words) {
    for (std::int64_t w = 0; w < words; ++w) {
        if (a[w] != b[w]) return a[w] < b[w] ? -1 : 1;
    }
    return 0;
}

std::int64_t hamming(const std::uint64_t* a, const std::uint64_t* b, std::int64_t words) {
    std::int64_t d = 0;
    for (std::int64_t w = 0; w < words; ++w) d += std::popcount(a[w] ^ b[w]);
    return d;
}

// Sample order sorted by code; makes LR1/LR2 independent of batch order.
std::vector<std::int64_t> canonical_order(const PackedCodes& codes) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(codes.n_samples));
    for (std::int64_t i = 0; i < codes.n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return code_compare(codes.sample(a), codes.sample(b), codes.words_per_sample) < 0;
    });
    return order;
}

}  // namespace

KernelMatrix naswot_kernel(const PackedCodes& codes) {
    KernelMatrix km;
    km.n = codes.n_samples;
    km.n_units = codes.n_units;
    km.k.assign(static_cast<std::size_t>(km.n * km.n), 0.0);
    const auto order = canonical_order(codes);
    for (std::int64_t i = 0; i < km.n; ++i) {
        for (std::int64_t j = i; j < km.n; ++j) {
            const std::int64_t d = hamming(codes.sample(order[static_cast<std::size_t>(i)]),
                                           codes.sample(order[static_cast<std::size_t>(j)]),
                                           codes.words_per_sample);
            const double v = static_cast<double>(codes.n_units - d);
            km.k[static_cast<std::size_t>(i * km.n + j)] = v;
            km.k[static_cast<std::size_t>(j * km.n + i)] = v;
        }
    }
    return km;
}

double metric_lr1(const PackedCodes& codes) {
    if (codes.n_samples == 0 || codes.n_units == 0) return 1.0;  // no taps: one constant pattern
    const auto order = canonical_order(codes);
    std::int64_t distinct = 1;
    for (std::int64_t i = 1; i < codes.n_samples; ++i) {
        if (code_compare(codes.sample(order[static_cast<std::size_t>(i - 1)]),
                         codes.sample(order[static_cast<std::size_t>(i)]), codes.words_per_sample) != 0)
            ++distinct;
    }
    return static_cast<double>(distinct);
}

std::vector<double> symmetric_eigenvalues(const std::vector<double>& matrix, std::int64_t n) {
    Eigen::MatrixXd m(n, n);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) m(i, j) = matrix[static_cast<std::size_t>(i * n + j)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("eig", "symmetric eigensolver failed");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    return out;
}

Lr2Result metric_lr2(const PackedCodes& codes) {
    Lr2Result r;
    r.kernel = naswot_kernel(codes);
    if (codes.n_samples < 2 || codes.n_units == 0) {
        r.degenerate = true;
        return r;
    }
    const auto eig = symmetric_eigenvalues(r.kernel.k, r.kernel.n);
    const double floor = 1e-9 * static_cast<double>(codes.n_units);
    double logdet = 0.0;
    for (double lambda : eig) {
        if (lambda <= floor) {
            r.degenerate = true;
            return r;
        }
        logdet += std::log(lambda);
    }
    r.score = logdet;
    return r;
}

// ----------------------------- NTK -----------------------------

NtkResult ntk_from_gram(const std::vector<double>& gram, std::int64_t n) {
    NtkResult r;
    const auto eig = symmetric_eigenvalues(gram, n);
    const double lambda_max = eig.back();
    const double lambda_min = eig.front();
    if (lambda_max <= 0.0 || lambda_min <= 1e-12 * lambda_max) {
        r.degenerate = true;
        return r;
    }
    r.condition = lambda_max / lambda_min;
    r.score = -r.condition;
    return r;
}

// ----------------------------- full scoring -----------------------------

MetricVector score_network(const CellGenotype& genotype, const MacroConfig& macro, const LabeledDataset& dataset,
                           const ScoreConfig& cfg) {
    MetricVector mv;
    mv.genotype = genotype.str();
    try {
        mv.init_seed = derive_seed(cfg.seed, "net.init");
        mv.proxy_seed = cfg.proxy_seed != 0 ? cfg.proxy_seed : derive_seed(cfg.seed, "proxy");
        mv.batch_seed = cfg.batch_seed != 0 ? cfg.batch_seed : derive_seed(cfg.seed, "metric.batch");

        mv.param_count = count_params(genotype, macro);

        if (cfg.wants(MetricKind::lr1) || cfg.wants(MetricKind::lr2)) {
            NetworkInstance<float> net = build_network<float>(genotype, macro, mv.init_seed, cfg.train.init_scheme);
            const Tensor<float> batch = sample_batch(dataset, cfg.metric_batch, mv.batch_seed);
            const PackedCodes codes = forward_codes(net, batch);
            if (cfg.wants(MetricKind::lr1)) mv.lr1 = metric_lr1(codes);
            if (cfg.wants(MetricKind::lr2)) {
                const Lr2Result lr2 = metric_lr2(codes);
                mv.lr2 = lr2.score;
                mv.lr2_degenerate = lr2.degenerate;
            }
        }

        if (cfg.wants(MetricKind::ntk)) {
            NetworkInstance<double> net =
                build_network<double>(genotype, macro, mv.init_seed, cfg.train.init_scheme);
            double sum = 0.0;
            bool degenerate = false;
            for (int rep = 0; rep < std::max(1, cfg.ntk_repeats); ++rep) {
                const std::uint64_t rep_seed =
                    rep == 0 ? mv.batch_seed : derive_seed(mv.batch_seed, "ntk.rep", static_cast<std::uint64_t>(rep));
                const Tensor<double> batch = sample_batch(dataset, cfg.ntk_batch, rep_seed).cast<double>();
                const NtkResult r = metric_ntk(net.graph, net.input, net.logits, batch);
                if (r.degenerate) {
                    degenerate = true;
                    break;
                }
                sum += r.condition;
            }
            mv.ntk_degenerate = degenerate;
            mv.ntk_score = degenerate ? kDegenerateScore : -(sum / std::max(1, cfg.ntk_repeats));
        }

        if (cfg.wants(MetricKind::angle) || cfg.wants(MetricKind::loss)) {
            // The network trained on the proxy classifies its k classes, so the
            // prediction layer is built with k outputs.
            MacroConfig train_macro = macro;
            train_macro.num_classes = cfg.proxy_classes;
            NetworkInstance<float> net =
                build_network<float>(genotype, train_macro, mv.init_seed, cfg.train.init_scheme);
            const ProxyDataset proxy = sample_proxy(dataset, cfg.proxy_classes, cfg.proxy_per_class, mv.proxy_seed);
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(cfg.seed, "train");
            const WeightSnapshot snap = short_train(net, proxy, tc);
            mv.theta_pred = -metric_angle_pred(snap);
            mv.theta_feat = metric_angle_feat(snap);
            mv.final_loss = snap.final_loss;
            mv.loss_score = metric_loss(snap);
        }
    } catch (const DivergedError& e) {
        throw DivergedError("genotype " + mv.genotype + ": " + e.what(), e.iteration());
    } catch (const Error& e) {
        throw Error(e.category(), "genotype " + mv.genotype + ": " + e.what());
    }
    return mv;
}

// ----------------------------- CSV -----------------------------

std::string metric_csv_header() {
    return "genotype,param_count,lr1,lr2,ntk_score,theta_pred,theta_feat,loss_score,degenerate_flags,seeds";
}

std::string metric_csv_row(const MetricVector& mv) {
    std::string flags;
    if (mv.lr2_degenerate) flags += "lr2";
    if (mv.ntk_degenerate) flags += flags.empty() ? "ntk" : ";ntk";
    const std::string seeds = "init=" + std::to_string(mv.init_seed) + ";proxy=" + std::to_string(mv.proxy_seed) +
                              ";batch=" + std::to_string(mv.batch_seed);
    return csv::join({mv.genotype, csv::fmt(mv.param_count), csv::fmt(mv.lr1), csv::fmt(mv.lr2),
                      csv::fmt(mv.ntk_score), csv::fmt(mv.theta_pred), csv::fmt(mv.theta_feat),
                      csv::fmt(mv.loss_score), flags, seeds});
}

MetricVector metric_from_csv_row(const std::string& line) {
    const auto f = csv::split(line);
    if (f.size() != 10) throw ConfigError("metric CSV row must have 10 fields, got " + std::to_string(f.size()));
    MetricVector mv;
    mv.genotype = f[0];
    mv.param_count = std::stoll(f[1]);
    mv.lr1 = csv::parse_double(f[2]);
    mv.lr2 = csv::parse_double(f[3]);
    mv.ntk_score = csv::parse_double(f[4]);
    mv.theta_pred = csv::parse_double(f[5]);
    mv.theta_feat = csv::parse_double(f[6]);
    mv.loss_score = csv::parse_double(f[7]);
    mv.final_loss = -mv.loss_score;
    for (const auto& tok : csv::split(f[8], ';')) {
        if (tok == "lr2") mv.lr2_degenerate = true;
        if (tok == "ntk") mv.ntk_degenerate = true;
    }
    for (const auto& tok : csv::split(f[9], ';')) {
        const auto kv = csv::split(tok, '=');
        if (kv.size() != 2) continue;
        if (kv[0] == "init") mv.init_seed = std::stoull(kv[1]);
        if (kv[0] == "proxy") mv.proxy_seed = std::stoull(kv[1]);
        if (kv[0] == "batch") mv.batch_seed = std::stoull(kv[1]);
    }
    return mv;
}

}  // namespace stnas
