#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnas/dataset.hpp"
#include "stnas/genotype.hpp"
#include "stnas/metrics.hpp"

namespace stnas {

// Per-metric scores, per-metric ranks and their sum for a candidate list.
// Rank convention: higher score -> numerically higher rank; ties share the
// average rank; the aggregate is maximized. Candidates with a NaN score in
// any column are excluded from ranking and selection.
struct RankTable {
    std::vector<std::string> candidates;
    std::vector<MetricKind> metrics;
    std::vector<std::vector<double>> scores;  // [metric][candidate]
    std::vector<std::vector<double>> ranks;   // [metric][candidate]; NaN for excluded
    std::vector<double> aggregate;            // sum over metrics; NaN for excluded
    std::vector<char> excluded;
    int selected = -1;  // -1 when every candidate is excluded

    std::string csv() const;  // header + one row per candidate
};

// Ties on the aggregate break toward the lexicographically smallest candidate id.
RankTable aggregate_ranks(std::vector<std::string> candidates, std::vector<MetricKind> metrics,
                          std::vector<std::vector<double>> scores);

enum class SearchStrategy { random, prune };
enum class PruneMode { one_per_round, one_per_edge_per_round };

inline PruneMode parse_prune_mode(const std::string& s) {
    if (s == "one-per-round") return PruneMode::one_per_round;
    if (s == "one-per-edge-per-round") return PruneMode::one_per_edge_per_round;
    throw ConfigError("unknown prune mode: \"" + s + "\"");
}

struct SearchConfig {
    SearchStrategy strategy = SearchStrategy::random;
    int n_candidates = 100;
    std::vector<MetricKind> metrics = {MetricKind::angle, MetricKind::loss};
    int repeats = 5;
    int supernet_iterations = 100;
    PruneMode prune_mode = PruneMode::one_per_edge_per_round;
    std::uint64_t seed = 0;
    int jobs = 1;
    ScoreConfig score;  // proxy sizes, train config, metric batches

    void validate() const {
        if (n_candidates < 2) throw ConfigError("SearchConfig: need at least 2 candidates");
        if (metrics.empty()) throw ConfigError("SearchConfig: metric set must not be empty");
        if (repeats < 1) throw ConfigError("SearchConfig: repeats must be >= 1");
        if (jobs < 1) throw ConfigError("SearchConfig: jobs must be >= 1");
    }
};

// ----------------------------- random search -----------------------------

struct RepeatResult {
    std::uint64_t repeat_seed = 0;
    std::uint64_t proxy_seed = 0;
    std::uint64_t batch_seed = 0;
    std::vector<MetricVector> rows;  // aligned with table.candidates
    RankTable table;
    std::string selected;  // canonical genotype text
    double seconds = 0.0;
    std::vector<std::string> events;  // divergences and exclusions
};

struct SearchResult {
    std::vector<RepeatResult> repeats;
};

// Samples cfg.n_candidates genotypes uniformly without replacement (from the
// full space, or from `pool` when given), scores each with cfg.metrics, and
// selects the aggregate-rank argmax. One fresh seed per repeat.
SearchResult random_search(const MacroConfig& macro, const LabeledDataset& dataset, const SearchConfig& cfg,
                           const std::vector<CellGenotype>* pool = nullptr);

// ----------------------------- pruning search -----------------------------

struct PruneEvaluation {
    int round = 0;
    int edge = 0;
    EdgeOp op = EdgeOp::zeroize;  // the operator whose removal was evaluated
    MetricVector metrics;
    bool diverged = false;
    double aggregate = 0.0;
    bool removed = false;
};

struct PruneRoundRecord {
    int round = 0;
    std::uint64_t init_seed = 0;
    std::vector<PruneEvaluation> evaluations;
};

struct PruneResult {
    CellGenotype genotype;
    std::vector<PruneRoundRecord> rounds;
    std::uint64_t proxy_seed = 0;
    std::uint64_t batch_seed = 0;
    double seconds = 0.0;
    std::vector<std::string> events;

    std::string trace_csv() const;
};

// Starts from a supernet (default: all operators active) and removes operators
// until one remains per edge. Each round re-initializes from the round's seed;
// every candidate removal is short-trained for cfg.supernet_iterations and the
// removal whose remaining supernet ranks highest is applied. A diverged
// candidate gets the worst rank.
PruneResult prune_search(const MacroConfig& macro, const LabeledDataset& dataset, const SearchConfig& cfg,
                         const SupernetState& initial = SupernetState::all_active());

}  // namespace stnas
