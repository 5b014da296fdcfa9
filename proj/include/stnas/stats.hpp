#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stnas/dataset.hpp"
#include "stnas/genotype.hpp"
#include "stnas/metrics.hpp"

namespace stnas {

// Kendall's tau-b (tie-corrected): (C - D) / sqrt((n0 - n1)(n0 - n2)) over all
// n(n-1)/2 pairs, with n1/n2 the tied-pair counts of x/y. Computed with an
// O(n log n) merge-count; the O(n^2) pair enumeration lives in the tests as
// the independent oracle. Returns nullopt when either vector is entirely tied.
std::optional<double> kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

// Number of tied pairs within one vector (the n1 term).
std::int64_t tied_pair_count(const std::vector<double>& x);

// ----------------------------- parameter groups -----------------------------

struct ParamGroupOfGenotypes {
    std::int64_t param_count = 0;
    std::vector<CellGenotype> genotypes;
};

// The whole space partitioned by exact #Param, ascending.
std::vector<ParamGroupOfGenotypes> group_by_param(const MacroConfig& macro);

// ----------------------------- ground truth -----------------------------

struct GroundTruthTable {
    std::map<std::string, double> accuracy;  // canonical genotype text -> accuracy in [0,100]
    std::string provenance;

    static GroundTruthTable load_csv(const std::string& path);
    void save_csv(const std::string& path) const;
    std::optional<double> lookup(const std::string& genotype) const;
};

// ----------------------------- oracle trainer -----------------------------

struct OracleConfig {
    int batch_size = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double holdout_fraction = 0.2;
    InitScheme init_scheme = InitScheme::kaiming_uniform;
};

struct OracleResult {
    double accuracy = 0.0;  // top-1 percentage on the held-out split
    bool diverged = false;
};

// Desk-scale ground truth: mini-batch training on a deterministic split of the
// dataset for `epochs` passes, evaluated on the held-out part. Divergence is
// recorded as accuracy 0.
OracleResult oracle_train(const CellGenotype& genotype, const MacroConfig& macro, const LabeledDataset& dataset,
                          int epochs, std::uint64_t seed, const OracleConfig& cfg = {});

// ----------------------------- correlation study -----------------------------

struct CorrelationEntry {
    std::string a, b;
    std::optional<double> tau;  // nullopt = undefined (an all-tied vector)
    std::int64_t ties_a = 0, ties_b = 0;
};

struct CorrelationReport {
    std::int64_t n = 0;
    std::vector<CorrelationEntry> entries;

    std::string to_text() const;
    std::string to_csv() const;
    std::string to_json() const;
};

// Tau between each metric's oriented scores and the ground truth (when given)
// plus between every metric pair.
CorrelationReport correlation_study(const std::vector<MetricVector>& rows, const std::vector<MetricKind>& metrics,
                                    const GroundTruthTable* ground_truth);

}  // namespace stnas
