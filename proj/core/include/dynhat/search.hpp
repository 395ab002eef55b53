#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dynhat/design_space.hpp"
#include "dynhat/latency.hpp"
#include "dynhat/operating_library.hpp"

namespace dynhat {

struct SearchSettings {
    int population_size = 50;
    int n_iterations = 15;
    double parent_fraction = 0.25;
    double mutation_prob = 0.3;
    double crossover_fraction = 0.5;
    double mutation_fraction = 0.5;
    std::uint64_t seed = 1;
};

/// Throws std::invalid_argument on out-of-range fields.
void check_settings(const SearchSettings& s);

using LossFn = std::function<double(const SubConfig&)>;
using PredictFn = std::function<double(const SubConfig&)>;

/// Capacity-based stand-in fitness for runs without a trained bank: strictly
/// decreasing in depth, width and attention span, with depth dominant.
/// Scaled to the stock space's maxima.
double analytic_surrogate_loss(const SubConfig& cfg);

struct SearchResult {
    bool feasible = false;
    SubConfig best;
    double best_loss = 0.0;
    double predicted_ms = 0.0;
    /// Best loss observed up to and including each generation (non-increasing).
    std::vector<double> history;
};

/// Evolutionary search for the minimum-loss config whose predicted latency
/// fits the budget. Population stays feasible throughout: infeasible
/// offspring are re-drawn up to a bounded retry count. Deterministic per
/// settings.seed. Returns feasible=false when the rejection-sampling budget
/// finds no feasible config at all.
SearchResult evolutionary_search(const DesignSpace& space, double constraint_ms,
                                 const PredictFn& predict, const LossFn& loss,
                                 const SearchSettings& settings);

/// Enumerates the whole space (throws when cardinality exceeds 1e5), filters
/// by the constraint and returns the argmin; ties break toward the
/// lexicographically smallest canonical serialization.
SearchResult exhaustive_search(const DesignSpace& space, double constraint_ms,
                               const PredictFn& predict, const LossFn& loss);

/// Runs one search per constraint, measures the winners, collapses exact
/// duplicates and sorts by measured latency. Infeasible constraints are
/// recorded as gaps; throws std::runtime_error if every constraint is
/// infeasible.
OperatingLibrary build_operating_library(const DesignSpace& space,
                                         const std::vector<double>& constraints_ms,
                                         const PredictFn& predict, const LossFn& loss,
                                         const MeasureFn& measure,
                                         const SearchSettings& settings);

}  // namespace dynhat
