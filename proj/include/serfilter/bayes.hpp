#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "serfilter/markov.hpp"

namespace serfilter {

/// Sufficient statistics for posterior inference over a chain's parameters.
struct CountSummary {
    std::size_t num_states = 0;
    std::vector<std::uint64_t> init_counts;  // length K
    std::vector<std::uint64_t> tr_counts;    // K*K, row-major

    std::uint64_t tr(std::size_t i, std::size_t j) const { return tr_counts[i * num_states + j]; }
};

CountSummary count_transitions(const std::vector<std::vector<std::size_t>>& sequences,
                               std::size_t num_states);

struct MHConfig {
    std::size_t draws = 5000;        // total sampler iterations
    std::size_t keep = 500;          // trailing samples retained
    double proposal_scale = 0.8;     // random-walk step in unconstrained space
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static MHConfig from_json(const nlohmann::json& j);
};

/// Set of chains sampled from the posterior; spread across samples supplies
/// the confidence intervals of the runtime filter.
struct PosteriorEnsemble {
    std::vector<MarkovChain> samples;

    static PosteriorEnsemble from_single(MarkovChain chain);

    nlohmann::json to_json() const;
    static PosteriorEnsemble from_json(const nlohmann::json& j);
};

/// Metropolis-Hastings over the simplex rows (p_init plus each p_tr row),
/// Dirichlet(alpha) prior per row, multinomial likelihood in the counts.
/// Rows are updated one at a time via a Gaussian random walk in softmax
/// coordinates. Returns the last `keep` states of the chain; deterministic
/// given config.seed. acceptance_rate, when non-null, receives the fraction
/// of accepted row proposals.
PosteriorEnsemble mh_sample(const CountSummary& counts, std::span<const double> alpha,
                            const MHConfig& config, double* acceptance_rate = nullptr);

/// Exact sampler for the same posterior: each row is Dirichlet(alpha + counts).
/// Used both as a fast path and as the oracle the MH sampler is tested against.
PosteriorEnsemble conjugate_sample(const CountSummary& counts, std::span<const double> alpha,
                                   std::size_t keep, std::uint64_t seed);

/// Closed-form posterior mean chain: row i is (alpha + counts_i) normalized.
MarkovChain conjugate_mean(const CountSummary& counts, std::span<const double> alpha);

/// Floor applied to -inf log-probabilities before aggregation.
double log_prob_floor();

/// Mean and population std of log_prob over the ensemble's samples.
std::pair<double, double> ensemble_score(const PosteriorEnsemble& ensemble,
                                         std::span<const std::size_t> seq);

}  // namespace serfilter
