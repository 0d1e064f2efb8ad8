#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace serfilter {

struct MarkovError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// First-order Markov chain over K states (state K-1 is typically the
/// catalog's OTHER state). Rows of p_tr are row-stochastic; p_init sums to 1.
struct MarkovChain {
    std::size_t num_states = 0;
    std::vector<double> p_init;  // length K
    std::vector<double> p_tr;    // K*K, row-major

    double tr(std::size_t i, std::size_t j) const { return p_tr[i * num_states + j]; }
    double& tr(std::size_t i, std::size_t j) { return p_tr[i * num_states + j]; }

    // Throws MarkovError when an invariant is violated (tolerance 1e-9).
    void validate() const;

    nlohmann::json to_json() const;
    static MarkovChain from_json(const nlohmann::json& j);
};

/// ln p_init(x1) + sum ln p_tr(x_{i-1}, x_i); -inf when any factor is zero.
/// Throws MarkovError on an empty sequence or an out-of-range index.
double log_prob(const MarkovChain& chain, std::span<const std::size_t> seq);

/// Frequency estimate with optional additive smoothing. Rows (and p_init)
/// with zero total count fall back to the uniform distribution, which is the
/// Dirichlet(1,...,1) prior mean.
MarkovChain empirical_fit(const std::vector<std::vector<std::size_t>>& sequences,
                          std::size_t num_states, double pseudocount = 0.0);

}  // namespace serfilter
