#include "serfilter/markov.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace serfilter {

namespace {
constexpr double kSumTol = 1e-9;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

void MarkovChain::validate() const {
    if (num_states < 1) throw MarkovError("chain: K must be >= 1");
    if (p_init.size() != num_states || p_tr.size() != num_states * num_states)
        throw MarkovError("chain: shape mismatch");
    double s = 0.0;
    for (double p : p_init) {
        if (p < 0.0 || p > 1.0 || !std::isfinite(p)) throw MarkovError("chain: p_init entry out of [0,1]");
        s += p;
    }
    if (std::abs(s - 1.0) > kSumTol) throw MarkovError("chain: p_init does not sum to 1");
    for (std::size_t i = 0; i < num_states; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < num_states; ++j) {
            double p = tr(i, j);
            if (p < 0.0 || p > 1.0 || !std::isfinite(p)) throw MarkovError("chain: p_tr entry out of [0,1]");
            rs += p;
        }
        if (std::abs(rs - 1.0) > kSumTol) throw MarkovError("chain: p_tr row does not sum to 1");
    }
}

double log_prob(const MarkovChain& chain, std::span<const std::size_t> seq) {
    if (seq.empty()) throw MarkovError("log_prob: empty sequence");
    for (std::size_t x : seq)
        if (x >= chain.num_states) throw MarkovError("log_prob: state index out of range");
    double p0 = chain.p_init[seq[0]];
    double lp = p0 > 0.0 ? std::log(p0) : kNegInf;
    for (std::size_t i = 1; i < seq.size(); ++i) {
        double p = chain.tr(seq[i - 1], seq[i]);
        lp += p > 0.0 ? std::log(p) : kNegInf;
    }
    return lp;
}

MarkovChain empirical_fit(const std::vector<std::vector<std::size_t>>& sequences,
                          std::size_t num_states, double pseudocount) {
    if (num_states < 1) throw MarkovError("empirical_fit: K must be >= 1");
    if (sequences.empty()) throw MarkovError("empirical_fit: no sequences");
    const std::size_t k = num_states;
    std::vector<double> init_counts(k, 0.0);
    std::vector<double> tr_counts(k * k, 0.0);
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        for (std::size_t x : seq)
            if (x >= k) throw MarkovError("empirical_fit: state index out of range");
        init_counts[seq[0]] += 1.0;
        for (std::size_t i = 1; i < seq.size(); ++i) tr_counts[seq[i - 1] * k + seq[i]] += 1.0;
    }

    auto normalize = [&](const double* counts, double* out) {
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += counts[j];
        if (total + pseudocount * static_cast<double>(k) <= 0.0) {
            for (std::size_t j = 0; j < k; ++j) out[j] = 1.0 / static_cast<double>(k);
        } else {
            double denom = total + pseudocount * static_cast<double>(k);
            for (std::size_t j = 0; j < k; ++j) out[j] = (counts[j] + pseudocount) / denom;
        }
    };

    MarkovChain chain;
    chain.num_states = k;
    chain.p_init.resize(k);
    chain.p_tr.resize(k * k);
    normalize(init_counts.data(), chain.p_init.data());
    for (std::size_t i = 0; i < k; ++i) normalize(&tr_counts[i * k], &chain.p_tr[i * k]);
    chain.validate();
    return chain;
}

nlohmann::json MarkovChain::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < num_states; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < num_states; ++j) row.push_back(tr(i, j));
        rows.push_back(std::move(row));
    }
    return nlohmann::json{{"p_init", p_init}, {"p_tr", std::move(rows)}};
}

MarkovChain MarkovChain::from_json(const nlohmann::json& j) {
    MarkovChain c;
    c.p_init = j.at("p_init").get<std::vector<double>>();
    c.num_states = c.p_init.size();
    c.p_tr.reserve(c.num_states * c.num_states);
    for (const auto& row : j.at("p_tr"))
        for (const auto& v : row) c.p_tr.push_back(v.get<double>());
    c.validate();
    return c;
}

}  // namespace serfilter
