#include "serfilter/bayes.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace serfilter {

CountSummary count_transitions(const std::vector<std::vector<std::size_t>>& sequences,
                               std::size_t num_states) {
    CountSummary c;
    c.num_states = num_states;
    c.init_counts.assign(num_states, 0);
    c.tr_counts.assign(num_states * num_states, 0);
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        for (std::size_t x : seq)
            if (x >= num_states) throw MarkovError("count: state index out of range");
        ++c.init_counts[seq[0]];
        for (std::size_t i = 1; i < seq.size(); ++i) ++c.tr_counts[seq[i - 1] * num_states + seq[i]];
    }
    return c;
}

void MHConfig::validate() const {
    if (keep == 0 || keep > draws) throw MarkovError("mh config: need 0 < keep <= draws");
    if (!(proposal_scale > 0.0)) throw MarkovError("mh config: proposal_scale must be positive");
}

nlohmann::json MHConfig::to_json() const {
    return nlohmann::json{{"draws", draws},
                          {"keep", keep},
                          {"proposal_scale", proposal_scale},
                          {"seed", seed}};
}

MHConfig MHConfig::from_json(const nlohmann::json& j) {
    MHConfig c;
    c.draws = j.at("draws").get<std::size_t>();
    c.keep = j.at("keep").get<std::size_t>();
    c.proposal_scale = j.at("proposal_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

PosteriorEnsemble PosteriorEnsemble::from_single(MarkovChain chain) {
    PosteriorEnsemble e;
    e.samples.push_back(std::move(chain));
    return e;
}

nlohmann::json PosteriorEnsemble::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : samples) arr.push_back(s.to_json());
    return arr;
}

PosteriorEnsemble PosteriorEnsemble::from_json(const nlohmann::json& j) {
    PosteriorEnsemble e;
    for (const auto& s : j) e.samples.push_back(MarkovChain::from_json(s));
    return e;
}

namespace {

void check_alpha(std::span<const double> alpha, std::size_t k) {
    if (alpha.size() != k) throw MarkovError("alpha: length mismatch");
    for (double a : alpha)
        if (!(a > 0.0)) throw MarkovError("alpha: concentration parameters must be positive");
}

// One simplex row tracked in softmax coordinates with the last coordinate
// pinned to zero. With that parameterization the log Jacobian is
// sum_i ln x_i, so the unconstrained target collapses to
// sum_i (alpha_i + c_i) ln x_i.
struct RowState {
    std::vector<double> z;  // length K, z[K-1] fixed at 0
    std::vector<double> x;  // softmax(z)
    double log_target = 0.0;
};

void softmax(const std::vector<double>& z, std::vector<double>& x) {
    double zmax = 0.0;
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        x[i] = std::exp(z[i] - zmax);
        sum += x[i];
    }
    for (double& v : x) v /= sum;
}

double row_log_target(const std::vector<double>& x, std::span<const double> alpha,
                      const std::uint64_t* counts) {
    double lt = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        lt += (alpha[i] + static_cast<double>(counts[i])) * std::log(x[i]);
    return lt;
}

double sample_dirichlet(std::span<const double> conc, std::vector<double>& out,
                        std::mt19937_64& rng) {
    double sum = 0.0;
    for (std::size_t i = 0; i < conc.size(); ++i) {
        std::gamma_distribution<double> g(conc[i], 1.0);
        out[i] = g(rng);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return sum;
}

}  // namespace

PosteriorEnsemble mh_sample(const CountSummary& counts, std::span<const double> alpha,
                            const MHConfig& config, double* acceptance_rate) {
    config.validate();
    const std::size_t k = counts.num_states;
    check_alpha(alpha, k);

    PosteriorEnsemble out;
    out.samples.reserve(config.keep);

    if (k == 1) {
        // Single point on the 0-simplex; the posterior is degenerate.
        MarkovChain c;
        c.num_states = 1;
        c.p_init = {1.0};
        c.p_tr = {1.0};
        out.samples.assign(config.keep, c);
        if (acceptance_rate) *acceptance_rate = 1.0;
        return out;
    }

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> step(0.0, config.proposal_scale);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Row 0 is p_init, rows 1..K are the transition rows.
    const std::size_t num_rows = k + 1;
    std::vector<RowState> rows(num_rows);
    std::vector<const std::uint64_t*> row_counts(num_rows);
    row_counts[0] = counts.init_counts.data();
    for (std::size_t i = 0; i < k; ++i) row_counts[i + 1] = &counts.tr_counts[i * k];
    for (std::size_t r = 0; r < num_rows; ++r) {
        rows[r].z.assign(k, 0.0);
        rows[r].x.assign(k, 0.0);
        softmax(rows[r].z, rows[r].x);
        rows[r].log_target = row_log_target(rows[r].x, alpha, row_counts[r]);
    }

    std::vector<double> prop_z(k), prop_x(k);
    std::uint64_t accepted = 0, proposed = 0;
    const std::size_t burn_in = config.draws - config.keep;
    // Several random-walk updates per row per recorded draw: the retained
    // trailing samples stay consecutive (no thinning of the output chain)
    // while successive draws decorrelate enough for stable ensemble means.
    constexpr std::size_t row_updates_per_draw = 25;

    for (std::size_t iter = 0; iter < config.draws; ++iter) {
        for (std::size_t r = 0; r < num_rows; ++r) {
            RowState& row = rows[r];
            for (std::size_t upd = 0; upd < row_updates_per_draw; ++upd) {
                for (std::size_t i = 0; i + 1 < k; ++i) prop_z[i] = row.z[i] + step(rng);
                prop_z[k - 1] = 0.0;
                softmax(prop_z, prop_x);
                double lt = row_log_target(prop_x, alpha, row_counts[r]);
                ++proposed;
                if (std::log(unif(rng)) < lt - row.log_target) {
                    row.z = prop_z;
                    row.x = prop_x;
                    row.log_target = lt;
                    ++accepted;
                }
            }
        }
        if (iter >= burn_in) {
            MarkovChain c;
            c.num_states = k;
            c.p_init = rows[0].x;
            c.p_tr.reserve(k * k);
            for (std::size_t i = 0; i < k; ++i)
                c.p_tr.insert(c.p_tr.end(), rows[i + 1].x.begin(), rows[i + 1].x.end());
            out.samples.push_back(std::move(c));
        }
    }

    if (acceptance_rate)
        *acceptance_rate = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    return out;
}

PosteriorEnsemble conjugate_sample(const CountSummary& counts, std::span<const double> alpha,
                                   std::size_t keep, std::uint64_t seed) {
    const std::size_t k = counts.num_states;
    check_alpha(alpha, k);
    if (keep == 0) throw MarkovError("conjugate_sample: keep must be positive");

    std::mt19937_64 rng(seed);
    std::vector<double> conc(k);
    PosteriorEnsemble out;
    out.samples.reserve(keep);
    for (std::size_t s = 0; s < keep; ++s) {
        MarkovChain c;
        c.num_states = k;
        c.p_init.assign(k, 1.0);
        c.p_tr.assign(k * k, 1.0);
        if (k > 1) {
            for (std::size_t i = 0; i < k; ++i)
                conc[i] = alpha[i] + static_cast<double>(counts.init_counts[i]);
            sample_dirichlet(conc, c.p_init, rng);
            std::vector<double> row(k);
            for (std::size_t r = 0; r < k; ++r) {
                for (std::size_t i = 0; i < k; ++i)
                    conc[i] = alpha[i] + static_cast<double>(counts.tr_counts[r * k + i]);
                sample_dirichlet(conc, row, rng);
                std::copy(row.begin(), row.end(), c.p_tr.begin() + static_cast<std::ptrdiff_t>(r * k));
            }
        }
        out.samples.push_back(std::move(c));
    }
    return out;
}

MarkovChain conjugate_mean(const CountSummary& counts, std::span<const double> alpha) {
    const std::size_t k = counts.num_states;
    check_alpha(alpha, k);
    MarkovChain c;
    c.num_states = k;
    c.p_init.resize(k);
    c.p_tr.resize(k * k);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += alpha[i] + static_cast<double>(counts.init_counts[i]);
    for (std::size_t i = 0; i < k; ++i)
        c.p_init[i] = (alpha[i] + static_cast<double>(counts.init_counts[i])) / denom;
    for (std::size_t r = 0; r < k; ++r) {
        denom = 0.0;
        for (std::size_t i = 0; i < k; ++i) denom += alpha[i] + static_cast<double>(counts.tr_counts[r * k + i]);
        for (std::size_t i = 0; i < k; ++i)
            c.tr(r, i) = (alpha[i] + static_cast<double>(counts.tr_counts[r * k + i])) / denom;
    }
    return c;
}

double log_prob_floor() { return std::log(std::numeric_limits<double>::min()); }

std::pair<double, double> ensemble_score(const PosteriorEnsemble& ensemble,
                                         std::span<const std::size_t> seq) {
    if (ensemble.samples.empty()) throw MarkovError("ensemble_score: empty ensemble");
    const double floor = log_prob_floor();
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& chain : ensemble.samples) {
        double lp = log_prob(chain, seq);
        if (lp < floor) lp = floor;
        sum += lp;
        sum_sq += lp * lp;
    }
    double n = static_cast<double>(ensemble.samples.size());
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    return {mean, var > 0.0 ? std::sqrt(var) : 0.0};
}

}  // namespace serfilter
