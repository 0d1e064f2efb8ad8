#include "serfilter/filter.hpp"

#include <cmath>

namespace serfilter {

const char* to_string(Decision d) {
    switch (d) {
        case Decision::accepted: return "accepted";
        case Decision::rejected: return "rejected";
        default: return "undecided";
    }
}

void FilterConfig::validate() const {
    if (!(t >= 0.0)) throw MarkovError("filter config: t must be nonnegative");
    if (l < 1) throw MarkovError("filter config: l must be >= 1");
}

bool intervals_disjoint(double mean_a, double std_a, double mean_b, double std_b, double t) {
    return mean_a + t * std_a < mean_b - t * std_b || mean_b + t * std_b < mean_a - t * std_a;
}

void FilterSession::ModelScore::start(std::size_t state) {
    const double floor = log_prob_floor();
    log_probs.resize(ensemble->samples.size());
    for (std::size_t s = 0; s < log_probs.size(); ++s) {
        double p = ensemble->samples[s].p_init[state];
        log_probs[s] = p > 0.0 ? std::max(std::log(p), floor) : floor;
    }
}

void FilterSession::ModelScore::extend(std::size_t prev, std::size_t state) {
    const double floor = log_prob_floor();
    for (std::size_t s = 0; s < log_probs.size(); ++s) {
        double p = ensemble->samples[s].tr(prev, state);
        double lp = log_probs[s] + (p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity());
        log_probs[s] = lp > floor ? lp : floor;
    }
}

std::pair<double, double> FilterSession::ModelScore::mean_std() const {
    double sum = 0.0, sum_sq = 0.0;
    for (double lp : log_probs) {
        sum += lp;
        sum_sq += lp * lp;
    }
    double n = static_cast<double>(log_probs.size());
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    return {mean, var > 0.0 ? std::sqrt(var) : 0.0};
}

FilterSession::FilterSession(const StateCatalog& catalog, const PosteriorEnsemble& benign,
                             const PosteriorEnsemble& malicious, FilterConfig config)
    : catalog_(&catalog), config_(config) {
    config_.validate();
    if (benign.samples.empty() || malicious.samples.empty())
        throw MarkovError("filter: empty model ensemble");
    benign_.ensemble = &benign;
    malicious_.ensemble = &malicious;
}

Decision FilterSession::step(const FeatureVector& v, bool end) {
    if (decided_) return *decided_;

    std::size_t state = catalog_->encode(v);
    if (length_ == 0) {
        benign_.start(state);
        malicious_.start(state);
    } else {
        benign_.extend(prev_state_, state);
        malicious_.extend(prev_state_, state);
    }
    prev_state_ = state;
    ++length_;

    auto [mb, sb] = benign_.mean_std();
    auto [mm, sm] = malicious_.mean_std();
    bool disjoint = intervals_disjoint(mb, sb, mm, sm, config_.t);

    Decision decision = Decision::undecided;
    if (end) {
        if (disjoint)
            decision = mm > mb ? Decision::rejected : Decision::accepted;
        else
            decision = Decision::rejected;  // not confident enough: fail closed
    } else if (disjoint && length_ >= config_.l && mm > mb) {
        decision = Decision::rejected;  // early abort
    }

    log_.push_back({length_, mb, sb, mm, sm, disjoint, decision});
    if (decision != Decision::undecided) decided_ = decision;
    return decision;
}

RunResult run_stream(const StateCatalog& catalog, const PosteriorEnsemble& benign,
                     const PosteriorEnsemble& malicious, FilterConfig config,
                     std::span<const std::pair<FeatureVector, bool>> events) {
    if (events.empty()) throw MalformedTrace("run_stream: empty trace");
    for (std::size_t i = 0; i < events.size(); ++i) {
        bool is_last = i + 1 == events.size();
        if (events[i].second != is_last)
            throw MalformedTrace("run_stream: end flag must be set exactly on the last event");
    }

    FilterSession session(catalog, benign, malicious, config);
    for (const auto& [v, end] : events) {
        Decision d = session.step(v, end);
        if (d != Decision::undecided)
            return {d, session.length(), session.log()};
    }
    throw MalformedTrace("run_stream: stream ended without a terminal decision");
}

}  // namespace serfilter
