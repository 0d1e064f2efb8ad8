#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "serfilter/bayes.hpp"
#include "serfilter/feature.hpp"

namespace serfilter {

enum class Decision { accepted, rejected, undecided };

const char* to_string(Decision d);

struct FilterConfig {
    double t = 2.0;                                          // std-deviation multiplier
    std::size_t l = std::numeric_limits<std::size_t>::max(); // min prefix length for early abort

    void validate() const;
};

/// [lo, hi] intervals around each ensemble mean; disjoint means strictly
/// separated (a shared endpoint counts as overlap, which rejects on ties).
bool intervals_disjoint(double mean_a, double std_a, double mean_b, double std_b, double t);

struct StepLog {
    std::size_t index = 0;  // 1-based class index
    double mean_benign = 0.0, std_benign = 0.0;
    double mean_malicious = 0.0, std_malicious = 0.0;
    bool disjoint = false;
    Decision decision = Decision::undecided;
};

/// Per-stream filter session. Consumes one feature vector per class read
/// from the stream; terminal decisions latch. Scores are maintained
/// incrementally (one transition per ensemble sample per step), so a step
/// is O(|samples|) regardless of prefix length.
class FilterSession {
public:
    FilterSession(const StateCatalog& catalog, const PosteriorEnsemble& benign,
                  const PosteriorEnsemble& malicious, FilterConfig config);

    Decision step(const FeatureVector& v, bool end);

    std::optional<Decision> decided() const { return decided_; }
    std::size_t length() const { return length_; }
    const std::vector<StepLog>& log() const { return log_; }

private:
    struct ModelScore {
        const PosteriorEnsemble* ensemble;
        std::vector<double> log_probs;  // one running log-prob per sample
        void start(std::size_t state);
        void extend(std::size_t prev, std::size_t state);
        std::pair<double, double> mean_std() const;
    };

    const StateCatalog* catalog_;
    ModelScore benign_, malicious_;
    FilterConfig config_;
    std::size_t length_ = 0;
    std::size_t prev_state_ = 0;
    std::optional<Decision> decided_;
    std::vector<StepLog> log_;
};

struct RunResult {
    Decision decision = Decision::undecided;
    std::size_t index = 0;  // 1-based class index of the terminal decision
    std::vector<StepLog> log;
};

struct MalformedTrace : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Drives a session over a full trace. Exactly one event must have end=true
/// and it must be last; throws MalformedTrace otherwise.
RunResult run_stream(const StateCatalog& catalog, const PosteriorEnsemble& benign,
                     const PosteriorEnsemble& malicious, FilterConfig config,
                     std::span<const std::pair<FeatureVector, bool>> events);

}  // namespace serfilter
