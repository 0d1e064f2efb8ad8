#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serfilter/bayes.hpp"
#include "serfilter/feature.hpp"
#include "serfilter/filter.hpp"

namespace serfilter {

struct LabeledTrace {
    bool malicious = false;
    std::vector<std::string> classes;
    std::string source;
};

struct Dataset {
    std::vector<LabeledTrace> traces;
    std::map<std::string, FeatureVector> feature_map;

    // Missing names resolve to the all-false vector (runtime must always
    // produce a vector).
    FeatureVector vector_for(const std::string& class_name) const;
};

// JSONL of {"label":...,"classes":[...],"source":...}; feature map is a
// JSON object {"name": "01010101", ...}.
void save_dataset(const Dataset& d, const std::filesystem::path& traces_path,
                  const std::filesystem::path& feature_map_path);
Dataset load_dataset(const std::filesystem::path& traces_path,
                     const std::filesystem::path& feature_map_path);
std::map<std::string, FeatureVector> load_feature_map(const std::filesystem::path& path);
void save_feature_map(const std::map<std::string, FeatureVector>& m,
                      const std::filesystem::path& path);

enum class Estimator { bayesian, empirical, conjugate };

Estimator parse_estimator(const std::string& s);
const char* to_string(Estimator e);

struct EvalConfig {
    Estimator estimator = Estimator::bayesian;
    FilterConfig filter;        // t and l
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    MHConfig mh;                // bayesian estimator settings
    double pseudocount = 0.0;   // empirical estimator smoothing
    std::size_t max_train = 0;  // 0 = use all training traces per fold
};

struct FoldResult {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool zero_predicted_positives = false;
};

struct MetricsReport {
    std::vector<FoldResult> folds;
    double precision_mean = 0, precision_std = 0;  // percent
    double recall_mean = 0, recall_std = 0;        // percent
    double f1_mean = 0, f1_std = 0;                // ratio
    double mean_decision_index = 0;                // classes read before the verdict
    double inference_seconds = 0;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified k-fold split; deterministic given seed. Throws MarkovError
/// when either label has fewer than k traces.
std::vector<Fold> kfold_split(const Dataset& dataset, std::size_t k, std::uint64_t seed);

/// Trained models for one fold: shared catalog plus the two ensembles.
struct TrainedModels {
    StateCatalog catalog;
    PosteriorEnsemble benign;
    PosteriorEnsemble malicious;
};

TrainedModels train_models(const Dataset& dataset, const std::vector<std::size_t>& train_idx,
                           const EvalConfig& config);

/// Runs the filter over one test trace; unparseable or empty traces count
/// as rejected (fail closed). Returns (rejected, decision index).
std::pair<bool, std::size_t> classify_trace(const TrainedModels& models, const Dataset& dataset,
                                            const LabeledTrace& trace, const FilterConfig& config);

/// Full k-fold protocol. Rejected = predicted malicious; malicious is the
/// positive class. Mean +- population std across folds.
MetricsReport evaluate(const Dataset& dataset, const EvalConfig& config);

struct SweepRow {
    std::size_t l = 0;  // SIZE_MAX printed as "inf"
    double precision = 0, recall = 0;
    double mean_decision_index = 0;
};

std::vector<SweepRow> sweep_l(const Dataset& dataset, EvalConfig config,
                              const std::vector<std::size_t>& l_values);

/// Planted-chain corpus generator: samples labeled state sequences from the
/// two chains and renders them as traces of synthetic class names.
struct SynthSpec {
    StateCatalog catalog;  // shared by both chains
    MarkovChain benign;
    MarkovChain malicious;
};

/// Desk-scale default: distinct benign/malicious transition structures over
/// a handful of states, mirroring corpus shape (benign traces long,
/// malicious traces short).
SynthSpec default_synth_spec();

Dataset synth_generate(const SynthSpec& spec, std::size_t n_benign, std::size_t n_malicious,
                       double benign_mean_length, double malicious_mean_length,
                       std::uint64_t seed);

}  // namespace serfilter
