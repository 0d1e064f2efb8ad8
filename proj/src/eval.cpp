#include "serfilter/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace serfilter {

FeatureVector Dataset::vector_for(const std::string& class_name) const {
    auto it = feature_map.find(class_name);
    return it != feature_map.end() ? it->second : FeatureVector::all_false();
}

void save_feature_map(const std::map<std::string, FeatureVector>& m,
                      const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, v] : m) j[name] = v.to_string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::map<std::string, FeatureVector> load_feature_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    std::map<std::string, FeatureVector> m;
    for (const auto& [name, s] : j.items()) {
        auto v = FeatureVector::parse(s.get<std::string>());
        if (!v) throw std::runtime_error("feature map: bad vector for " + name);
        m.emplace(name, *v);
    }
    return m;
}

void save_dataset(const Dataset& d, const std::filesystem::path& traces_path,
                  const std::filesystem::path& feature_map_path) {
    std::ofstream out(traces_path);
    if (!out) throw std::runtime_error("cannot write " + traces_path.string());
    for (const auto& t : d.traces) {
        nlohmann::json j{{"label", t.malicious ? "malicious" : "benign"},
                         {"classes", t.classes},
                         {"source", t.source}};
        out << j.dump() << "\n";
    }
    save_feature_map(d.feature_map, feature_map_path);
}

Dataset load_dataset(const std::filesystem::path& traces_path,
                     const std::filesystem::path& feature_map_path) {
    Dataset d;
    std::ifstream in(traces_path);
    if (!in) throw std::runtime_error("cannot open " + traces_path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        LabeledTrace t;
        std::string label = j.at("label").get<std::string>();
        if (label == "malicious")
            t.malicious = true;
        else if (label != "benign")
            throw std::runtime_error("dataset: label must be benign or malicious");
        t.classes = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("source")) t.source = j["source"].get<std::string>();
        d.traces.push_back(std::move(t));
    }
    d.feature_map = load_feature_map(feature_map_path);
    return d;
}

Estimator parse_estimator(const std::string& s) {
    if (s == "bayesian") return Estimator::bayesian;
    if (s == "empirical") return Estimator::empirical;
    if (s == "conjugate") return Estimator::conjugate;
    throw std::runtime_error("unknown estimator: " + s);
}

const char* to_string(Estimator e) {
    switch (e) {
        case Estimator::bayesian: return "bayesian";
        case Estimator::empirical: return "empirical";
        case Estimator::conjugate: return "conjugate";
    }
    return "bayesian";
}

std::vector<Fold> kfold_split(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw MarkovError("kfold: k must be >= 2");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < dataset.traces.size(); ++i)
        (dataset.traces[i].malicious ? pos : neg).push_back(i);
    if (pos.size() < k || neg.size() < k)
        throw MarkovError("kfold: fewer traces than folds for one label");

    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);

    std::vector<std::vector<std::size_t>> test_sets(k);
    for (std::size_t i = 0; i < neg.size(); ++i) test_sets[i % k].push_back(neg[i]);
    for (std::size_t i = 0; i < pos.size(); ++i) test_sets[i % k].push_back(pos[i]);

    std::vector<Fold> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        folds[f].test = test_sets[f];
        std::sort(folds[f].test.begin(), folds[f].test.end());
        for (std::size_t g = 0; g < k; ++g)
            if (g != f)
                folds[f].train.insert(folds[f].train.end(), test_sets[g].begin(), test_sets[g].end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

namespace {

std::vector<std::size_t> encode_trace(const Dataset& dataset, const LabeledTrace& trace,
                                      const StateCatalog& catalog) {
    std::vector<std::size_t> seq;
    seq.reserve(trace.classes.size());
    for (const auto& name : trace.classes) seq.push_back(catalog.encode(dataset.vector_for(name)));
    return seq;
}

PosteriorEnsemble fit_label(const std::vector<std::vector<std::size_t>>& seqs, std::size_t k,
                            const EvalConfig& config, std::uint64_t seed_offset) {
    switch (config.estimator) {
        case Estimator::empirical:
            return PosteriorEnsemble::from_single(empirical_fit(seqs, k, config.pseudocount));
        case Estimator::bayesian: {
            CountSummary counts = count_transitions(seqs, k);
            std::vector<double> alpha(k, 1.0);
            MHConfig mh = config.mh;
            mh.seed = config.mh.seed + seed_offset;
            return mh_sample(counts, alpha, mh);
        }
        case Estimator::conjugate: {
            CountSummary counts = count_transitions(seqs, k);
            std::vector<double> alpha(k, 1.0);
            return conjugate_sample(counts, alpha, config.mh.keep, config.mh.seed + seed_offset);
        }
    }
    throw MarkovError("fit_label: bad estimator");
}

}  // namespace

TrainedModels train_models(const Dataset& dataset, const std::vector<std::size_t>& train_idx,
                           const EvalConfig& config) {
    std::vector<std::size_t> idx = train_idx;
    if (config.max_train > 0 && idx.size() > config.max_train) {
        // Stratified subsample, deterministic given the run seed.
        std::vector<std::size_t> pos, neg;
        for (std::size_t i : idx) (dataset.traces[i].malicious ? pos : neg).push_back(i);
        std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
        std::shuffle(pos.begin(), pos.end(), rng);
        std::shuffle(neg.begin(), neg.end(), rng);
        double frac = static_cast<double>(config.max_train) / static_cast<double>(idx.size());
        std::size_t n_pos = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * static_cast<double>(pos.size()))));
        std::size_t n_neg = config.max_train > n_pos ? config.max_train - n_pos : 1;
        n_pos = std::min(n_pos, pos.size());
        n_neg = std::min(n_neg, neg.size());
        idx.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos));
        idx.insert(idx.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_neg));
        std::sort(idx.begin(), idx.end());
    }

    // Shared catalog over the union of training vectors: the two chains must
    // score sequences over one commensurable state space.
    std::vector<FeatureVector> vectors;
    for (std::size_t i : idx)
        for (const auto& name : dataset.traces[i].classes) vectors.push_back(dataset.vector_for(name));

    TrainedModels models;
    models.catalog = StateCatalog::build(vectors);
    std::size_t k = models.catalog.size();

    std::vector<std::vector<std::size_t>> benign_seqs, malicious_seqs;
    for (std::size_t i : idx) {
        const auto& t = dataset.traces[i];
        if (t.classes.empty()) continue;
        auto seq = encode_trace(dataset, t, models.catalog);
        (t.malicious ? malicious_seqs : benign_seqs).push_back(std::move(seq));
    }
    if (benign_seqs.empty() || malicious_seqs.empty())
        throw MarkovError("train: need at least one non-empty trace per label");

    models.benign = fit_label(benign_seqs, k, config, 1);
    models.malicious = fit_label(malicious_seqs, k, config, 2);
    return models;
}

std::pair<bool, std::size_t> classify_trace(const TrainedModels& models, const Dataset& dataset,
                                            const LabeledTrace& trace, const FilterConfig& config) {
    if (trace.classes.empty()) return {true, 0};  // nothing to score: fail closed
    std::vector<std::pair<FeatureVector, bool>> events;
    events.reserve(trace.classes.size());
    for (std::size_t i = 0; i < trace.classes.size(); ++i)
        events.emplace_back(dataset.vector_for(trace.classes[i]), i + 1 == trace.classes.size());
    try {
        RunResult r = run_stream(models.catalog, models.benign, models.malicious, config, events);
        return {r.decision == Decision::rejected, r.index};
    } catch (const std::exception&) {
        return {true, trace.classes.size()};  // session fault: fail closed
    }
}

namespace {

struct Stats {
    double mean = 0, stddev = 0;  // population std
};

Stats mean_std(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    double n = static_cast<double>(xs.size());
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    var /= n;
    s.stddev = var > 0 ? std::sqrt(var) : 0;
    return s;
}

}  // namespace

MetricsReport evaluate(const Dataset& dataset, const EvalConfig& config) {
    auto folds = kfold_split(dataset, config.folds, config.seed);

    MetricsReport report;
    std::vector<double> precisions, recalls, f1s;
    double index_sum = 0;
    std::size_t index_count = 0;

    auto start = std::chrono::steady_clock::now();
    for (const Fold& fold : folds) {
        TrainedModels models = train_models(dataset, fold.train, config);
        FoldResult fr;
        for (std::size_t i : fold.test) {
            const auto& t = dataset.traces[i];
            auto [rejected, index] = classify_trace(models, dataset, t, config.filter);
            index_sum += static_cast<double>(index);
            ++index_count;
            if (t.malicious)
                (rejected ? fr.tp : fr.fn)++;
            else
                (rejected ? fr.fp : fr.tn)++;
        }
        fr.zero_predicted_positives = fr.tp + fr.fp == 0;
        double precision = fr.zero_predicted_positives
                               ? 0.0
                               : static_cast<double>(fr.tp) / static_cast<double>(fr.tp + fr.fp);
        double recall = fr.tp + fr.fn == 0
                            ? 0.0
                            : static_cast<double>(fr.tp) / static_cast<double>(fr.tp + fr.fn);
        double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        precisions.push_back(precision * 100.0);
        recalls.push_back(recall * 100.0);
        f1s.push_back(f1);
        report.folds.push_back(fr);
    }
    auto end = std::chrono::steady_clock::now();
    report.inference_seconds = std::chrono::duration<double>(end - start).count();

    Stats p = mean_std(precisions), r = mean_std(recalls), f = mean_std(f1s);
    report.precision_mean = p.mean;
    report.precision_std = p.stddev;
    report.recall_mean = r.mean;
    report.recall_std = r.stddev;
    report.f1_mean = f.mean;
    report.f1_std = f.stddev;
    report.mean_decision_index = index_count ? index_sum / static_cast<double>(index_count) : 0.0;
    return report;
}

std::vector<SweepRow> sweep_l(const Dataset& dataset, EvalConfig config,
                              const std::vector<std::size_t>& l_values) {
    std::vector<SweepRow> rows;
    for (std::size_t l : l_values) {
        config.filter.l = l;
        MetricsReport rep = evaluate(dataset, config);
        rows.push_back({l, rep.precision_mean, rep.recall_mean, rep.mean_decision_index});
    }
    return rows;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json fold_arr = nlohmann::json::array();
    for (const auto& f : folds)
        fold_arr.push_back({{"tp", f.tp},
                            {"fp", f.fp},
                            {"tn", f.tn},
                            {"fn", f.fn},
                            {"zero_predicted_positives", f.zero_predicted_positives}});
    return nlohmann::json{{"precision_mean", precision_mean},
                          {"precision_std", precision_std},
                          {"recall_mean", recall_mean},
                          {"recall_std", recall_std},
                          {"f1_mean", f1_mean},
                          {"f1_std", f1_std},
                          {"mean_decision_index", mean_decision_index},
                          {"inference_seconds", inference_seconds},
                          {"folds", std::move(fold_arr)}};
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "precision " << precision_mean << "+-" << precision_std << "  recall " << recall_mean
       << "+-" << recall_std << "  ";
    os.precision(3);
    os << "f1 " << f1_mean << "+-" << f1_std << "  time " << inference_seconds << "s";
    return os.str();
}

SynthSpec default_synth_spec() {
    // Seven planted states: benign traffic cycles through s0..s2, malicious
    // payloads concentrate on s3..s5; s6 is a rare catch-all.
    const char* vectors[7] = {"00000000", "00100000", "00010000", "01000000",
                              "10000001", "00001010", "11111111"};
    std::vector<FeatureVector> vs;
    for (const char* s : vectors) vs.push_back(*FeatureVector::parse(s));

    SynthSpec spec;
    spec.catalog = StateCatalog::build(vs);

    auto chain = [](std::vector<double> init, std::vector<std::vector<double>> rows) {
        MarkovChain c;
        c.num_states = init.size();
        c.p_init = std::move(init);
        for (auto& r : rows) c.p_tr.insert(c.p_tr.end(), r.begin(), r.end());
        c.validate();
        return c;
    };

    std::vector<double> benign_core = {0.44, 0.32, 0.20, 0.01, 0.01, 0.01, 0.01};
    std::vector<double> benign_rare = {0.55, 0.22, 0.15, 0.02, 0.02, 0.02, 0.02};
    spec.benign = chain({0.72, 0.15, 0.09, 0.01, 0.01, 0.01, 0.01},
                        {benign_core, benign_core, benign_core, benign_rare, benign_rare,
                         benign_rare, benign_rare});

    std::vector<double> mal_entry = {0.02, 0.01, 0.01, 0.42, 0.32, 0.18, 0.04};
    std::vector<double> mal_core = {0.01, 0.01, 0.01, 0.38, 0.31, 0.25, 0.03};
    spec.malicious = chain({0.02, 0.01, 0.01, 0.64, 0.22, 0.08, 0.02},
                           {mal_entry, mal_entry, mal_entry, mal_core, mal_core, mal_core,
                            mal_entry});
    return spec;
}

Dataset synth_generate(const SynthSpec& spec, std::size_t n_benign, std::size_t n_malicious,
                       double benign_mean_length, double malicious_mean_length,
                       std::uint64_t seed) {
    if (benign_mean_length < 1.0 || malicious_mean_length < 1.0)
        throw MarkovError("synth: mean lengths must be >= 1");
    spec.benign.validate();
    spec.malicious.validate();
    std::size_t n_states = spec.catalog.states().size();
    if (spec.benign.num_states != n_states || spec.malicious.num_states != n_states)
        throw MarkovError("synth: chains must cover the catalog's observed states");

    Dataset d;
    for (std::size_t s = 0; s < n_states; ++s)
        d.feature_map.emplace("synth.S" + std::to_string(s), spec.catalog.states()[s]);

    std::mt19937_64 rng(seed);
    auto sample_trace = [&](const MarkovChain& chain, double mean_len, bool malicious,
                            std::size_t serial) {
        std::geometric_distribution<std::size_t> extra(1.0 / mean_len);
        std::size_t len = 1 + extra(rng);
        LabeledTrace t;
        t.malicious = malicious;
        t.source = std::string("synth:") + (malicious ? "malicious" : "benign") + ":" +
                   std::to_string(serial);
        std::discrete_distribution<std::size_t> init(chain.p_init.begin(), chain.p_init.end());
        std::size_t state = init(rng);
        t.classes.push_back("synth.S" + std::to_string(state));
        for (std::size_t i = 1; i < len; ++i) {
            auto row_begin = chain.p_tr.begin() + static_cast<std::ptrdiff_t>(state * n_states);
            std::discrete_distribution<std::size_t> next(row_begin, row_begin + static_cast<std::ptrdiff_t>(n_states));
            state = next(rng);
            t.classes.push_back("synth.S" + std::to_string(state));
        }
        return t;
    };

    for (std::size_t i = 0; i < n_benign; ++i)
        d.traces.push_back(sample_trace(spec.benign, benign_mean_length, false, i));
    for (std::size_t i = 0; i < n_malicious; ++i)
        d.traces.push_back(sample_trace(spec.malicious, malicious_mean_length, true, i));
    return d;
}

}  // namespace serfilter
