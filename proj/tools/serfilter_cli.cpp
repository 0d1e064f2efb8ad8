// Command-line front end: parse serialized streams, extract class features,
// train benign/malicious chain models, score traces, filter streams, run the
// cross-validation harness, and generate synthetic corpora.
//
// Exit codes: 0 success (or `filter` accepted), 1 `filter` rejected,
// 2 usage error, 3 parse/train failure.

#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "serfilter/classfile.hpp"
#include "serfilter/eval.hpp"
#include "serfilter/filter.hpp"
#include "serfilter/jdeser.hpp"

namespace sf = serfilter;
using nlohmann::json;

namespace {

constexpr std::size_t kInfinity = std::numeric_limits<std::size_t>::max();

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    if (path == "-") {
        return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(std::cin),
                                         std::istreambuf_iterator<char>());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::size_t parse_l(const std::string& s) {
    if (s == "inf" || s == "infinity") return kInfinity;
    long long v = std::stoll(s);
    if (v < 1) throw CLI::ValidationError("--l must be >= 1 or 'inf'");
    return static_cast<std::size_t>(v);
}

std::string l_to_string(std::size_t l) {
    return l == kInfinity ? "inf" : std::to_string(l);
}

struct ModelFile {
    sf::StateCatalog catalog;
    sf::PosteriorEnsemble ensemble;
};

void save_empirical_model(const sf::StateCatalog& catalog, const sf::MarkovChain& chain,
                          const std::string& path) {
    json j = chain.to_json();
    j["kind"] = "empirical";
    j["catalog"] = catalog.to_json();
    open_out(path) << j.dump(2) << "\n";
}

void save_ensemble_model(const sf::StateCatalog& catalog, const sf::PosteriorEnsemble& ensemble,
                         const sf::MHConfig& config, const std::string& kind,
                         const std::string& path) {
    json j{{"kind", kind},
           {"config", config.to_json()},
           {"catalog", catalog.to_json()},
           {"samples", ensemble.to_json()}};
    open_out(path) << j.dump() << "\n";
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    ModelFile m;
    m.catalog = sf::StateCatalog::from_json(j.at("catalog"));
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "empirical")
        m.ensemble = sf::PosteriorEnsemble::from_single(sf::MarkovChain::from_json(j));
    else
        m.ensemble = sf::PosteriorEnsemble::from_json(j.at("samples"));
    if (m.ensemble.samples.empty()) throw std::runtime_error(path + ": model has no samples");
    for (const auto& s : m.ensemble.samples)
        if (s.num_states != m.catalog.size())
            throw std::runtime_error(path + ": model/catalog state count mismatch");
    return m;
}

json event_to_json(const sf::ClassEvent& e) {
    return json{{"class", e.class_name}, {"kind", sf::to_string(e.kind)}, {"offset", e.offset}};
}

void write_events(std::ostream& os, const sf::ParseResult& result) {
    for (const auto& e : result.trace.events) os << event_to_json(e).dump() << "\n";
    if (result.error)
        os << json{{"error", sf::to_string(result.error->kind)}, {"detail", result.error->detail}}
                  .dump()
           << "\n";
    else
        os << json{{"end", true}}.dump() << "\n";
}

int cmd_parse(const std::string& input, const std::string& out_path) {
    sf::ParseResult result = sf::parse_stream(read_bytes(input));
    if (out_path.empty()) {
        write_events(std::cout, result);
    } else {
        auto out = open_out(out_path);
        write_events(out, result);
    }
    return result.error ? 3 : 0;
}

int cmd_extract(const std::vector<std::string>& roots, std::vector<std::string> names,
                const std::string& names_file, const std::string& out_path) {
    if (!names_file.empty()) {
        std::ifstream in(names_file);
        if (!in) throw std::runtime_error("cannot open " + names_file);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) names.push_back(line);
    }
    std::vector<std::filesystem::path> root_paths(roots.begin(), roots.end());
    for (const auto& r : root_paths)
        if (!std::filesystem::exists(r)) throw std::runtime_error("root does not exist: " + r.string());
    sf::ClassResolver resolver(root_paths);
    std::vector<std::string> warnings;
    auto feature_map = sf::scan_corpus(resolver, names, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    if (out_path.empty()) {
        json j = json::object();
        for (const auto& [n, v] : feature_map) j[n] = v.to_string();
        std::cout << j.dump(2) << "\n";
    } else {
        sf::save_feature_map(feature_map, out_path);
    }
    return 0;
}

int cmd_train(const sf::Dataset& dataset, sf::EvalConfig config, const std::string& benign_path,
              const std::string& malicious_path, const std::string& catalog_path) {
    std::vector<std::size_t> all(dataset.traces.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    sf::TrainedModels models = sf::train_models(dataset, all, config);

    if (config.estimator == sf::Estimator::empirical) {
        save_empirical_model(models.catalog, models.benign.samples.at(0), benign_path);
        save_empirical_model(models.catalog, models.malicious.samples.at(0), malicious_path);
    } else {
        const char* kind = config.estimator == sf::Estimator::bayesian ? "bayesian" : "conjugate";
        save_ensemble_model(models.catalog, models.benign, config.mh, kind, benign_path);
        save_ensemble_model(models.catalog, models.malicious, config.mh, kind, malicious_path);
    }
    if (!catalog_path.empty()) open_out(catalog_path) << models.catalog.to_json().dump(2) << "\n";
    return 0;
}

int cmd_score(const std::string& model_path, const std::string& trace_path,
              const std::string& feature_map_path, const std::string& format) {
    ModelFile model = load_model(model_path);
    auto fm = sf::load_feature_map(feature_map_path);

    std::ifstream in(trace_path);
    if (!in) throw std::runtime_error("cannot open " + trace_path);
    json jt;
    in >> jt;
    auto classes = jt.at("classes").get<std::vector<std::string>>();
    if (classes.empty()) throw std::runtime_error("trace has no classes");

    std::vector<std::size_t> seq;
    for (const auto& name : classes) {
        auto it = fm.find(name);
        sf::FeatureVector v = it != fm.end() ? it->second : sf::FeatureVector::all_false();
        seq.push_back(model.catalog.encode(v));
    }
    auto [mean, stddev] = sf::ensemble_score(model.ensemble, seq);
    if (format == "json")
        std::cout << json{{"mean_log_prob", mean}, {"std_log_prob", stddev}}.dump() << "\n";
    else
        std::cout << "mean_log_prob " << mean << "  std_log_prob " << stddev << "\n";
    return 0;
}

int cmd_filter(const std::string& benign_path, const std::string& malicious_path,
               const std::string& feature_map_path, const std::string& input,
               const std::string& out_path, double t, std::size_t l) {
    ModelFile benign = load_model(benign_path);
    ModelFile malicious = load_model(malicious_path);
    if (!(benign.catalog == malicious.catalog))
        throw std::runtime_error("benign and malicious models use different catalogs");
    auto fm = sf::load_feature_map(feature_map_path);

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file = open_out(out_path);
        os = &file;
    }

    auto reject = [&](const std::string& reason) {
        *os << json{{"decision", "rejected"}, {"reason", reason}}.dump() << "\n";
        return 1;
    };

    sf::ParseResult parsed = sf::parse_stream(read_bytes(input));
    if (parsed.error)
        return reject(std::string(sf::to_string(parsed.error->kind)) + ": " + parsed.error->detail);
    if (parsed.trace.events.empty()) return reject("stream contains no classes");

    sf::FilterConfig config{t, l};
    sf::FilterSession session(benign.catalog, benign.ensemble, malicious.ensemble, config);
    sf::Decision decision = sf::Decision::undecided;
    for (std::size_t i = 0; i < parsed.trace.events.size(); ++i) {
        const auto& e = parsed.trace.events[i];
        auto it = fm.find(e.class_name);
        sf::FeatureVector v = it != fm.end() ? it->second : sf::FeatureVector::all_false();
        decision = session.step(v, i + 1 == parsed.trace.events.size());
        const sf::StepLog& log = session.log().back();
        *os << json{{"index", log.index},
                    {"class", e.class_name},
                    {"mB", log.mean_benign},
                    {"sB", log.std_benign},
                    {"mM", log.mean_malicious},
                    {"sM", log.std_malicious},
                    {"disjoint", log.disjoint},
                    {"decision", sf::to_string(log.decision)}}
                   .dump()
            << "\n";
        if (decision != sf::Decision::undecided) break;
    }
    return decision == sf::Decision::accepted ? 0 : 1;
}

int cmd_eval(const sf::Dataset& dataset, sf::EvalConfig config, std::vector<double> t_values,
             std::vector<std::string> l_values, const std::string& format,
             const std::string& out_path) {
    if (t_values.empty()) t_values = {0, 1, 2, 3};
    if (l_values.empty()) l_values = {"inf"};

    json rows = json::array();
    std::ostringstream table;
    table << "estimator   t     l     precision        recall           f1            time\n";
    for (double t : t_values) {
        for (const std::string& ls : l_values) {
            config.filter.t = t;
            config.filter.l = parse_l(ls);
            sf::MetricsReport rep = sf::evaluate(dataset, config);
            json row = rep.to_json();
            row["estimator"] = sf::to_string(config.estimator);
            row["t"] = t;
            row["l"] = l_to_string(config.filter.l);
            rows.push_back(row);
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "%-10s %4.1f %5s  %6.2f+-%-6.2f  %6.2f+-%-6.2f  %.2f+-%-4.2f  %6.1fs\n",
                          sf::to_string(config.estimator), t, l_to_string(config.filter.l).c_str(),
                          rep.precision_mean, rep.precision_std, rep.recall_mean, rep.recall_std,
                          rep.f1_mean, rep.f1_std, rep.inference_seconds);
            table << buf;
        }
    }
    std::string text = format == "json" ? rows.dump(2) + "\n" : table.str();
    if (out_path.empty())
        std::cout << text;
    else
        open_out(out_path) << text;
    return 0;
}

int cmd_synth(std::size_t n_benign, std::size_t n_malicious, double benign_len, double mal_len,
              std::uint64_t seed, const std::string& out_traces, const std::string& out_fm) {
    sf::Dataset d =
        sf::synth_generate(sf::default_synth_spec(), n_benign, n_malicious, benign_len, mal_len, seed);
    sf::save_dataset(d, out_traces, out_fm);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markov-chain deserialization filter toolkit"};
    app.require_subcommand(1);

    // parse
    auto* parse = app.add_subcommand("parse", "Parse a serialized stream into class events");
    std::string parse_input = "-", parse_out;
    parse->add_option("input", parse_input, "Stream file ('-' for stdin)");
    parse->add_option("--out", parse_out, "Output JSONL path (default stdout)");

    // extract
    auto* extract = app.add_subcommand("extract", "Extract class feature vectors from class roots");
    std::vector<std::string> ex_roots, ex_names;
    std::string ex_names_file, ex_out;
    extract->add_option("--root", ex_roots, "Class root (directory or .jar/.zip)")->required();
    extract->add_option("names", ex_names, "Dotted class names");
    extract->add_option("--names-file", ex_names_file, "File with one class name per line");
    extract->add_option("--out", ex_out, "Feature map JSON output path");

    // shared model/training options
    std::string ds_traces, ds_fm, estimator = "bayesian";
    sf::EvalConfig eval_config;
    std::string l_str = "inf";
    auto add_training_opts = [&](CLI::App* cmd) {
        cmd->add_option("--dataset", ds_traces, "Trace JSONL file")->required();
        cmd->add_option("--feature-map", ds_fm, "Feature map JSON file")->required();
        cmd->add_option("--estimator", estimator, "bayesian|empirical|conjugate")
            ->check(CLI::IsMember({"bayesian", "empirical", "conjugate"}));
        cmd->add_option("--draws", eval_config.mh.draws, "Total MH draws");
        cmd->add_option("--keep", eval_config.mh.keep, "Trailing samples kept");
        cmd->add_option("--proposal-scale", eval_config.mh.proposal_scale, "MH step size");
        cmd->add_option("--pseudocount", eval_config.pseudocount, "Empirical smoothing");
        cmd->add_option("--seed", eval_config.seed, "Random seed");
    };

    // train
    auto* train = app.add_subcommand("train", "Fit benign and malicious chain models");
    std::string model_benign, model_malicious, catalog_path;
    add_training_opts(train);
    train->add_option("--model-benign", model_benign, "Benign model output")->required();
    train->add_option("--model-malicious", model_malicious, "Malicious model output")->required();
    train->add_option("--catalog", catalog_path, "Catalog JSON output");

    // score
    auto* score = app.add_subcommand("score", "Score a trace under one model");
    std::string score_model, score_trace, score_fm, score_format = "text";
    score->add_option("--model", score_model, "Model file")->required();
    score->add_option("--trace", score_trace, "Trace JSON file ({\"classes\":[...]})")->required();
    score->add_option("--feature-map", score_fm, "Feature map JSON file")->required();
    score->add_option("--format", score_format, "json|text")->check(CLI::IsMember({"json", "text"}));

    // filter
    auto* filter = app.add_subcommand("filter", "Filter a serialized stream (exit 0=accept, 1=reject)");
    std::string f_benign, f_malicious, f_fm, f_input = "-", f_out;
    double f_t = 2.0;
    std::string f_l = "inf";
    filter->add_option("--model-benign", f_benign, "Benign model file")->required();
    filter->add_option("--model-malicious", f_malicious, "Malicious model file")->required();
    filter->add_option("--feature-map", f_fm, "Feature map JSON file")->required();
    filter->add_option("input", f_input, "Stream file ('-' for stdin)");
    filter->add_option("--t", f_t, "Std-deviation multiplier");
    filter->add_option("--l", f_l, "Early-abort prefix length or 'inf'");
    filter->add_option("--out", f_out, "Decision log JSONL path (default stdout)");

    // eval
    auto* eval = app.add_subcommand("eval", "k-fold cross-validation over a labeled dataset");
    std::vector<double> e_t;
    std::vector<std::string> e_l;
    std::string e_format = "text", e_out;
    add_training_opts(eval);
    eval->add_option("--t", e_t, "Threshold values (repeatable; default 0 1 2 3)");
    eval->add_option("--l", e_l, "Early-abort lengths (repeatable; default inf)");
    eval->add_option("--folds", eval_config.folds, "Number of folds");
    eval->add_option("--max-train", eval_config.max_train, "Cap training traces per fold (0 = all)");
    eval->add_option("--format", e_format, "json|text")->check(CLI::IsMember({"json", "text"}));
    eval->add_option("--out", e_out, "Report output path (default stdout)");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic planted-chain dataset");
    std::size_t s_benign = 200, s_malicious = 40;
    double s_blen = 39.0, s_mlen = 17.0;
    std::uint64_t s_seed = 0;
    std::string s_out_traces, s_out_fm;
    synth->add_option("--n-benign", s_benign, "Benign trace count");
    synth->add_option("--n-malicious", s_malicious, "Malicious trace count");
    synth->add_option("--benign-mean-length", s_blen, "Mean benign trace length");
    synth->add_option("--malicious-mean-length", s_mlen, "Mean malicious trace length");
    synth->add_option("--seed", s_seed, "Random seed");
    synth->add_option("--out", s_out_traces, "Trace JSONL output")->required();
    synth->add_option("--out-feature-map", s_out_fm, "Feature map JSON output")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*parse) return cmd_parse(parse_input, parse_out);
        if (*extract) return cmd_extract(ex_roots, ex_names, ex_names_file, ex_out);
        if (*train || *eval) {
            eval_config.estimator = sf::parse_estimator(estimator);
            sf::Dataset dataset = sf::load_dataset(ds_traces, ds_fm);
            if (*train) return cmd_train(dataset, eval_config, model_benign, model_malicious, catalog_path);
            return cmd_eval(dataset, eval_config, e_t, e_l, e_format, e_out);
        }
        if (*score) return cmd_score(score_model, score_trace, score_fm, score_format);
        if (*filter)
            return cmd_filter(f_benign, f_malicious, f_fm, f_input, f_out, f_t, parse_l(f_l));
        if (*synth) return cmd_synth(s_benign, s_malicious, s_blen, s_mlen, s_seed, s_out_traces, s_out_fm);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
