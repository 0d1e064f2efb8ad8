// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run via ctest (test name "acceptance") or directly.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "serfilter/classfile.hpp"
#include "serfilter/eval.hpp"
#include "serfilter/filter.hpp"
#include "serfilter/jdeser.hpp"

using namespace serfilter;

namespace {

int g_failures = 0;

struct Check {
    bool ok = true;
    std::ostringstream why;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            why << (why.str().empty() ? "" : "; ") << what;
        }
    }
};

void criterion(const char* id, const char* name, double time_limit_s,
               const std::function<void(Check&)>& body) {
    Check c;
    auto start = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.require(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.require(secs < time_limit_s, "runtime " + std::to_string(secs) + "s over limit");
    std::printf("[%s] %s: %s (%.2fs)%s%s\n", c.ok ? "PASS" : "FAIL", id, name, secs,
                c.ok ? "" : " -- ", c.ok ? "" : c.why.str().c_str());
    std::fflush(stdout);
    if (!c.ok) ++g_failures;
}

MarkovChain random_chain(std::size_t k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    MarkovChain c;
    c.num_states = k;
    c.p_init.resize(k);
    c.p_tr.resize(k * k);
    auto fill = [&](double* row) {
        double sum = 0;
        for (std::size_t j = 0; j < k; ++j) sum += row[j] = u(rng);
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    };
    fill(c.p_init.data());
    for (std::size_t i = 0; i < k; ++i) fill(&c.p_tr[i * k]);
    return c;
}

const char* kStreamFixtures[] = {"empty_body",    "hashmap",        "nested_object",
                                 "int_array",     "enum_constant",  "string_backref",
                                 "super_chain"};

// --- Criterion 1: sequence-probability correctness -------------------------

void c1_total_probability(Check& c) {
    std::mt19937_64 rng(2024);
    for (std::size_t k = 1; k <= 4; ++k) {
        MarkovChain chain = random_chain(k, rng);
        for (std::size_t n = 1; n <= 5; ++n) {
            std::vector<std::size_t> seq(n, 0);
            double total = 0;
            for (;;) {
                total += std::exp(log_prob(chain, seq));
                std::size_t i = 0;
                for (; i < n; ++i) {
                    if (++seq[i] < k) break;
                    seq[i] = 0;
                }
                if (i == n) break;
            }
            c.require(std::abs(total - 1.0) < 1e-9,
                      "K=" + std::to_string(k) + " n=" + std::to_string(n) + " total=" +
                          std::to_string(total));
        }
    }
    MarkovChain hand;
    hand.num_states = 2;
    hand.p_init = {0.5, 0.5};
    hand.p_tr = {0.9, 0.1, 0.2, 0.8};
    std::vector<std::size_t> seq{0, 0, 1};
    c.require(std::abs(log_prob(hand, seq) - std::log(0.045)) < 1e-12, "ln 0.045 example");
}

// --- Criterion 2: MH vs conjugate closed form ------------------------------

void c2_conjugate_oracle(Check& c) {
    std::mt19937_64 rng(555);
    for (int fixture = 0; fixture < 20; ++fixture) {
        std::size_t k = 2 + rng() % 3;  // K in {2,3,4}
        CountSummary counts;
        counts.num_states = k;
        counts.init_counts.resize(k);
        counts.tr_counts.resize(k * k);
        for (auto& v : counts.init_counts) v = rng() % 21;
        for (auto& v : counts.tr_counts) v = rng() % 21;
        std::vector<double> alpha(k, 1.0);

        MHConfig cfg;  // default 5000 draws / keep 500
        cfg.seed = 9000 + static_cast<std::uint64_t>(fixture);
        double rate = 0;
        PosteriorEnsemble e = mh_sample(counts, alpha, cfg, &rate);
        MarkovChain expected = conjugate_mean(counts, alpha);

        double max_err = 0;
        for (std::size_t col = 0; col < k; ++col) {
            double mean = 0;
            for (const auto& s : e.samples) mean += s.p_init[col];
            max_err = std::max(max_err,
                               std::abs(mean / static_cast<double>(e.samples.size()) -
                                        expected.p_init[col]));
        }
        for (std::size_t row = 0; row < k; ++row)
            for (std::size_t col = 0; col < k; ++col) {
                double mean = 0;
                for (const auto& s : e.samples) mean += s.tr(row, col);
                max_err = std::max(max_err,
                                   std::abs(mean / static_cast<double>(e.samples.size()) -
                                            expected.tr(row, col)));
            }
        c.require(max_err <= 0.02, "fixture " + std::to_string(fixture) + " max row-mean error " +
                                       std::to_string(max_err));
        c.require(rate > 0.05 && rate < 0.95,
                  "fixture " + std::to_string(fixture) + " acceptance rate " + std::to_string(rate));
    }
}

// --- Criterion 3: filter branch coverage -----------------------------------

void c3_branch_coverage(Check& c) {
    auto fv = [](const char* s) { return *FeatureVector::parse(s); };
    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
    StateCatalog catalog = StateCatalog::build({fv("00000000"), fv("01000000")});

    MarkovChain benign;
    benign.num_states = 3;
    benign.p_init = {0.9, 0.05, 0.05};
    benign.p_tr = {0.9, 0.05, 0.05, 0.3, 0.4, 0.3, 0.3, 0.3, 0.4};
    MarkovChain malicious;
    malicious.num_states = 3;
    malicious.p_init = {0.05, 0.9, 0.05};
    malicious.p_tr = {0.4, 0.4, 0.2, 0.05, 0.9, 0.05, 0.3, 0.4, 0.3};
    auto be = PosteriorEnsemble::from_single(benign);
    auto me = PosteriorEnsemble::from_single(malicious);

    // end & disjoint, malicious higher -> rejected; benign higher -> accepted
    FilterSession s1(catalog, be, me, {0.0, inf});
    c.require(s1.step(fv("01000000"), true) == Decision::rejected, "final reject branch");
    FilterSession s2(catalog, be, me, {0.0, inf});
    c.require(s2.step(fv("00000000"), true) == Decision::accepted, "final accept branch");
    // end & overlap -> rejected (tie case: identical models)
    FilterSession s3(catalog, be, be, {2.0, inf});
    c.require(s3.step(fv("00000000"), true) == Decision::rejected, "overlap reject branch");
    FilterSession s3b(catalog, be, be, {0.0, inf});
    c.require(s3b.step(fv("00000000"), true) == Decision::rejected, "tie mB==mM rejected");
    // early abort at l
    FilterSession s4(catalog, be, me, {0.0, 2});
    c.require(s4.step(fv("01000000"), false) == Decision::undecided, "undecided branch");
    c.require(s4.step(fv("01000000"), false) == Decision::rejected, "early abort branch");

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> mean(-80, 0), stddev(0, 6), tdist(0, 3);
    for (int i = 0; i < 1000; ++i) {
        double mb = mean(rng), sb = stddev(rng), mm = mean(rng), sm = stddev(rng);
        double t1 = tdist(rng), t2 = tdist(rng);
        if (t1 > t2) std::swap(t1, t2);
        if (intervals_disjoint(mb, sb, mm, sm, t2))
            c.require(intervals_disjoint(mb, sb, mm, sm, t1), "t-monotonicity violated");
    }
}

// --- Criterion 4: parser fidelity ------------------------------------------

void c4_parser_fidelity(Check& c) {
    std::mt19937_64 rng(404);
    std::vector<std::vector<std::uint8_t>> seeds;
    for (const char* name : kStreamFixtures) {
        auto bytes = testutil::read_file(testutil::fixture(std::string("streams/") + name + ".bin"));
        seeds.push_back(bytes);
        ParseResult r = parse_stream(bytes);
        std::string expected =
            testutil::read_text(testutil::fixture(std::string("streams/") + name + ".expected.jsonl"));
        c.require(testutil::events_jsonl(r) == expected, std::string(name) + " JSONL mismatch");

        std::uniform_int_distribution<std::size_t> cut(0, bytes.size());
        for (int trial = 0; trial < 100; ++trial) {
            std::size_t split = cut(rng);
            StreamSession session;
            auto head = session.feed({bytes.data(), split});
            auto tail = session.feed({bytes.data() + split, bytes.size() - split});
            head.insert(head.end(), tail.begin(), tail.end());
            if (head != r.trace.events) {
                c.require(false, std::string(name) + " chunking invariance at split " +
                                     std::to_string(split));
                break;
            }
        }
    }

    for (int i = 0; i < 100000; ++i) {
        auto bytes = seeds[rng() % seeds.size()];
        std::size_t flips = 1 + rng() % 8;
        for (std::size_t f = 0; f < flips && !bytes.empty(); ++f)
            bytes[rng() % bytes.size()] = static_cast<std::uint8_t>(rng());
        parse_stream(bytes);  // survives without crash or unbounded allocation
    }
}

// --- Criterion 5: feature extraction fidelity ------------------------------

void c5_feature_fidelity(Check& c) {
    ClassResolver resolver({testutil::fixture("classes"), testutil::fixture("jdk-classes.jar")});
    const std::pair<const char*, const char*> expectations[] = {
        {"fx.FReflect", "10000000"},   {"fx.FReadObject", "01000000"},
        {"fx.FHashCode", "00100000"},  {"fx.FGenericField", "00010000"},
        {"fx.FMap", "00001000"},       {"fx.FComparator", "00000100"},
        {"fx.FCallsHash", "00000010"}, {"fx.FCallsCompare", "00000001"},
        {"fx.Empty", "00000000"},
    };
    for (const auto& [name, expected] : expectations) {
        const ClassInfo* info = resolver.resolve(name);
        if (!info) {
            c.require(false, std::string(name) + " unresolvable");
            continue;
        }
        std::string got = extract_features(*info, resolver).to_string();
        c.require(got == expected, std::string(name) + " -> " + got + " expected " + expected);
    }
    const ClassInfo* hashmap = resolver.resolve("java.util.HashMap");
    if (!hashmap) {
        c.require(false, "java.util.HashMap unresolvable from class archive");
    } else {
        FeatureVector v = extract_features(*hashmap, resolver);
        c.require(v.bits[4], "HashMap F5 implements-Map");
        c.require(v.bits[2], "HashMap F3 overrides-hashCode");
    }
}

// --- Criterion 6: desk-scale trend reproduction ----------------------------

void c6_trend_reproduction(Check& c) {
    SynthSpec spec = default_synth_spec();
    Dataset dataset = synth_generate(spec, 200, 40, 39.0, 17.0, 1);

    EvalConfig cfg;
    cfg.estimator = Estimator::conjugate;  // exact-posterior fast path
    cfg.filter.t = 2.0;
    MetricsReport rep = evaluate(dataset, cfg);
    c.require(rep.f1_mean >= 0.90,
              "conjugate F1 " + std::to_string(rep.f1_mean) + " below 0.90");

    // MH sampler spot check on one seed
    EvalConfig mh_cfg = cfg;
    mh_cfg.estimator = Estimator::bayesian;
    MetricsReport mh_rep = evaluate(dataset, mh_cfg);
    c.require(mh_rep.f1_mean >= 0.90,
              "MH F1 " + std::to_string(mh_rep.f1_mean) + " below 0.90");

    // scarce data: Bayesian precision should dominate the empirical estimator
    double bayes_sum = 0, empirical_sum = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Dataset d = synth_generate(spec, 200, 40, 39.0, 17.0, 100 + seed);
        EvalConfig b = cfg;
        b.seed = seed;
        b.max_train = 30;
        MetricsReport br = evaluate(d, b);
        bayes_sum += br.precision_mean;

        EvalConfig emp = b;
        emp.estimator = Estimator::empirical;
        MetricsReport er = evaluate(d, emp);
        empirical_sum += er.precision_mean;
    }
    c.require(bayes_sum >= empirical_sum,
              "scarce-data precision: bayesian " + std::to_string(bayes_sum / 10) +
                  " < empirical " + std::to_string(empirical_sum / 10));
}

// --- Criterion 7: early-abort sweep trend ----------------------------------

void c7_sweep_trend(Check& c) {
    SynthSpec spec = default_synth_spec();
    Dataset dataset = synth_generate(spec, 200, 40, 39.0, 17.0, 2);
    EvalConfig cfg;
    cfg.estimator = Estimator::conjugate;
    cfg.filter.t = 2.0;
    auto rows = sweep_l(dataset, cfg, {1, 2, 4, 8, std::numeric_limits<std::size_t>::max()});

    double prec_l1 = rows[0].precision, prec_l8 = rows[3].precision;
    c.require(prec_l8 >= prec_l1 - 2.0, "precision(l=8) " + std::to_string(prec_l8) +
                                            " vs precision(l=1) " + std::to_string(prec_l1));
    double rmin = 1e9, rmax = -1e9;
    for (const auto& row : rows) {
        rmin = std::min(rmin, row.recall);
        rmax = std::max(rmax, row.recall);
    }
    c.require(rmax - rmin <= 5.0, "recall range " + std::to_string(rmax - rmin) + " over 5 points");
}

// --- Criterion 8: filter step latency --------------------------------------

void c8_step_latency(Check& c) {
    std::mt19937_64 rng(606);
    const std::size_t k = 64;
    std::vector<FeatureVector> vectors;
    for (int i = 0; i < 63; ++i) {
        FeatureVector v;
        for (int b = 0; b < 8; ++b) v.bits[static_cast<std::size_t>(b)] = (i >> b) & 1;
        vectors.push_back(v);
    }
    StateCatalog catalog = StateCatalog::build(vectors);  // 63 observed + OTHER = 64
    PosteriorEnsemble benign, malicious;
    for (int s = 0; s < 500; ++s) {
        benign.samples.push_back(random_chain(k, rng));
        malicious.samples.push_back(random_chain(k, rng));
    }

    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
    FilterSession session(catalog, benign, malicious, {2.0, inf});
    const int steps = 2000;
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < steps; ++i) session.step(vectors[static_cast<std::size_t>(i) % 63], false);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double per_step_ms = secs / steps * 1e3;
    c.require(per_step_ms <= 1.0, "mean step latency " + std::to_string(per_step_ms) + " ms");
}

}  // namespace

int main() {
    criterion("C1", "sequence probabilities normalize and match hand product", 1.0,
              c1_total_probability);
    criterion("C2", "MH posterior matches conjugate closed form", 60.0, c2_conjugate_oracle);
    criterion("C3", "filter decision branches and t-monotonicity", 5.0, c3_branch_coverage);
    criterion("C4", "stream parser golden fixtures, chunking, fuzz", 60.0, c4_parser_fidelity);
    criterion("C5", "class feature extraction fixtures", 60.0, c5_feature_fidelity);
    criterion("C6", "synthetic corpus trend: F1 and bayesian-vs-empirical", 900.0,
              c6_trend_reproduction);
    criterion("C7", "early-abort sweep: precision up, recall stable", 900.0, c7_sweep_trend);
    criterion("C8", "filter step latency at K=64 with 500 samples", 60.0, c8_step_latency);

    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
