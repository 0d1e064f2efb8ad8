#include <doctest.h>

#include <cmath>
#include <random>

#include "serfilter/markov.hpp"

using namespace serfilter;

namespace {

MarkovChain two_state() {
    MarkovChain c;
    c.num_states = 2;
    c.p_init = {0.5, 0.5};
    c.p_tr = {0.9, 0.1, 0.2, 0.8};
    c.validate();
    return c;
}

MarkovChain random_chain(std::size_t k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    MarkovChain c;
    c.num_states = k;
    c.p_init.resize(k);
    c.p_tr.resize(k * k);
    auto fill = [&](double* row) {
        double sum = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = u(rng);
            sum += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    };
    fill(c.p_init.data());
    for (std::size_t i = 0; i < k; ++i) fill(&c.p_tr[i * k]);
    return c;
}

// Oracle: total probability over all K^n sequences of a given length.
double total_prob(const MarkovChain& c, std::size_t n) {
    std::size_t k = c.num_states;
    std::vector<std::size_t> seq(n, 0);
    double total = 0;
    for (;;) {
        total += std::exp(log_prob(c, seq));
        std::size_t i = 0;
        for (; i < n; ++i) {
            if (++seq[i] < k) break;
            seq[i] = 0;
        }
        if (i == n) break;
    }
    return total;
}

}  // namespace

TEST_CASE("degenerate one-state chain scores probability 1") {
    MarkovChain c;
    c.num_states = 1;
    c.p_init = {1.0};
    c.p_tr = {1.0};
    std::vector<std::size_t> seq{0, 0, 0};
    CHECK(log_prob(c, seq) == doctest::Approx(0.0));
}

TEST_CASE("hand-computed three-step product") {
    MarkovChain c = two_state();
    std::vector<std::size_t> seq{0, 0, 1};
    CHECK(std::abs(log_prob(c, seq) - std::log(0.045)) < 1e-12);
}

TEST_CASE("zero transition probability yields -inf") {
    MarkovChain c;
    c.num_states = 2;
    c.p_init = {1.0, 0.0};
    c.p_tr = {0.0, 1.0, 1.0, 0.0};
    std::vector<std::size_t> seq{0, 0};  // p_tr(0,0) = 0
    CHECK(std::isinf(log_prob(c, seq)));
    CHECK(log_prob(c, seq) < 0);
}

TEST_CASE("log_prob input validation") {
    MarkovChain c = two_state();
    CHECK_THROWS_AS(log_prob(c, std::vector<std::size_t>{}), MarkovError);
    CHECK_THROWS_AS(log_prob(c, std::vector<std::size_t>{0, 2}), MarkovError);
}

TEST_CASE("probabilities over all sequences sum to one") {
    std::mt19937_64 rng(42);
    for (std::size_t k = 1; k <= 4; ++k) {
        MarkovChain c = random_chain(k, rng);
        for (std::size_t n = 1; n <= 5; ++n)
            CHECK(total_prob(c, n) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("log_prob non-increasing under extension") {
    std::mt19937_64 rng(11);
    MarkovChain c = random_chain(3, rng);
    std::uniform_int_distribution<std::size_t> pick(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> seq{pick(rng)};
        double prev = log_prob(c, seq);
        for (int step = 0; step < 10; ++step) {
            seq.push_back(pick(rng));
            double cur = log_prob(c, seq);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("empirical_fit direct frequencies and zero-row rule") {
    std::vector<std::vector<std::size_t>> seqs{{0, 1}, {0, 1}};
    MarkovChain c = empirical_fit(seqs, 2, 0.0);
    CHECK(c.p_init[0] == doctest::Approx(1.0));
    CHECK(c.p_init[1] == doctest::Approx(0.0));
    CHECK(c.tr(0, 0) == doctest::Approx(0.0));
    CHECK(c.tr(0, 1) == doctest::Approx(1.0));
    // state 1 has no outgoing observations: uniform
    CHECK(c.tr(1, 0) == doctest::Approx(0.5));
    CHECK(c.tr(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("empirical_fit with pseudocount 1") {
    std::vector<std::vector<std::size_t>> seqs{{0, 1}, {0, 1}};
    MarkovChain c = empirical_fit(seqs, 2, 1.0);
    CHECK(c.p_init[0] == doctest::Approx(0.75));
    CHECK(c.p_init[1] == doctest::Approx(0.25));
    CHECK(c.tr(0, 0) == doctest::Approx(0.25));
    CHECK(c.tr(0, 1) == doctest::Approx(0.75));
}

TEST_CASE("single observation: all transition rows uniform") {
    MarkovChain c = empirical_fit({{0}}, 3, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(c.tr(i, j) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("empirical_fit rejects empty input, validates output invariants") {
    CHECK_THROWS_AS(empirical_fit({}, 2, 0.0), MarkovError);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pick(0, 3);
    for (double pc : {0.0, 0.5, 1.0, 10.0}) {
        std::vector<std::vector<std::size_t>> seqs;
        for (int i = 0; i < 20; ++i) {
            std::vector<std::size_t> s;
            for (int j = 0; j < 8; ++j) s.push_back(pick(rng));
            seqs.push_back(s);
        }
        MarkovChain c = empirical_fit(seqs, 4, pc);
        CHECK_NOTHROW(c.validate());
        if (pc > 0.0) {
            std::vector<std::size_t> any{3, 0, 2, 2, 1};
            CHECK(std::isfinite(log_prob(c, any)));
        }
    }
}

TEST_CASE("chain JSON round-trip") {
    MarkovChain c = two_state();
    MarkovChain back = MarkovChain::from_json(c.to_json());
    CHECK(back.p_init == c.p_init);
    CHECK(back.p_tr == c.p_tr);
}
