#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dynhat/eval_metrics.hpp"
#include "dynhat/rng.hpp"

using namespace dynhat;

namespace {
// word ids for readable fixtures
constexpr int THE = 10, CAT = 11, SAT = 12, DOG = 13, RAN = 14;
}

TEST_SUITE("eval_metrics") {

TEST_CASE("perfect match scores 100") {
    const std::vector<std::vector<int>> corpus = {{THE, CAT, SAT}, {DOG, RAN}, {THE}};
    CHECK(bleu_corpus(corpus, corpus) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("clipped unigrams with zero bigram matches score 0") {
    // "the the the the" vs "the cat": unigram precision 1/4, bigram 0.
    const std::vector<std::vector<int>> cand = {{THE, THE, THE, THE}};
    const std::vector<std::vector<int>> ref = {{THE, CAT}};
    CHECK(bleu_corpus(cand, ref) == 0.0);
}

TEST_CASE("brevity penalty fixture: 100 * exp(-0.5)") {
    // "the cat" vs "the cat sat": precisions 1 for n <= 2,
    // brevity penalty exp(1 - 3/2).
    const std::vector<std::vector<int>> cand = {{THE, CAT}};
    const std::vector<std::vector<int>> ref = {{THE, CAT, SAT}};
    const double expected = 100.0 * std::exp(-0.5);
    CHECK(std::abs(bleu_corpus(cand, ref) - expected) < 1e-9);
}

TEST_CASE("bleu is invariant to sentence order") {
    std::vector<std::vector<int>> cand = {{THE, CAT}, {DOG, RAN, SAT}, {SAT, SAT, THE, CAT}};
    std::vector<std::vector<int>> ref = {{THE, CAT, SAT}, {DOG, RAN, RAN}, {SAT, THE, THE, CAT}};
    const double base = bleu_corpus(cand, ref);
    std::vector<std::size_t> perm = {2, 0, 1};
    std::vector<std::vector<int>> cand_p, ref_p;
    for (std::size_t i : perm) {
        cand_p.push_back(cand[i]);
        ref_p.push_back(ref[i]);
    }
    CHECK(bleu_corpus(cand_p, ref_p) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("bleu never exceeds 100 and is 100 only for an exact corpus match") {
    auto rng = make_rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<int>> cand, ref;
        bool exact = true;
        for (int i = 0; i < 4; ++i) {
            std::vector<int> r, c;
            const int len = 2 + static_cast<int>(pick_index(rng, 6));
            for (int t = 0; t < len; ++t) r.push_back(10 + static_cast<int>(pick_index(rng, 5)));
            c = r;
            if (trial % 2 == 1 && i == 0) {
                c[0] = 99;  // off-vocabulary token forces a mismatch
                exact = false;
            }
            cand.push_back(c);
            ref.push_back(r);
        }
        const double score = bleu_corpus(cand, ref);
        CHECK(score <= 100.0 + 1e-12);
        if (exact) CHECK(score == doctest::Approx(100.0).epsilon(1e-12));
        else CHECK(score < 100.0);
    }
}

TEST_CASE("truncating exact-prefix candidates never raises the score") {
    const std::vector<std::vector<int>> ref = {{THE, CAT, SAT, DOG, RAN}};
    double prev = -1.0;
    for (int keep = 1; keep <= 5; ++keep) {
        const std::vector<std::vector<int>> cand = {
            std::vector<int>(ref[0].begin(), ref[0].begin() + keep)};
        const double score = bleu_corpus(cand, ref);
        CHECK(score >= prev);
        prev = score;
    }
    CHECK(prev == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("bleu argument errors") {
    CHECK_THROWS_AS(bleu_corpus({{1}}, {{1}, {2}}), std::invalid_argument);
    CHECK_THROWS_AS(bleu_corpus({}, {}), std::invalid_argument);
}

TEST_CASE("token accuracy fixtures") {
    const std::vector<std::vector<int>> a = {{1, 2, 3}, {4, 5}};
    CHECK(token_accuracy(a, a) == 1.0);

    const std::vector<std::vector<int>> b = {{7, 8, 9}, {10, 11}};
    CHECK(token_accuracy(a, b) == 0.0);

    // Half-matching fixture: 3 of 6 overlapping positions agree.
    const std::vector<std::vector<int>> cand = {{1, 2, 3, 4}, {5, 6}};
    const std::vector<std::vector<int>> ref = {{1, 9, 3, 9}, {5, 9}};
    CHECK(token_accuracy(cand, ref) == 0.5);

    CHECK_THROWS_AS(token_accuracy({}, {}), std::invalid_argument);
}

TEST_CASE("eval report serializes") {
    EvalReport r{42.5, 0.75, 200};
    nlohmann::json j = r;
    CHECK(j.at("bleu").get<double>() == 42.5);
    CHECK(j.at("token_accuracy").get<double>() == 0.75);
    CHECK(j.at("n_sentences").get<int>() == 200);
}

}  // TEST_SUITE
