#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>

#include "dynhat/corpus.hpp"
#include "dynhat/rng.hpp"

#include "testutil.hpp"

using namespace dynhat;

TEST_SUITE("corpus") {

TEST_CASE("target is the reversed source mapped through sigma") {
    const int vocab = 32;
    const std::uint64_t seed = 4, sigma_seed = 4;
    const auto c = generate_bijective_reversal(vocab, 50, 3, 8, seed, sigma_seed);
    const auto sigma = reversal_bijection(vocab, sigma_seed);
    for (const auto& [src, tgt] : c.pairs) {
        REQUIRE(src.size() == tgt.size());
        for (std::size_t i = 0; i < src.size(); ++i) {
            const int s = src[src.size() - 1 - i];
            CHECK(tgt[i] == sigma[static_cast<std::size_t>(s - kNumReservedIds)]);
        }
    }
}

TEST_CASE("sigma round-trip recovers the source for every pair") {
    const auto c = generate_bijective_reversal(24, 100, 1, 12, 9, 9);
    const auto sigma = reversal_bijection(24, 9);
    std::vector<int> inverse(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i)
        inverse[static_cast<std::size_t>(sigma[i] - kNumReservedIds)] =
            static_cast<int>(i) + kNumReservedIds;
    for (const auto& [src, tgt] : c.pairs) {
        std::vector<int> recovered(tgt.rbegin(), tgt.rend());
        for (int& t : recovered) t = inverse[static_cast<std::size_t>(t - kNumReservedIds)];
        CHECK(recovered == src);
    }
}

TEST_CASE("generation is deterministic and length-bounded") {
    const auto a = generate_bijective_reversal(16, 30, 2, 6, 5, 5);
    const auto b = generate_bijective_reversal(16, 30, 2, 6, 5, 5);
    CHECK(a.pairs == b.pairs);
    for (const auto& [src, tgt] : a.pairs) {
        CHECK(src.size() >= 2);
        CHECK(src.size() <= 6);
        for (int t : src) {
            CHECK(t >= kNumReservedIds);
            CHECK(t < 16);
        }
    }
}

TEST_CASE("token frequency across 10^4 pairs is uniform within 5 sigma") {
    const int vocab = 16;
    const auto c = generate_bijective_reversal(vocab, 10000, 4, 8, 77, 77);
    std::map<int, long long> counts;
    long long draws = 0;
    for (const auto& [src, tgt] : c.pairs)
        for (int t : src) {
            counts[t] += 1;
            draws += 1;
        }
    const int k = vocab - kNumReservedIds;
    const double p = 1.0 / k;
    const double sd = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
    REQUIRE(static_cast<int>(counts.size()) == k);
    for (const auto& [token, count] : counts)
        CHECK(std::abs(static_cast<double>(count) - draws * p) < 5.0 * sd);
}

TEST_CASE("splits share the bijection but not sentences") {
    const auto t = generate_reversal_splits(32, 100, 40, 40, 3, 8, 123);
    CHECK(t.train.split == "train");
    CHECK(t.valid.split == "valid");
    CHECK(t.test.split == "test");

    const auto sigma = reversal_bijection(32, 123);
    for (const Corpus* c : {&t.train, &t.valid, &t.test})
        for (const auto& [src, tgt] : c->pairs)
            CHECK(tgt.front() == sigma[static_cast<std::size_t>(src.back() - kNumReservedIds)]);

    std::set<std::vector<int>> train_sents;
    for (const auto& [src, tgt] : t.train.pairs) train_sents.insert(src);
    int overlap = 0;
    for (const auto& [src, tgt] : t.valid.pairs) overlap += train_sents.count(src);
    CHECK(overlap <= 2);  // random collisions only
}

TEST_CASE("argument validation") {
    CHECK_THROWS_AS(generate_bijective_reversal(4, 10, 1, 4, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_bijective_reversal(16, 0, 1, 4, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_bijective_reversal(16, 10, 0, 4, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_bijective_reversal(16, 10, 4, 65, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_bijective_reversal(16, 10, 5, 4, 1, 1), std::invalid_argument);
}

TEST_CASE("batch iterator covers the corpus exactly once per epoch") {
    const auto c = generate_bijective_reversal(16, 23, 2, 6, 3, 3);
    BatchIterator it(c, 4, 99);
    for (int epoch = 0; epoch < 2; ++epoch) {
        const auto batches = it.epoch(epoch);
        std::multiset<std::vector<int>> seen;
        for (const auto& b : batches) {
            REQUIRE(b.src.size() == b.tgt.size());
            REQUIRE(b.src.size() == b.src_pad.size());
            for (std::size_t i = 0; i < b.src.size(); ++i) {
                std::vector<int> depadded;
                for (std::size_t j = 0; j < b.src[i].size(); ++j) {
                    CHECK(b.src_pad[i][j] == (b.src[i][j] == kPadId));
                    if (!b.src_pad[i][j]) depadded.push_back(b.src[i][j]);
                }
                seen.insert(depadded);
            }
        }
        std::multiset<std::vector<int>> expected;
        for (const auto& [src, tgt] : c.pairs) expected.insert(src);
        CHECK(seen == expected);
    }
    // deterministic per epoch index
    CHECK(it.epoch(0).size() == it.epoch(0).size());
    const auto a = it.epoch(1);
    const auto b = it.epoch(1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].src == b[i].src);
}

TEST_CASE("batch_size one yields singleton unpadded batches") {
    const auto c = generate_bijective_reversal(16, 7, 2, 6, 8, 8);
    BatchIterator it(c, 1, 1);
    for (const auto& b : it.epoch(0)) {
        REQUIRE(b.src.size() == 1);
        for (bool pad : b.src_pad[0]) CHECK(!pad);
        for (bool pad : b.tgt_pad[0]) CHECK(!pad);
    }
}

TEST_CASE("corpus and vocab files round-trip") {
    testutil::TempDir dir("corpus_io");
    const auto c = generate_bijective_reversal(16, 12, 2, 6, 2, 2, "valid");
    save_corpus_file(c, dir.file("valid.jsonl"));
    const auto loaded = load_corpus_file(dir.file("valid.jsonl"), 16, "valid");
    CHECK(loaded.pairs == c.pairs);
    CHECK(loaded.split == "valid");

    save_vocab_file(16, dir.file("vocab.json"));
    CHECK(load_vocab_file(dir.file("vocab.json")) == 16);
}

}  // TEST_SUITE
