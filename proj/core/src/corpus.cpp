#include "dynhat/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "dynhat/rng.hpp"

namespace dynhat {

namespace {

void check_gen_args(int vocab_size, int n_pairs, int len_min, int len_max) {
    if (vocab_size < 8)
        throw std::invalid_argument("corpus: vocab_size must be >= 8");
    if (n_pairs < 1) throw std::invalid_argument("corpus: n_pairs must be >= 1");
    if (len_min < 1 || len_max > 64 || len_min > len_max)
        throw std::invalid_argument("corpus: length range must satisfy 1 <= min <= max <= 64");
}

}  // namespace

std::vector<int> reversal_bijection(int vocab_size, std::uint64_t sigma_seed) {
    const int n = vocab_size - kNumReservedIds;
    std::vector<int> sigma(static_cast<std::size_t>(n));
    std::iota(sigma.begin(), sigma.end(), kNumReservedIds);
    auto rng = make_rng(mix_seed(sigma_seed, 0x516));
    for (int i = n - 1; i > 0; --i) {
        const auto j = pick_index(rng, static_cast<std::size_t>(i + 1));
        std::swap(sigma[static_cast<std::size_t>(i)], sigma[j]);
    }
    return sigma;
}

Corpus generate_bijective_reversal(int vocab_size, int n_pairs, int len_min, int len_max,
                                   std::uint64_t seed, std::uint64_t sigma_seed,
                                   std::string split) {
    check_gen_args(vocab_size, n_pairs, len_min, len_max);
    const std::vector<int> sigma = reversal_bijection(vocab_size, sigma_seed);

    Corpus c;
    c.vocab_size = vocab_size;
    c.split = std::move(split);
    c.pairs.reserve(static_cast<std::size_t>(n_pairs));
    const int n_content = vocab_size - kNumReservedIds;
    for (int i = 0; i < n_pairs; ++i) {
        auto rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        const int len = len_min + static_cast<int>(pick_index(rng, static_cast<std::size_t>(len_max - len_min + 1)));
        std::vector<int> src(static_cast<std::size_t>(len));
        for (int& t : src)
            t = kNumReservedIds + static_cast<int>(pick_index(rng, static_cast<std::size_t>(n_content)));
        std::vector<int> tgt(src.rbegin(), src.rend());
        for (int& t : tgt) t = sigma[static_cast<std::size_t>(t - kNumReservedIds)];
        c.pairs.emplace_back(std::move(src), std::move(tgt));
    }
    return c;
}

TaskSplits generate_reversal_splits(int vocab_size, int n_train, int n_valid, int n_test,
                                    int len_min, int len_max, std::uint64_t seed) {
    TaskSplits t;
    t.train = generate_bijective_reversal(vocab_size, n_train, len_min, len_max,
                                          mix_seed(seed, 1), seed, "train");
    t.valid = generate_bijective_reversal(vocab_size, n_valid, len_min, len_max,
                                          mix_seed(seed, 2), seed, "valid");
    t.test = generate_bijective_reversal(vocab_size, n_test, len_min, len_max,
                                         mix_seed(seed, 3), seed, "test");
    return t;
}

BatchIterator::BatchIterator(const Corpus& corpus, int batch_size, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw std::invalid_argument("BatchIterator: batch_size must be >= 1");
}

std::vector<Batch> BatchIterator::epoch(int epoch_index) const {
    const auto n = corpus_->pairs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(mix_seed(seed_, 0xE90C000 + static_cast<std::uint64_t>(epoch_index)));
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[pick_index(rng, i)]);

    std::vector<Batch> batches;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size_)) {
        const std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size_));
        Batch b;
        std::size_t src_max = 0, tgt_max = 0;
        for (std::size_t i = at; i < end; ++i) {
            src_max = std::max(src_max, corpus_->pairs[order[i]].first.size());
            tgt_max = std::max(tgt_max, corpus_->pairs[order[i]].second.size());
        }
        for (std::size_t i = at; i < end; ++i) {
            const auto& [src, tgt] = corpus_->pairs[order[i]];
            std::vector<int> ps(src_max, kPadId), pt(tgt_max, kPadId);
            std::copy(src.begin(), src.end(), ps.begin());
            std::copy(tgt.begin(), tgt.end(), pt.begin());
            std::vector<bool> ms(src_max, true), mt(tgt_max, true);
            std::fill(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(src.size()), false);
            std::fill(mt.begin(), mt.begin() + static_cast<std::ptrdiff_t>(tgt.size()), false);
            b.src.push_back(std::move(ps));
            b.tgt.push_back(std::move(pt));
            b.src_pad.push_back(std::move(ms));
            b.tgt_pad.push_back(std::move(mt));
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

void save_corpus_file(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& [src, tgt] : corpus.pairs) {
        nlohmann::json j{{"src", src}, {"tgt", tgt}};
        out << j.dump() << "\n";
    }
}

Corpus load_corpus_file(const std::string& path, int vocab_size, std::string split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    Corpus c;
    c.vocab_size = vocab_size;
    c.split = std::move(split);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        c.pairs.emplace_back(j.at("src").get<std::vector<int>>(),
                             j.at("tgt").get<std::vector<int>>());
    }
    return c;
}

void save_vocab_file(int vocab_size, const std::string& path) {
    nlohmann::json j{
        {"format_version", 1},
        {"vocab_size", vocab_size},
        {"pad_id", kPadId},
        {"bos_id", kBosId},
        {"eos_id", kEosId},
        {"unk_id", kUnkId},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

int load_vocab_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    auto j = nlohmann::json::parse(in);
    return j.at("vocab_size").get<int>();
}

}  // namespace dynhat
