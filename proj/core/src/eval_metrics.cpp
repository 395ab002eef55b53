#include "dynhat/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dynhat {

namespace {

using Ngram = std::vector<int>;

std::map<Ngram, int> ngram_counts(const std::vector<int>& tokens, int n) {
    std::map<Ngram, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
        counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1;
    return counts;
}

void check_corpus(const std::vector<std::vector<int>>& candidates,
                  const std::vector<std::vector<int>>& references, const char* what) {
    if (candidates.size() != references.size())
        throw std::invalid_argument(std::string(what) + ": candidate/reference count mismatch");
    if (candidates.empty()) throw std::invalid_argument(std::string(what) + ": empty corpus");
}

}  // namespace

void to_json(nlohmann::json& j, const EvalReport& r) {
    j = nlohmann::json{
        {"format_version", 1},
        {"bleu", r.bleu},
        {"token_accuracy", r.token_accuracy},
        {"n_sentences", r.n_sentences},
    };
}

double bleu_corpus(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references, int max_n) {
    check_corpus(candidates, references, "bleu_corpus");
    if (max_n < 1) throw std::invalid_argument("bleu_corpus: max_n must be >= 1");

    std::vector<long long> matches(static_cast<std::size_t>(max_n), 0);
    std::vector<long long> totals(static_cast<std::size_t>(max_n), 0);
    long long cand_len = 0, ref_len = 0;

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i];
        const auto& ref = references[i];
        cand_len += static_cast<long long>(cand.size());
        ref_len += static_cast<long long>(ref.size());
        for (int n = 1; n <= max_n; ++n) {
            const auto cc = ngram_counts(cand, n);
            if (cc.empty()) continue;
            const auto rc = ngram_counts(ref, n);
            for (const auto& [gram, count] : cc) {
                totals[static_cast<std::size_t>(n - 1)] += count;
                auto it = rc.find(gram);
                if (it != rc.end())
                    matches[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
            }
        }
    }

    if (cand_len == 0) return 0.0;

    // Geometric mean over the orders the candidates realize; an unrealized
    // order (total 0) carries no signal, a realized order with zero matches
    // zeroes the score.
    double log_sum = 0.0;
    int included = 0;
    for (int n = 1; n <= max_n; ++n) {
        const auto i = static_cast<std::size_t>(n - 1);
        if (totals[i] == 0) continue;
        if (matches[i] == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matches[i]) / static_cast<double>(totals[i]));
        included += 1;
    }
    if (included == 0) return 0.0;

    const double brevity =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)));
    return 100.0 * brevity * std::exp(log_sum / included);
}

double token_accuracy(const std::vector<std::vector<int>>& candidates,
                      const std::vector<std::vector<int>>& references) {
    check_corpus(candidates, references, "token_accuracy");
    long long match = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i];
        const auto& ref = references[i];
        const std::size_t overlap = std::min(cand.size(), ref.size());
        for (std::size_t t = 0; t < overlap; ++t)
            if (cand[t] == ref[t]) match += 1;
        total += static_cast<long long>(overlap);
    }
    return total == 0 ? 0.0 : static_cast<double>(match) / static_cast<double>(total);
}

}  // namespace dynhat
