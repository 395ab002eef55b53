#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace dynhat {

struct EvalReport {
    double bleu = 0.0;            // [0, 100]
    double token_accuracy = 0.0;  // [0, 1]
    int n_sentences = 0;
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Corpus BLEU with a single reference per candidate: geometric mean of
/// clipped modified n-gram precisions for n = 1..max_n over the n-gram
/// orders the candidates actually realize, times the brevity penalty
/// exp(min(0, 1 - ref_len/cand_len)), scaled to [0, 100]. No smoothing: any
/// realized order with zero matches gives 0. Exact-token matching.
double bleu_corpus(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references, int max_n = 4);

/// Position-wise exact-match fraction over the min-length overlap of each
/// pair, per corpus token.
double token_accuracy(const std::vector<std::vector<int>>& candidates,
                      const std::vector<std::vector<int>>& references);

}  // namespace dynhat
