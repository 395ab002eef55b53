#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dynhat/token_ids.hpp"

namespace dynhat {

/// A synthetic pre-tokenized translation corpus. All ids are < vocab_size;
/// ids 0..3 are reserved (pad/bos/eos/unk) and never appear in sentences.
struct Corpus {
    int vocab_size = 0;
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
    std::string split;  // "train" | "valid" | "test"
};

/// Reversal task: target = source reversed, each token mapped through a
/// fixed seeded bijection over the content ids. Solving it needs both
/// content routing (cross-attention) and position handling (the reversal).
/// `sigma_seed` pins the bijection so several splits share one task.
Corpus generate_bijective_reversal(int vocab_size, int n_pairs, int len_min, int len_max,
                                   std::uint64_t seed, std::uint64_t sigma_seed,
                                   std::string split = "train");

/// The bijection itself, for oracle checks: sigma[i] is the image of content
/// id i + kNumReservedIds.
std::vector<int> reversal_bijection(int vocab_size, std::uint64_t sigma_seed);

struct TaskSplits {
    Corpus train, valid, test;
};

/// Train/valid/test splits of one reversal task: shared bijection, disjoint
/// per-sentence seed streams.
TaskSplits generate_reversal_splits(int vocab_size, int n_train, int n_valid, int n_test,
                                    int len_min, int len_max, std::uint64_t seed);

struct Batch {
    std::vector<std::vector<int>> src, tgt;            // padded with kPadId
    std::vector<std::vector<bool>> src_pad, tgt_pad;   // true at padded positions
};

/// Deterministic epoch batching: a fresh shuffle per epoch index, every
/// sentence exactly once per epoch.
class BatchIterator {
  public:
    BatchIterator(const Corpus& corpus, int batch_size, std::uint64_t seed);
    std::vector<Batch> epoch(int epoch_index) const;

  private:
    const Corpus* corpus_;
    int batch_size_;
    std::uint64_t seed_;
};

// Line-delimited JSON {"src":[...],"tgt":[...]} plus a vocab file.
void save_corpus_file(const Corpus& corpus, const std::string& path);
Corpus load_corpus_file(const std::string& path, int vocab_size, std::string split);
void save_vocab_file(int vocab_size, const std::string& path);
int load_vocab_file(const std::string& path);

}  // namespace dynhat
