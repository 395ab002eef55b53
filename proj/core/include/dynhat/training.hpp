#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynhat/corpus.hpp"
#include "dynhat/elastic_model.hpp"

namespace dynhat {

struct TrainSettings {
    int steps = 2000;
    int batch_size = 16;
    double learning_rate = 5e-4;
    int warmup_steps = 400;
    double label_smoothing = 0.1;
    double gradient_clip_norm = 1.0;
    std::uint64_t seed = 1;
};

/// Throws std::invalid_argument on out-of-range fields.
void check_settings(const TrainSettings& s);

struct StepRecord {
    int step;
    std::uint64_t config_hash;
    double loss;
};
using TrainLog = std::vector<StepRecord>;

/// Thrown when a training step produces a non-finite loss; carries the step
/// and offending config for diagnosis.
struct TrainingDiverged : std::runtime_error {
    TrainingDiverged(int step, std::string config_json, double loss);
    int step;
    std::string config_json;
    double loss;
};

/// Uniform weight-shared training: every step samples one SubConfig from the
/// space, computes label-smoothed cross-entropy through its inherited view
/// and updates only the parameters that view touches. Deterministic per
/// settings.seed.
TrainLog train_super(SuperWeights& bank, const DesignSpace& space, const Corpus& train_corpus,
                     const TrainSettings& settings);

/// Same loop with the config fixed and a freshly initialized bank sized
/// exactly to it.
std::pair<SuperWeights, TrainLog> train_from_scratch(const SubConfig& cfg,
                                                     const Corpus& train_corpus,
                                                     const TrainSettings& settings);

/// Mean token-level cross-entropy under teacher forcing, in nats per token.
/// No label smoothing; padded positions excluded.
double validation_loss(const SubModelView& view, const Corpus& val_corpus);

/// Sum of per-token losses and token count for one (src, tgt) pair; the
/// building block validation_loss aggregates.
std::pair<double, int> sentence_loss_sum(const SubModelView& view, std::span<const int> src,
                                         std::span<const int> tgt);

/// Analytic gradients for one probe batch, scattered to full bank shapes
/// (exact zeros outside the view's slices).
std::vector<Mat> compute_bank_gradients(const SuperWeights& bank, const SubConfig& cfg,
                                        const Corpus& probe, double label_smoothing = 0.0);

struct GradCheckResult {
    double max_rel_error = 0.0;        // analytic vs central differences, touched params
    int n_checked = 0;
    double max_abs_outside = 0.0;      // numeric |dLoss| when perturbing untouched params
    int n_outside_checked = 0;
};

/// Central-difference check (step 1e-4) on >= n_params randomly selected
/// touched parameters of a freshly initialized exact-size model. Keep the
/// config tiny (dims <= 8) so the differences stay tractable.
GradCheckResult gradient_check(const SubConfig& cfg, const Corpus& probe_batch, int n_params = 200,
                               std::uint64_t seed = 1);

void save_train_log(const TrainLog& log, const std::string& path);
TrainLog load_train_log(const std::string& path);

}  // namespace dynhat
