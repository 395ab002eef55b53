#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dynhat/design_space.hpp"
#include "dynhat/elastic_model.hpp"

namespace dynhat {

struct LatencySample {
    SubConfig config;
    std::vector<double> features;  // encode_features(config)
    double latency_ms = 0.0;
    std::string hardware_id;
};

/// Deterministic stand-in for device measurement: an affine cost over the
/// config's dimensions plus optional Gaussian noise. The two presets echo
/// the hardware contrast that decoder depth dominates everywhere while
/// width is nearly free on wide parallel hardware and expensive on narrow
/// hardware.
struct CostModel {
    double base_ms = 0.0;
    double per_decoder_layer_ms = 0.0;
    double per_ffn_unit_ms = 0.0;       // per summed FFN width unit (both stacks)
    double per_embed_unit_ms = 0.0;     // per embedding width unit (both sides)
    double per_attended_layer_ms = 0.0; // per attended encoder layer, summed over decoder layers
    double noise_sd_ms = 0.0;

    double analytic_ms(const SubConfig& cfg) const;  // noise-free cost

    static CostModel sim_gpu();
    static CostModel sim_cpu();
};

/// Preset lookup by id ("sim-gpu" | "sim-cpu"); throws on unknown ids.
CostModel cost_model_by_id(const std::string& hardware_id);

/// Sort ascending, drop round(trim_frac*n) samples from each end, return the
/// mean of the rest. Throws for n < 3, trim_frac outside [0, 0.5), or a trim
/// that leaves nothing.
double trimmed_mean_latency(std::vector<double> samples_ms, double trim_frac);

struct MeasureProtocol {
    int sentence_len = 30;
    int repeats = 300;
    double trim_frac = 0.10;
    int warmup_runs = 5;
};

/// One timed translation of a `sentence_len`-token source into exactly
/// `sentence_len` tokens; returns elapsed milliseconds.
using RunOnce = std::function<double(int sentence_len)>;

/// The measurement protocol: warm-up runs discarded, `repeats` timed runs,
/// trimmed mean of the rest.
double measure_model_latency(const RunOnce& runner, const MeasureProtocol& protocol = {});

/// Wall-clock runner over a live model view. Decodes a fixed seeded source
/// with eos suppressed until the target length is reached.
RunOnce make_view_runner(const SubModelView& view, std::uint64_t seed);

/// Cost-model runner: returns analytic cost plus seeded Gaussian noise
/// without sleeping. Deterministic sequence per seed.
RunOnce make_cost_model_runner(const CostModel& model, const SubConfig& cfg, std::uint64_t seed);

using MeasureFn = std::function<double(const SubConfig&)>;

struct DatasetBuildReport {
    std::vector<LatencySample> samples;
    int n_failed = 0;
};

/// Measures n uniform configs from the space. Failed measurements are
/// skipped and counted; the config sequence is deterministic per seed.
DatasetBuildReport build_latency_dataset(const DesignSpace& space, int n_samples,
                                         const MeasureFn& measure, std::uint64_t seed,
                                         const std::string& hardware_id);

/// Least-squares linear model over encode_features with intercept.
struct LatencyPredictor {
    std::vector<double> coefficients;  // aligned with feature_names()
    double intercept = 0.0;
    double heldout_rmse = 0.0;
    bool ridge_fallback = false;  // set when the design matrix was rank-deficient

    double predict_features(const std::vector<double>& features) const;
    double predict(const SubConfig& cfg) const;
};

/// Fits on a deterministic 80% split and reports RMSE on the held-out 20%.
/// Rank-deficient data falls back to a small ridge penalty and sets the
/// warning flag. Throws unless the dataset has at least 2x feature-count
/// samples.
LatencyPredictor fit_predictor(const std::vector<LatencySample>& dataset);

// Line-delimited JSON {"hardware_id", "config", "features", "latency_ms"}.
void save_latency_dataset(const std::vector<LatencySample>& dataset, const std::string& path);
std::vector<LatencySample> load_latency_dataset(const std::string& path);

void save_predictor(const LatencyPredictor& p, const std::string& path);
LatencyPredictor load_predictor(const std::string& path);

}  // namespace dynhat
