#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace dynhat {

/// File paths and seeds for one pipeline run. A manifest is how runs stay
/// replayable: every stage reads and writes only the paths named here.
struct PipelineManifest {
    std::string space_path;
    std::string corpus_dir;
    std::string bank_path;
    std::string latency_dataset_path;
    std::string predictor_path;
    std::string library_path;
    std::string train_log_path;
    std::string event_log_path;
    std::string hardware = "sim-gpu";  // real | sim-gpu | sim-cpu
    std::uint64_t corpus_seed = 1;
    std::uint64_t train_seed = 1;
    std::uint64_t latency_seed = 1;
    std::uint64_t search_seed = 1;

    bool operator==(const PipelineManifest&) const = default;
};

enum class PipelineStage {
    gen_corpus,
    train_super,
    collect_latency,
    fit_predictor,
    search,
    reduce_space,
    evaluate,
    run,
};

/// Paths the stage reads that do not exist yet. Empty means the stage's
/// inputs are all present.
std::vector<std::string> manifest_missing_files(const PipelineManifest& m, PipelineStage stage);

void to_json(nlohmann::json& j, const PipelineManifest& m);
void from_json(const nlohmann::json& j, PipelineManifest& m);

void save_manifest(const PipelineManifest& m, const std::string& path);
PipelineManifest load_manifest(const std::string& path);

}  // namespace dynhat
