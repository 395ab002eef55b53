#include "dynhat/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace dynhat {

namespace {

void require(std::vector<std::string>& missing, const std::string& path) {
    if (path.empty() || !std::filesystem::exists(path)) missing.push_back(path);
}

}  // namespace

std::vector<std::string> manifest_missing_files(const PipelineManifest& m, PipelineStage stage) {
    std::vector<std::string> missing;
    switch (stage) {
        case PipelineStage::gen_corpus:
            break;  // produces the corpus, needs nothing
        case PipelineStage::train_super:
            require(missing, m.space_path);
            require(missing, m.corpus_dir);
            break;
        case PipelineStage::collect_latency:
            require(missing, m.space_path);
            if (m.hardware == "real") require(missing, m.bank_path);
            break;
        case PipelineStage::fit_predictor:
            require(missing, m.latency_dataset_path);
            break;
        case PipelineStage::search:
            require(missing, m.space_path);
            require(missing, m.predictor_path);
            require(missing, m.bank_path);
            require(missing, m.corpus_dir);
            break;
        case PipelineStage::reduce_space:
            require(missing, m.space_path);
            require(missing, m.library_path);
            break;
        case PipelineStage::evaluate:
            require(missing, m.bank_path);
            require(missing, m.corpus_dir);
            break;
        case PipelineStage::run:
            require(missing, m.bank_path);
            require(missing, m.library_path);
            break;
    }
    return missing;
}

void to_json(nlohmann::json& j, const PipelineManifest& m) {
    j = nlohmann::json{
        {"format_version", 1},
        {"space", m.space_path},
        {"corpus_dir", m.corpus_dir},
        {"bank", m.bank_path},
        {"latency_dataset", m.latency_dataset_path},
        {"predictor", m.predictor_path},
        {"library", m.library_path},
        {"train_log", m.train_log_path},
        {"event_log", m.event_log_path},
        {"hardware", m.hardware},
        {"seeds",
         {{"corpus", m.corpus_seed},
          {"train", m.train_seed},
          {"latency", m.latency_seed},
          {"search", m.search_seed}}},
    };
}

void from_json(const nlohmann::json& j, PipelineManifest& m) {
    j.at("space").get_to(m.space_path);
    j.at("corpus_dir").get_to(m.corpus_dir);
    j.at("bank").get_to(m.bank_path);
    j.at("latency_dataset").get_to(m.latency_dataset_path);
    j.at("predictor").get_to(m.predictor_path);
    j.at("library").get_to(m.library_path);
    j.at("train_log").get_to(m.train_log_path);
    j.at("event_log").get_to(m.event_log_path);
    j.at("hardware").get_to(m.hardware);
    const auto& seeds = j.at("seeds");
    seeds.at("corpus").get_to(m.corpus_seed);
    seeds.at("train").get_to(m.train_seed);
    seeds.at("latency").get_to(m.latency_seed);
    seeds.at("search").get_to(m.search_seed);
}

void save_manifest(const PipelineManifest& m, const std::string& path) {
    nlohmann::json j = m;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

PipelineManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return nlohmann::json::parse(in).get<PipelineManifest>();
}

}  // namespace dynhat
