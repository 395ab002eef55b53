#include "dynhat/operating_library.hpp"

#include <fstream>
#include <stdexcept>

namespace dynhat {

void to_json(nlohmann::json& j, const OperatingPoint& p) {
    j = nlohmann::json{
        {"constraint_ms", p.constraint_ms},
        {"config", p.config},
        {"predicted_ms", p.predicted_ms},
        {"measured_ms", p.measured_latency_ms},
        {"val_loss", p.val_loss},
    };
    if (p.bleu) j["bleu"] = *p.bleu;
}

void from_json(const nlohmann::json& j, OperatingPoint& p) {
    j.at("constraint_ms").get_to(p.constraint_ms);
    j.at("config").get_to(p.config);
    j.at("predicted_ms").get_to(p.predicted_ms);
    p.measured_latency_ms = j.at("measured_ms").get<double>();
    j.at("val_loss").get_to(p.val_loss);
    if (j.contains("bleu")) p.bleu = j.at("bleu").get<double>();
}

void save_library(const OperatingLibrary& lib, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : lib.points) arr.push_back(p);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << arr.dump(2) << "\n";
}

OperatingLibrary load_library(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    auto arr = nlohmann::json::parse(in);
    if (!arr.is_array()) throw std::runtime_error("library file must be a JSON array: " + path);
    OperatingLibrary lib;
    for (const auto& j : arr) lib.points.push_back(j.get<OperatingPoint>());
    return lib;
}

}  // namespace dynhat
