#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynhat/design_space.hpp"

namespace dynhat {

/// One searched configuration paired with its measured latency and quality;
/// the unit the runtime switches between.
struct OperatingPoint {
    SubConfig config;
    double constraint_ms = 0.0;
    double predicted_ms = 0.0;
    double measured_latency_ms = 0.0;
    double val_loss = 0.0;
    std::optional<double> bleu;

    bool operator==(const OperatingPoint&) const = default;
};

struct OperatingLibrary {
    std::vector<OperatingPoint> points;            // sorted by measured latency ascending
    std::vector<double> infeasible_constraints;    // budgets no config could satisfy

    bool operator==(const OperatingLibrary&) const = default;
};

// File format: JSON array of
// {constraint_ms, config, predicted_ms, measured_ms, val_loss, bleu?}.
void save_library(const OperatingLibrary& lib, const std::string& path);
OperatingLibrary load_library(const std::string& path);

void to_json(nlohmann::json& j, const OperatingPoint& p);
void from_json(const nlohmann::json& j, OperatingPoint& p);

}  // namespace dynhat
