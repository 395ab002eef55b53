#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "dynhat/elastic_model.hpp"
#include "dynhat/operating_library.hpp"

namespace dynhat {

/// Among points with measured latency within the budget, the one with the
/// lowest validation loss (ties toward lower latency). When nothing fits,
/// the lowest-latency point is returned with the violation flag set. Throws
/// on an empty library.
std::pair<const OperatingPoint*, bool> select_point(const OperatingLibrary& library,
                                                    double constraint_ms);

struct ControllerEvent {
    double t_ms = 0.0;             // since controller start
    double constraint_ms = 0.0;
    std::uint64_t chosen_config_hash = 0;
    double chosen_measured_ms = 0.0;
    int chosen_decoder_layers = 0;
    double switch_time_ms = 0.0;   // 0 when the selection was already active
    bool violation = false;
};

void to_json(nlohmann::json& j, const ControllerEvent& e);

struct ControllerStats {
    std::size_t n_events = 0;
    std::size_t n_switches = 0;
    std::size_t n_violations = 0;
    double active_measured_ms = 0.0;
    double active_val_loss = 0.0;
    int active_decoder_layers = 0;
};

/// The run-time controller: owns the operating library and a reference to
/// the resident trained bank, switches the active architecture when the
/// latency budget changes, and serves translations.
///
/// Concurrency: selection/switching are serialized internally; translate()
/// may be called from any number of threads concurrently. A switch installs
/// the new view atomically with respect to request start boundaries, and
/// requests already running finish on the view they started with.
class Controller {
  public:
    /// The library is sorted by measured latency; the lowest-latency point
    /// starts active. Throws on an empty library.
    Controller(std::shared_ptr<const SuperWeights> bank, OperatingLibrary library);

    const OperatingLibrary& library() const { return library_; }
    OperatingPoint active_point() const;

    /// Re-slices the bank to `point` (which must be a library member) and
    /// installs the view. Returns the wall-clock switch time in ms. No
    /// training, no weight copy, no file I/O.
    double switch_active(const OperatingPoint& point);

    /// select_point + switch_active when the selection differs from the
    /// active point; appends and returns the log entry either way.
    ControllerEvent handle_constraint_event(double constraint_ms);

    /// Greedy translation through the active view.
    std::vector<int> translate_current(std::span<const int> src_tokens, int max_len = 64) const;

    std::vector<ControllerEvent> event_log() const;
    ControllerStats stats() const;

  private:
    struct Active {
        SubModelView view;
        OperatingPoint point;
    };
    std::shared_ptr<const Active> snapshot() const;
    double install(const OperatingPoint& point);

    std::shared_ptr<const SuperWeights> bank_;
    OperatingLibrary library_;
    mutable std::mutex mu_;                 // guards active_ swap and the log
    std::shared_ptr<const Active> active_;
    std::vector<ControllerEvent> log_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace dynhat
